"""Command-line front end.

Commands: ``eigenmodes``, ``simulate``, ``solve``, ``benchmark``,
``report``. Exit codes follow sysexits conventions: 0 success, 2 data
error (parse, topology, shape, schema), 3 numeric failure (convergence,
singular systems), 64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    build_forward,
    build_mesh,
    build_solvers,
    load_config,
    run_benchmark,
    write_report,
    write_results,
)
from .errors import (
    ConvergenceError,
    DegenerateError,
    EsiError,
    LimitError,
    LinAlgError,
    NumericalError,
)
from .io import load_vector, save_matrix, save_vector, write_manifest
from .lbo import assemble_lbo, eigenmodes
from .mesh import load_mesh
from .simulate import save_trial

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; we reserve that
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="esikit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"esikit {__version__}")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config base seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for benchmark cells")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigenmodes", help="surface eigenmodes of a mesh")
    p.add_argument("mesh", help="OFF/PLY surface file")
    p.add_argument("--modes", type=int, required=True, help="number of modes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")

    p = sub.add_parser("simulate", help="generate synthetic trial archives")
    p.add_argument("config", help="benchmark INI config")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("solve", help="solve one sensor vector with each method")
    p.add_argument("config", help="benchmark INI config (mesh/leadfield/methods)")
    p.add_argument("data", help="sensor VEC file")
    p.add_argument("--noise-power", type=float, default=None,
                   help="per-sensor noise power for beta='auto'")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("benchmark", help="run the SNR-sweep benchmark grid")
    p.add_argument("config", help="benchmark INI config")
    p.add_argument("--out", default=None, help="override the config output dir")

    p = sub.add_parser("report", help="plot-ready curves from a results CSV")
    p.add_argument("results", help="long-format results.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--snr-focus", type=float, default=5.0,
                   help="SNR for the per-method bar table")
    return parser


def cmd_eigenmodes(args):
    if args.modes < 1:
        raise UsageError("--modes must be >= 1")
    mesh = load_mesh(args.mesh)
    result = eigenmodes(assemble_lbo(mesh), args.modes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "bin" if args.format == "bin" else "csv"
    save_vector(out / f"eigenvalues.{suffix}", result.eigenvalues, fmt=args.format)
    save_matrix(out / f"eigenmodes.{suffix}", result.eigenvectors, fmt=args.format)
    write_manifest(
        out / "manifest.txt",
        {
            "mesh": args.mesh,
            "mesh_fingerprint": mesh.fingerprint(),
            "modes": args.modes,
            "mass_orthonormal": result.mass_orthonormal,
        },
    )
    if args.verbose:
        print(f"wrote {args.modes} modes to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    mesh = build_mesh(cfg)
    fm = build_forward(cfg, mesh)
    from .benchmark import _noise_covariance, _trial_source  # shared trial paths
    from .simulate import NoiseSpec, make_trial

    needs_cov = any(k == "realistic-covariance" for k in cfg.noise_kinds)
    covariance = _noise_covariance(cfg, fm) if needs_cov else None
    out = Path(args.out)
    count = 0
    for ni, noise_kind in enumerate(cfg.noise_kinds):
        for si, snr in enumerate(cfg.snr_db):
            for trial in range(cfg.trials):
                seq = np.random.SeedSequence(entropy=(cfg.base_seed, ni, si, trial))
                center_seed, noise_seed = (int(s) for s in seq.generate_state(2, np.uint64))
                global_trial = (ni * len(cfg.snr_db) + si) * cfg.trials + trial
                source = _trial_source(
                    cfg, mesh, np.random.default_rng(center_seed), global_trial
                )
                spec = NoiseSpec(
                    kind=noise_kind, snr_db=snr, seed=noise_seed,
                    covariance=covariance if noise_kind == "realistic-covariance" else None,
                    normalization=cfg.normalization,
                )
                record = make_trial(fm, source, spec)
                save_trial(out / f"{noise_kind}_snr{snr:+g}_trial{trial:03d}", record)
                count += 1
    if args.verbose:
        print(f"wrote {count} trials to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args):
    cfg = load_config(args.config)
    mesh = build_mesh(cfg)
    fm = build_forward(cfg, mesh)
    y = load_vector(args.data)
    solvers = build_solvers(cfg, mesh, fm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    statuses = {}
    succeeded = 0
    for method, solver in solvers.items():
        tag = method.lower().replace("-", "_")
        try:
            sol = solver.solve(y, noise_power=args.noise_power)
        except (EsiError, ValueError) as exc:
            statuses[f"{tag}_status"] = f"error:{type(exc).__name__}: {exc}"
            continue
        save_vector(out / f"solution_{tag}.vec", sol.values)
        statuses[f"{tag}_status"] = "ok"
        statuses[f"{tag}_beta"] = repr(sol.beta_used)
        statuses[f"{tag}_residual_norm"] = repr(sol.residual_norm)
        succeeded += 1
    statuses["data"] = args.data
    statuses["methods"] = ",".join(cfg.methods)
    write_manifest(out / "manifest.txt", statuses)
    if succeeded == 0:
        print("esikit solve: every method failed; see manifest", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_benchmark(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out is not None:
        cfg.output_dir = Path(args.out)
    progress = None
    if args.verbose:
        def progress(done, total):
            print(f"\resikit benchmark: {done}/{total} cells", end="", file=sys.stderr)
    rows, timings, summary, maps = run_benchmark(cfg, jobs=max(1, args.jobs),
                                                 progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    if all(r["status"] != "ok" for r in rows):
        print("esikit benchmark: all cells failed", file=sys.stderr)
        return EXIT_NUMERIC
    path = write_results(cfg.output_dir, cfg, rows, timings, summary, maps)
    if args.verbose:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args):
    written = write_report(args.results, args.out, snr_focus=args.snr_focus)
    if args.verbose:
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "eigenmodes": cmd_eigenmodes,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "benchmark": cmd_benchmark,
    "report": cmd_report,
}

_NUMERIC_ERRORS = (ConvergenceError, LinAlgError, NumericalError)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"esikit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LimitError as exc:
        print(f"esikit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"esikit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateError as exc:
        print(f"esikit: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EsiError, FileNotFoundError) as exc:
        print(f"esikit: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint():  # console_scripts hook
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
