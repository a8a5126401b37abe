"""SNR-sweep benchmark: grid definition, execution, summaries.

The experiment grid is (noise kind) x (SNR) x (trial); every method sees
the same trial within a cell, so method comparisons are paired. Each
trial derives its own seeds from (base_seed, noise index, snr index,
trial index), which makes the whole run a pure function of the config:
re-running produces byte-identical result rows. Wall-clock timings go to
a separate file because they are the one honest non-deterministic output.
"""

from __future__ import annotations

import configparser
import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import gbf_basis, harmonic_basis, msp_basis
from .errors import EsiError, ParseError, SchemaError
from .forward import analytic_leadfield, fibonacci_sensors, load_leadfield
from .inverse import METHOD_CHOICES, make_solver
from .io import load_matrix, load_sensor_meta, save_vector, write_manifest
from .mesh import load_mesh, make_icosphere
from .metrics import evaluate
from .simulate import (
    NoiseSpec,
    import_source_map,
    make_trial,
    patch_source,
    structured_covariance,
)

RESULT_COLUMNS = (
    "method", "family", "s", "noise", "snr_db", "trial", "seed",
    "beta_used", "se", "mcc", "le_mm", "sd_mm", "status",
)
SUMMARY_METRICS = ("se", "mcc", "le_mm", "sd_mm")
_FAMILY = {"GBF-MAP": "GBF", "Harmonic-MAP": "Harmonic", "MSP-MAP": "MSP"}


def _fmt(x) -> str:
    return repr(float(x))


def resolve_path(value, base_dir):
    """Resolve a config path: absolute, else relative to the config file,
    else relative to ESI_DATA_DIR, else the cwd."""
    p = Path(value)
    if p.is_absolute():
        return p
    for root in (base_dir, os.environ.get("ESI_DATA_DIR"), Path.cwd()):
        if root is None:
            continue
        candidate = Path(root) / p
        if candidate.exists():
            return candidate
    return Path(base_dir) / p


@dataclass
class BenchmarkConfig:
    """Validated benchmark description (see README for the INI keys)."""

    mesh_path: Path | None = None
    icosphere_subdivisions: int = 3
    icosphere_radius_mm: float = 100.0
    hemisphere_sidecar: Path | None = None

    leadfield_kind: str = "analytic"
    sensor_layout: str = "fibonacci:64:120"
    conductivity_s_per_mm: float = 3.3e-4
    leadfield_matrix: Path | None = None
    sensor_meta: Path | None = None

    methods: tuple = METHOD_CHOICES
    gbf_modes: int = 100
    per_hemisphere: bool = True
    harmonic_degree: int = 6
    msp_modes: int = 49
    msp_weight_mode: str = "uniform"
    beta: object = "auto"
    epsilon_frac: float = 0.1
    eloreta_tol: float = 1e-8
    eloreta_max_iter: int = 100

    source_kind: str = "patch"
    fwhm_mm: float = 60.0
    amplitude: float = 1.0
    centers: tuple = ()  # empty = random per trial
    source_files: tuple = ()

    noise_kinds: tuple = ("gaussian-iid",)
    covariance: str = "synthetic"
    kernel_scale_mm: float = 40.0
    normalization: str = "correlation"

    snr_db: tuple = (-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0)
    trials: int = 20
    base_seed: int = 1234

    output_dir: Path = Path("benchmark-out")
    save_maps: int = 0

    def validate(self):
        if not self.snr_db:
            raise ParseError("grid: snr_db must be non-empty")
        if self.trials < 1:
            raise ParseError("grid: trials must be >= 1")
        if not self.methods:
            raise ParseError("methods: names must be non-empty")
        canon = {m.lower(): m for m in METHOD_CHOICES}
        bad = [m for m in self.methods if m.lower() not in canon]
        if bad:
            raise ParseError(
                f"methods: unknown {bad}; valid methods: {', '.join(METHOD_CHOICES)}"
            )
        self.methods = tuple(canon[m.lower()] for m in self.methods)
        from .simulate import NOISE_KINDS

        if not self.noise_kinds:
            raise ParseError("noise: kinds must be non-empty")
        bad_noise = [k for k in self.noise_kinds if k not in NOISE_KINDS]
        if bad_noise:
            raise ParseError(f"noise: unknown kinds {bad_noise}; valid: {NOISE_KINDS}")
        if self.leadfield_kind not in ("analytic", "file"):
            raise ParseError(f"leadfield: unknown kind {self.leadfield_kind!r}")
        if self.source_kind not in ("patch", "files"):
            raise ParseError(f"sources: unknown kind {self.source_kind!r}")
        if self.source_kind == "files" and not self.source_files:
            raise ParseError("sources: kind=files requires files=")
        for attr in ("mesh_path", "hemisphere_sidecar", "leadfield_matrix", "sensor_meta"):
            p = getattr(self, attr)
            if p is not None and not Path(p).exists():
                raise ParseError(f"{attr}: {p} does not exist")
        for p in self.source_files:
            if not Path(p).exists():
                raise ParseError(f"sources: {p} does not exist")
        if self.covariance not in ("synthetic",) and not Path(self.covariance).exists():
            raise ParseError(f"noise: covariance file {self.covariance} does not exist")
        return self


def _split(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def load_config(path) -> BenchmarkConfig:
    """Parse and validate an INI benchmark config."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"config {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    base = path.resolve().parent
    cfg = BenchmarkConfig()

    def geti(section, key, default):
        return parser.getint(section, key, fallback=default)

    def getf(section, key, default):
        return parser.getfloat(section, key, fallback=default)

    def gets(section, key, default=None):
        return parser.get(section, key, fallback=default)

    if gets("mesh", "path"):
        cfg.mesh_path = resolve_path(gets("mesh", "path"), base)
    cfg.icosphere_subdivisions = geti("mesh", "icosphere_subdivisions", cfg.icosphere_subdivisions)
    cfg.icosphere_radius_mm = getf("mesh", "icosphere_radius_mm", cfg.icosphere_radius_mm)
    if gets("mesh", "hemisphere_sidecar"):
        cfg.hemisphere_sidecar = resolve_path(gets("mesh", "hemisphere_sidecar"), base)

    cfg.leadfield_kind = gets("leadfield", "kind", cfg.leadfield_kind)
    cfg.sensor_layout = gets("leadfield", "sensors", cfg.sensor_layout)
    cfg.conductivity_s_per_mm = getf("leadfield", "conductivity_s_per_mm", cfg.conductivity_s_per_mm)
    if gets("leadfield", "matrix"):
        cfg.leadfield_matrix = resolve_path(gets("leadfield", "matrix"), base)
    if gets("leadfield", "sensor_meta"):
        cfg.sensor_meta = resolve_path(gets("leadfield", "sensor_meta"), base)

    if gets("methods", "names") is not None:
        cfg.methods = _split(gets("methods", "names"))
    cfg.gbf_modes = geti("methods", "gbf_modes", cfg.gbf_modes)
    cfg.per_hemisphere = parser.getboolean("methods", "per_hemisphere", fallback=cfg.per_hemisphere)
    cfg.harmonic_degree = geti("methods", "harmonic_degree", cfg.harmonic_degree)
    cfg.msp_modes = geti("methods", "msp_modes", cfg.msp_modes)
    cfg.msp_weight_mode = gets("methods", "msp_weight_mode", cfg.msp_weight_mode)
    beta = gets("methods", "beta", "auto")
    cfg.beta = "auto" if beta == "auto" else float(beta)
    cfg.epsilon_frac = getf("methods", "epsilon_frac", cfg.epsilon_frac)
    cfg.eloreta_tol = getf("methods", "eloreta_tol", cfg.eloreta_tol)
    cfg.eloreta_max_iter = geti("methods", "eloreta_max_iter", cfg.eloreta_max_iter)

    cfg.source_kind = gets("sources", "kind", cfg.source_kind)
    cfg.fwhm_mm = getf("sources", "fwhm_mm", cfg.fwhm_mm)
    cfg.amplitude = getf("sources", "amplitude", cfg.amplitude)
    centers = gets("sources", "centers", "random")
    cfg.centers = () if centers.strip() == "random" else tuple(int(c) for c in _split(centers))
    if gets("sources", "files"):
        cfg.source_files = tuple(resolve_path(f, base) for f in _split(gets("sources", "files")))

    if gets("noise", "kinds") is not None:
        cfg.noise_kinds = _split(gets("noise", "kinds"))
    cov = gets("noise", "covariance", cfg.covariance)
    cfg.covariance = cov if cov == "synthetic" else str(resolve_path(cov, base))
    cfg.kernel_scale_mm = getf("noise", "kernel_scale_mm", cfg.kernel_scale_mm)
    cfg.normalization = gets("noise", "normalization", cfg.normalization)

    if gets("grid", "snr_db") is not None:
        cfg.snr_db = tuple(float(v) for v in _split(gets("grid", "snr_db")))
    cfg.trials = geti("grid", "trials", cfg.trials)
    cfg.base_seed = geti("grid", "base_seed", cfg.base_seed)

    if gets("output", "dir"):
        cfg.output_dir = Path(gets("output", "dir"))
        if not cfg.output_dir.is_absolute():
            cfg.output_dir = base / cfg.output_dir
    cfg.save_maps = geti("output", "save_maps", cfg.save_maps)
    return cfg.validate()


def build_mesh(cfg: BenchmarkConfig):
    if cfg.mesh_path is not None:
        return load_mesh(cfg.mesh_path, hemisphere_path=cfg.hemisphere_sidecar)
    return make_icosphere(cfg.icosphere_subdivisions, cfg.icosphere_radius_mm)


def build_forward(cfg: BenchmarkConfig, mesh):
    if cfg.leadfield_kind == "file":
        if cfg.leadfield_matrix is None or cfg.sensor_meta is None:
            raise ParseError("leadfield: kind=file requires matrix= and sensor_meta=")
        return load_leadfield(cfg.leadfield_matrix, cfg.sensor_meta, mesh=mesh)
    layout = cfg.sensor_layout
    if layout.startswith("fibonacci:"):
        parts = layout.split(":")
        if len(parts) != 3:
            raise ParseError("leadfield: sensors=fibonacci:<count>:<radius_mm>")
        sensors = fibonacci_sensors(int(parts[1]), float(parts[2]), center=mesh.centroid())
    elif layout.startswith("file:"):
        _, positions = load_sensor_meta(resolve_path(layout[5:], Path.cwd()))
        sensors = positions
    else:
        raise ParseError(f"leadfield: unknown sensor layout {layout!r}")
    return analytic_leadfield(mesh, sensors, conductivity=cfg.conductivity_s_per_mm)


def build_solvers(cfg: BenchmarkConfig, mesh, fm):
    """One fitted solver per requested method (shared, read-only)."""
    solvers = {}
    kwargs = dict(beta=cfg.beta, epsilon_frac=cfg.epsilon_frac,
                  tol=cfg.eloreta_tol, max_iter=cfg.eloreta_max_iter)
    for method in cfg.methods:
        basis = None
        if method == "GBF-MAP":
            basis = gbf_basis(mesh, cfg.gbf_modes, per_hemisphere=cfg.per_hemisphere)
        elif method == "Harmonic-MAP":
            basis = harmonic_basis(mesh, cfg.harmonic_degree, per_hemisphere=cfg.per_hemisphere)
        elif method == "MSP-MAP":
            basis = msp_basis(fm, np.eye(fm.n_sensors), cfg.msp_modes,
                              weight_mode=cfg.msp_weight_mode)
        solvers[method] = make_solver(method, basis=basis, **kwargs).fit(fm)
    return solvers


def _noise_covariance(cfg, fm):
    if cfg.covariance == "synthetic":
        return structured_covariance(fm.sensor_positions, scale_mm=cfg.kernel_scale_mm)
    return load_matrix(cfg.covariance)


def _trial_source(cfg, mesh, rng, global_trial):
    if cfg.source_kind == "files":
        path = cfg.source_files[global_trial % len(cfg.source_files)]
        return import_source_map(path, mesh)
    if cfg.centers:
        center = cfg.centers[global_trial % len(cfg.centers)]
    else:
        center = int(rng.integers(0, mesh.n_vertices))
    return patch_source(mesh, center, cfg.fwhm_mm, amplitude=cfg.amplitude)


def run_cell(cfg, mesh, fm, solvers, covariance, noise_idx, snr_idx, trial):
    """All method rows for one (noise, snr, trial) cell."""
    noise_kind = cfg.noise_kinds[noise_idx]
    snr = cfg.snr_db[snr_idx]
    seq = np.random.SeedSequence(entropy=(cfg.base_seed, noise_idx, snr_idx, trial))
    center_seed, noise_seed = (int(s) for s in seq.generate_state(2, np.uint64))
    global_trial = (noise_idx * len(cfg.snr_db) + snr_idx) * cfg.trials + trial
    source = _trial_source(cfg, mesh, np.random.default_rng(center_seed), global_trial)
    spec = NoiseSpec(
        kind=noise_kind,
        snr_db=snr,
        seed=noise_seed,
        covariance=covariance if noise_kind == "realistic-covariance" else None,
        normalization=cfg.normalization,
    )
    record = make_trial(fm, source, spec)
    noise_power = float(np.mean(record.clean_sensors**2)) / 10.0 ** (snr / 10.0)
    rows, timings, maps = [], [], {}
    if cfg.save_maps and trial < cfg.save_maps:
        maps["truth"] = source.values
    for method in cfg.methods:
        solver = solvers[method]
        row = {
            "method": method,
            "family": _FAMILY.get(method, "-"),
            "s": getattr(getattr(solver, "basis", None), "n_functions", "-"),
            "noise": noise_kind,
            "snr_db": _fmt(snr),
            "trial": trial,
            "seed": noise_seed,
            "beta_used": "",
            "se": "", "mcc": "", "le_mm": "", "sd_mm": "",
            "status": "ok",
        }
        t0 = time.perf_counter()
        try:
            sol = solver.solve(record.noisy_sensors, noise_power=noise_power)
            report = evaluate(sol.values, source.values, mesh)
            row.update(
                beta_used=_fmt(sol.beta_used),
                se=_fmt(report.se),
                mcc=_fmt(report.mcc),
                le_mm=_fmt(report.le_mm),
                sd_mm=_fmt(report.sd_mm),
            )
            if cfg.save_maps and trial < cfg.save_maps:
                maps[method] = sol.values
        except EsiError as exc:
            row["status"] = f"error:{type(exc).__name__}"
        timings.append(
            {"method": method, "noise": noise_kind, "snr_db": _fmt(snr),
             "trial": trial, "wall_ms": f"{(time.perf_counter() - t0) * 1e3:.3f}"}
        )
        rows.append(row)
    return rows, timings, maps


def run_benchmark(cfg: BenchmarkConfig, jobs=1, progress=None):
    """Execute the grid; returns (rows, timings, summary, maps_by_cell).

    Rows come back in deterministic grid order regardless of ``jobs``.
    """
    mesh = build_mesh(cfg)
    fm = build_forward(cfg, mesh)
    solvers = build_solvers(cfg, mesh, fm)
    needs_cov = any(k == "realistic-covariance" for k in cfg.noise_kinds)
    covariance = _noise_covariance(cfg, fm) if needs_cov else None

    cells = [
        (ni, si, t)
        for ni in range(len(cfg.noise_kinds))
        for si in range(len(cfg.snr_db))
        for t in range(cfg.trials)
    ]

    def work(cell):
        return run_cell(cfg, mesh, fm, solvers, covariance, *cell)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, cells))
    else:
        results = []
        for idx, cell in enumerate(cells):
            results.append(work(cell))
            if progress is not None:
                progress(idx + 1, len(cells))

    rows, timings, maps_by_cell = [], [], {}
    for cell, (cell_rows, cell_timings, cell_maps) in zip(cells, results):
        rows.extend(cell_rows)
        timings.extend(cell_timings)
        if cell_maps:
            maps_by_cell[cell] = cell_maps
    return rows, timings, summarize(rows), maps_by_cell


def summarize(rows):
    """Per-(method, noise, snr) means and standard errors over ok rows."""
    groups = {}
    for row in rows:
        groups.setdefault((row["method"], row["noise"], row["snr_db"]), []).append(row)
    summary = []
    for (method, noise, snr), members in groups.items():
        ok = [r for r in members if r["status"] == "ok"]
        entry = {"method": method, "noise": noise, "snr_db": snr,
                 "n_ok": len(ok), "n_total": len(members)}
        for metric in SUMMARY_METRICS:
            values = np.array([float(r[metric]) for r in ok])
            if values.size:
                entry[f"{metric}_mean"] = _fmt(values.mean())
                entry[f"{metric}_stderr"] = _fmt(
                    values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else 0.0
                )
            else:
                entry[f"{metric}_mean"] = ""
                entry[f"{metric}_stderr"] = ""
        summary.append(entry)
    return summary


def write_results(out_dir, cfg, rows, timings, summary, maps_by_cell):
    """Emit results.csv, summary.csv, timings.csv, manifest, sample maps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "results.csv", "w", newline="\n", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    summary_cols = ["method", "noise", "snr_db", "n_ok", "n_total"]
    for metric in SUMMARY_METRICS:
        summary_cols += [f"{metric}_mean", f"{metric}_stderr"]
    with open(out_dir / "summary.csv", "w", newline="\n", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=summary_cols, lineterminator="\n")
        writer.writeheader()
        writer.writerows(summary)

    with open(out_dir / "timings.csv", "w", newline="\n", encoding="ascii") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=("method", "noise", "snr_db", "trial", "wall_ms"),
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(timings)

    for (ni, si, trial), maps in maps_by_cell.items():
        cell_dir = (
            out_dir / "maps" / cfg.noise_kinds[ni]
            / f"snr{cfg.snr_db[si]:+g}" / f"trial{trial:03d}"
        )
        cell_dir.mkdir(parents=True, exist_ok=True)
        for name, values in maps.items():
            save_vector(cell_dir / f"{name}.vec", values)

    write_manifest(
        out_dir / "manifest.txt",
        {
            "methods": ",".join(cfg.methods),
            "noise_kinds": ",".join(cfg.noise_kinds),
            "snr_db": ",".join(_fmt(v) for v in cfg.snr_db),
            "trials_per_condition": cfg.trials,
            "base_seed": cfg.base_seed,
            "source_kind": cfg.source_kind,
            "fwhm_mm": _fmt(cfg.fwhm_mm),
            "assumption_trials": "trial count and patch-center sampling are "
                                 "defaults, not reproduced from prior work",
            "rows": len(rows),
        },
    )
    return out_dir / "results.csv"


# ---------------------------------------------------------------------------
# Report generation (plot-ready data files)

REQUIRED_REPORT_COLUMNS = {"method", "noise", "snr_db", "se", "mcc", "le_mm", "sd_mm", "status"}


def load_results_csv(path):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"results file {path} does not exist")
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = REQUIRED_REPORT_COLUMNS - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def write_report(results_csv, out_dir, snr_focus=5.0):
    """Per-metric SNR-curve files (one column per method) plus a bar table
    at the focus SNR, both gnuplot-ready whitespace tables."""
    rows = load_results_csv(results_csv)
    ok_rows = [r for r in rows if r["status"] == "ok"]
    if not ok_rows:
        raise SchemaError(f"{results_csv}: no successful rows to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    methods = sorted({r["method"] for r in ok_rows})
    noises = sorted({r["noise"] for r in ok_rows})
    written = []
    for noise in noises:
        sub = [r for r in ok_rows if r["noise"] == noise]
        snrs = sorted({float(r["snr_db"]) for r in sub})
        for metric in SUMMARY_METRICS:
            path = out_dir / f"curve_{metric}_{noise}.dat"
            with open(path, "w", newline="\n", encoding="ascii") as fh:
                fh.write("# snr_db " + " ".join(methods) + "\n")
                for snr in snrs:
                    cells = []
                    for method in methods:
                        vals = [
                            float(r[metric]) for r in sub
                            if r["method"] == method and float(r["snr_db"]) == snr
                        ]
                        cells.append(_fmt(np.mean(vals)) if vals else "nan")
                    fh.write(_fmt(snr) + " " + " ".join(cells) + "\n")
            written.append(path)
        focus = [r for r in sub if float(r["snr_db"]) == snr_focus]
        if focus:
            path = out_dir / f"bars_snr{snr_focus:g}_{noise}.dat"
            with open(path, "w", newline="\n", encoding="ascii") as fh:
                fh.write("# method " + " ".join(SUMMARY_METRICS) + "\n")
                for method in methods:
                    vals = [r for r in focus if r["method"] == method]
                    if not vals:
                        continue
                    cells = [
                        _fmt(np.mean([float(r[m]) for r in vals]))
                        for m in SUMMARY_METRICS
                    ]
                    fh.write(method + " " + " ".join(cells) + "\n")
            written.append(path)
    return written
