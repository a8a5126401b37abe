"""Acceptance suite: one test per release criterion, pass/fail printed.

Run ``pytest -s tests/test_acceptance.py`` to see the per-criterion lines.
Every tolerance is pinned here; nothing is deferred to later calibration.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from esikit.basis import gbf_basis
from esikit.benchmark import BenchmarkConfig, run_benchmark
from esikit.forward import analytic_leadfield, fibonacci_sensors
from esikit.inverse import BasisMAP, ELORETA, MinimumNorm, SLORETA, build_prior
from esikit.lbo import assemble_lbo, eigenmodes
from esikit.mesh import make_icosphere
from esikit.metrics import localization_error, shape_error
from esikit.simulate import mix_at_snr, normalize_covariance, patch_source, realistic_noise


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        print(f"FAIL criterion {number}: {description}")
        raise
    print(f"PASS criterion {number}: {description}")


def test_criterion_01_sphere_spectrum():
    with criterion(1, "sphere-spectrum oracle, 2% per eigenvalue, < 5 s"):
        t0 = time.perf_counter()
        mesh = make_icosphere(3, 1.0)
        result = eigenmodes(assemble_lbo(mesh), 16)
        elapsed = time.perf_counter() - t0
        analytic = np.array([0.0] + [2.0] * 3 + [6.0] * 5 + [12.0] * 7)
        assert result.eigenvalues[0] <= 1e-8 * result.eigenvalues[-1]
        rel = np.abs(result.eigenvalues[1:] - analytic[1:]) / analytic[1:]
        assert rel.max() < 0.02
        assert elapsed < 5.0


def test_criterion_02_prior_formula():
    with criterion(2, "prior variances for weights {0,2,4} exact to 1e-12"):
        prior = build_prior(np.array([0.0, 2.0, 4.0]), epsilon_frac=0.1)
        np.testing.assert_allclose(
            prior.sigma_diag,
            [5.0, 1.0 / 2.2, 1.0 / 4.2],
            rtol=0.0,
            atol=1e-12,
        )


def test_criterion_03_noiseless_in_span_recovery():
    with criterion(3, "noiseless in-span recovery: error < 1e-3, SE < 0.01"):
        mesh = make_icosphere(3, 100.0)
        fm = analytic_leadfield(mesh, fibonacci_sensors(64, 120.0))
        basis = gbf_basis(mesh, 50)
        mass = assemble_lbo(mesh).mass
        patch = patch_source(mesh, 123, 60.0).values
        theta_star = basis.A.T @ (mass * patch)  # mass projection onto the span
        x_star = basis.A @ theta_star
        y = fm.K @ x_star
        probe = BasisMAP(basis=basis, beta=1.0).fit(fm)
        solver = BasisMAP(basis=basis, beta=1e-10 * probe.gram_scale_).fit(fm)
        sol = solver.solve(y)
        rel_err = np.linalg.norm(sol.values - x_star) / np.linalg.norm(x_star)
        assert rel_err < 1e-3
        assert shape_error(sol.values, x_star) < 0.01


def test_criterion_04_mne_equivalence():
    with criterion(4, "identity-basis MAP matches MNE to 1e-9 on 50 instances"):
        rng = np.random.default_rng(404)
        for _ in range(50):
            k = rng.standard_normal((8, 20))
            y = rng.standard_normal(8)
            beta = float(rng.uniform(0.01, 10.0)) * np.trace(k @ k.T) / 8.0
            mne = MinimumNorm(beta=beta).fit(k).solve(y).values
            ridge = (
                BasisMAP(basis=np.eye(20), prior=np.ones(20), beta=beta)
                .fit(k)
                .solve(y)
                .values
            )
            assert np.linalg.norm(mne - ridge) <= 1e-9 * np.linalg.norm(mne)


def test_criterion_05_sloreta_zero_localization():
    with criterion(5, "sLORETA zero localization error on all 162 vertices"):
        mesh = make_icosphere(2, 100.0)
        fm = analytic_leadfield(mesh, fibonacci_sensors(64, 120.0))
        probe = SLORETA(beta=1.0).fit(fm)
        solver = SLORETA(beta=1e-8 * probe.gram_scale_).fit(fm)
        for j in range(mesh.n_vertices):
            truth = np.zeros(mesh.n_vertices)
            truth[j] = 1.0
            values = solver.solve(fm.K[:, j]).values
            assert localization_error(values, truth, mesh) == 0.0


def test_criterion_06_snr_exactness():
    with criterion(6, "mix_at_snr within 1e-6 dB on 1000 cases in [-20, 20]"):
        rng = np.random.default_rng(606)
        for _ in range(1000):
            clean = rng.standard_normal(32)
            noise = rng.standard_normal(32)
            snr = float(rng.uniform(-20.0, 20.0))
            _, achieved = mix_at_snr(clean, noise, snr)
            assert abs(achieved - snr) < 1e-6


def test_criterion_07_directional_benchmark():
    desc = (
        "GBF-MAP mean SE strictly below MNE/dSPM/sLORETA/MSP-MAP "
        "at SNR 0, 5, 10 on the desk-scale grid, < 10 min"
    )
    with criterion(7, desc):
        cfg = BenchmarkConfig(base_seed=20250811)
        cfg.validate()
        assert cfg.methods == (
            "GBF-MAP", "Harmonic-MAP", "MSP-MAP", "MNE", "dSPM", "sLORETA", "eLORETA"
        )
        assert cfg.noise_kinds == ("gaussian-iid",)
        assert cfg.snr_db == (-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0)
        assert cfg.trials >= 20
        t0 = time.perf_counter()
        rows, _, summary, _ = run_benchmark(cfg, jobs=1)
        elapsed = time.perf_counter() - t0
        assert elapsed < 600.0
        assert all(r["status"] == "ok" for r in rows)
        means = {
            (e["method"], float(e["snr_db"])): float(e["se_mean"]) for e in summary
        }
        for snr in (0.0, 5.0, 10.0):
            gbf = means[("GBF-MAP", snr)]
            for competitor in ("MNE", "dSPM", "sLORETA", "MSP-MAP"):
                assert gbf < means[(competitor, snr)], (
                    f"GBF-MAP SE {gbf} not below {competitor} "
                    f"{means[(competitor, snr)]} at SNR {snr}"
                )


def test_criterion_08_realistic_noise_covariance():
    with criterion(8, "Monte-Carlo covariance within 5% Frobenius of target"):
        rng = np.random.default_rng(808)
        m = 8
        a = rng.standard_normal((m, m))
        cov = a @ a.T + m * np.eye(m)
        target = normalize_covariance(cov, "correlation")
        samples = realistic_noise(cov, 818, n_samples=10**5)
        empirical = samples @ samples.T / samples.shape[1]
        rel = np.linalg.norm(empirical - target) / np.linalg.norm(target)
        assert rel < 0.05


def test_criterion_09_benchmark_determinism(tmp_path):
    with criterion(9, "byte-identical long-format CSVs across reruns"):
        from esikit.cli import EXIT_OK, main

        config_text = (
            "[mesh]\nicosphere_subdivisions = 1\nicosphere_radius_mm = 100\n"
            "[leadfield]\nkind = analytic\nsensors = fibonacci:24:130\n"
            "[methods]\nnames = GBF-MAP, MNE, eLORETA\ngbf_modes = 12\n"
            "[sources]\nkind = patch\nfwhm_mm = 60\n"
            "[noise]\nkinds = gaussian-iid, realistic-covariance\n"
            "[grid]\nsnr_db = -5, 5\ntrials = 2\nbase_seed = 909\n"
        )
        cfg_path = tmp_path / "bench.ini"
        cfg_path.write_text(config_text)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(["benchmark", str(cfg_path), "--out", str(out1)]) == EXIT_OK
        assert main(["benchmark", str(cfg_path), "--out", str(out2)]) == EXIT_OK
        blob1 = (out1 / "results.csv").read_bytes()
        blob2 = (out2 / "results.csv").read_bytes()
        assert blob1 == blob2


def test_criterion_10_eloreta_convergence():
    with criterion(10, "eLORETA fixed point < 1e-8 within 100 iterations"):
        mesh = make_icosphere(2, 100.0)
        fm = analytic_leadfield(mesh, fibonacci_sensors(64, 120.0))
        solver = ELORETA(beta=1.0, tol=1e-8, max_iter=100).fit(fm)
        beta = 0.01 * solver.gram_scale_
        _, n_iter, last_change = solver.weights_fixed_point(beta)
        assert n_iter <= 100
        assert last_change < 1e-8
