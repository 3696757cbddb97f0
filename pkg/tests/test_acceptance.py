"""Acceptance criteria at their stated scales.

Each test records one ``PASS``/``FAIL`` line, echoed in the pytest summary
(and printed directly under ``-s``).
"""

import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from randmag.ensemble import (
    ExperimentConfig,
    ids_estimate,
    lifshitz_diagnostic,
    localization_diagnostics,
    wegner_experiment,
)
from randmag.gauge import FluxField
from randmag.hamiltonian import assemble_from_flux, eigendecompose, spectral_bottom
from randmag.lattice import BoxRegion
from randmag.regularity import square_constant, scaling_study
from randmag.verify import SUITES, run_suite

B = np.pi / 4


def report(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{label}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def four_cycle_oracle(omega):
    H = 4 * np.eye(4, dtype=complex)
    for a in range(4):
        b = (a + 1) % 4
        H[a, b] = H[b, a] = -1
    H[3, 0] = -np.exp(1j * omega)
    H[0, 3] = np.conj(H[3, 0])
    return np.linalg.eigvalsh(H)


def test_1_identity_suites():
    t0 = time.perf_counter()
    names = ["gauge", "symmetry", "current", "hf", "lemma41", "ylambda"]
    results = [run_suite(n, L_list=(2, 3, 4), trials=100, b=B) for n in names]
    dt = time.perf_counter() - t0
    ok = all(r.passed for r in results) and all(r.trials == 300 for r in results) and dt <= 120
    margins = " ".join(f"{r.name}={r.worst_margin:.2e}" for r in results)
    report("1 identity suites", ok, f"{margins} runtime={dt:.1f}s")
    for r in results:
        assert r.passed, r.line()
    assert dt <= 120


def test_2_single_plaquet():
    box = BoxRegion.from_corners((0, 0), (1, 1))
    want = np.array([2.15224, 3.23463, 4.76537, 5.84776])
    oracle = four_cycle_oracle(np.pi / 2)
    got = eigendecompose(assemble_from_flux(FluxField.constant(box, np.pi / 2))).eigenvalues
    err = max(np.abs(got - want).max(), np.abs(oracle - want).max())
    ok = err <= 1e-5
    report("2 single plaquet", ok, f"max error {err:.1e}")
    assert ok


def test_3_regularity():
    t0 = time.perf_counter()
    rows = scaling_study([3, 5, 7], 100, 1.0, B)
    dt = time.perf_counter() - t0
    certified = all(r["certified"] == r["bound_ok"] == r["pairs"] > 0 for r in rows)
    floors = [r["floor_min"] for r in rows]
    # uniform positive floor: no drop by more than a factor 2 from the smallest L
    no_decline = min(floors) > 0 and min(floors[1:]) >= 0.5 * floors[0]
    ok = certified and no_decline and dt <= 600
    detail = ", ".join(f"L={r['L']}: {r['certified']}/{r['pairs']} floor={r['floor_min']:.3f}" for r in rows)
    report("3 regularity", ok, f"c={square_constant(1.0):.3f} {detail} runtime={dt:.1f}s")
    assert certified and no_decline and dt <= 600


def test_4_wegner_linearity():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(L_list=(6,), E_grid=(0.5,), eta_grid=(0.02, 0.04, 0.08), samples=400, b=B)
    table = wegner_experiment(cfg)
    dt = time.perf_counter() - t0
    ratios = table.doubling_ratios(6, 0.5)
    C = table.fitted_C()
    slack = min(C * r.eta * r.L**8 / r.mean_count for r in table.rows if r.mean_count > 0) if any(
        r.mean_count > 0 for r in table.rows) else float("inf")
    within = [
        np.isfinite(d["ratio"]) and d["ratio"] + 2 * d["stderr"] >= 1.6 and d["ratio"] - 2 * d["stderr"] <= 2.4
        for d in ratios
    ]
    bound_ok = all(r.mean_count <= C * r.eta * r.L**8 for r in table.rows)
    ok = all(within) and bound_ok and dt <= 900
    means = ", ".join(f"eta={r.eta}: {r.mean_count:.4f}" for r in table.rows)
    rs = ", ".join(f"{d['ratio']:.3f}+-{d['stderr']:.3f}" for d in ratios)
    report("4 wegner", ok, f"means [{means}] ratios [{rs}] C_hat={C:.3e} slack={slack:.1e} runtime={dt:.1f}s")
    assert bound_ok
    assert all(within), f"doubling ratios {rs}: no eigenvalue reaches the windows at E=0.5"


def test_5_ids():
    E0 = spectral_bottom(B)
    low = np.arange(0.0, E0 - 0.05 + 1e-12, 0.005)
    grid = tuple(sorted(set(np.round(np.concatenate([low, np.linspace(0, 8, 161)]), 12))))
    cfg = ExperimentConfig(L_list=(10,), samples=100, b=B, E_grid=grid)
    c = ids_estimate(cfg)
    mono = bool(np.all(np.diff(c.k_hat) >= 0))
    k4 = float(c.k_hat[np.isclose(c.E_grid, 4.0)][0])
    tail = float(c.k_hat[c.E_grid <= E0 - 0.05].max())
    ok = mono and abs(k4 - 0.5) <= 0.02 and tail < 1e-3
    report("5 ids", ok, f"monotone={mono} k_hat(4)={k4:.4f} max k_hat(E<=E0-0.05)={tail:.1e}")
    assert ok


def localization_run():
    cfg = ExperimentConfig(L_list=(6, 10, 14), samples=20, b=1.4, n_states=5)
    return cfg, localization_diagnostics(cfg)


_LOC = {}


def _loc():
    if not _LOC:
        _LOC["v"] = localization_run()
    return _LOC["v"]


def test_6a_localization_ipr_and_lifshitz():
    cfg, rep = _loc()
    d = rep.ipr_by_L()
    spread = max(d.values()) / min(d.values())
    slope = rep.clean_volume_exponent()
    clean_ok = abs(slope + 1) <= 0.15
    ids = ids_estimate(ExperimentConfig(L_list=(10,), samples=50, b=1.4))
    rows = lifshitz_diagnostic(ids, 1.4)
    no_nan = all(r.ratio is not None and np.isfinite(r.ratio) for r in rows if 0 < r.k_hat < 1)
    ok = spread < 2 and clean_ok and no_nan and len(rows) > 0
    ipr = ", ".join(f"L={L}: {v:.4f}" for L, v in d.items())
    report("6 localization IPR", ok,
           f"disordered IPR [{ipr}] spread={spread:.2f}; clean IPR ~ N^{slope:.2f}; lifshitz rows={len(rows)} no_nan={no_nan}")
    assert ok


def test_6b_localization_exponential_fits():
    cfg, rep = _loc()
    frac = rep.sample_fit_fraction(0.9)
    per_state = rep.fit_fraction(0.9)
    ok = frac >= 0.8
    report("6 localization fits", ok, f"samples with all r^2 > 0.9: {frac:.2f}; states: {per_state:.2f} (need >= 0.80)")
    assert ok


def test_7_determinism(tmp_path):
    base = dict(L_list=(3, 4), samples=8, b=B)
    jobs = {
        "wegner": lambda c: wegner_experiment(c.with_overrides(E_grid=(0.8,), eta_grid=(0.05, 0.1))),
        "ids": ids_estimate,
        "localize": lambda c: localization_diagnostics(c.with_overrides(n_states=3)),
    }
    same = {}
    for name, job in jobs.items():
        paths = []
        for w in (1, 3):
            p = tmp_path / f"{name}_{w}.csv"
            job(ExperimentConfig(**base, worker_count=w)).to_csv(p)
            paths.append(p.read_bytes())
        same[name] = paths[0] == paths[1]
    ok = all(same.values())
    report("7 determinism", ok, " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok


def test_suite_registry_is_complete():
    assert set(SUITES) >= {"gauge", "symmetry", "current", "hf", "lemma41", "ylambda",
                           "lemma51", "prop52", "lemma33", "lemma32"}
