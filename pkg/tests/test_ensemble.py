import numpy as np
import pytest

from randmag.ensemble import (
    ExperimentConfig,
    IDSCurve,
    WegnerRow,
    WegnerTable,
    _manifest_for,
    clean_reference,
    decay_fit,
    estar_sweep,
    ids_estimate,
    ids_of_flux,
    ipr,
    lifshitz_diagnostic,
    lifshitz_to_csv,
    localization_diagnostics,
    shell_profile,
    wegner_experiment,
)
from randmag.gauge import FluxField
from randmag.hamiltonian import E_CRIT, assemble_from_flux, spectral_bottom
from randmag.io import read_csv
from randmag.lattice import BoxRegion
from randmag.randomfield import bump_density, sample

SMALL = ExperimentConfig(L_list=(2, 3), samples=12, E_grid=(0.8, 0.9), eta_grid=(0.0, 0.05, 0.1))


def brute_counts(L, cfg, E, eta):
    """Per-sample closed-window counts from a direct loop."""
    out = []
    for i in range(cfg.samples):
        omega = sample(bump_density(cfg.b), BoxRegion.centered(L), cfg.master_seed, i).flux_field
        w = np.linalg.eigvalsh(assemble_from_flux(omega).entries)
        out.append(int(np.sum((w >= E - eta / 2) & (w <= E + eta / 2))))
    return np.array(out, float)


# -- configuration ------------------------------------------------------------


def test_config_validation():
    for bad in ({"L_list": ()}, {"L_list": (0,)}, {"samples": 0}, {"worker_count": 0},
                {"master_seed": -1}, {"eta_grid": (-0.1,)}, {"b": 2.0}, {"mode": "nope"}):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)


def test_config_json_round_trip(tmp_path):
    c = ExperimentConfig(L_list=(4, 6), samples=7, n_states=3)
    d = c.to_json()
    assert d["density"] == {"b": c.b, "profile": "cos4", "mode": "symmetric"}
    assert ExperimentConfig.from_json(d) == c
    nested = {"density": {"b": 1.2, "profile": "cos4", "mode": "single_arc"}, "samples": 3}
    c2 = ExperimentConfig.from_json(nested)
    assert c2.b == 1.2 and c2.mode == "single_arc"
    with pytest.raises(ValueError):
        ExperimentConfig.from_json({"sample": 3})
    with pytest.raises(ValueError):
        ExperimentConfig.from_json({"density": {"b": 1.0, "profile": "gauss"}})
    assert c.with_overrides(samples=None, b=1.0).samples == 7


def test_default_wegner_grid_respects_threshold():
    c = ExperimentConfig()
    grid = c.wegner_E_grid()
    assert grid[0] == pytest.approx(spectral_bottom(c.b))
    assert grid[-1] + max(c.eta_grid) / 2 == pytest.approx(c.E_star)
    c.check_wegner()
    with pytest.raises(ValueError, match="E\\+eta/2|E \\+ eta/2"):
        ExperimentConfig(E_grid=(0.99,), eta_grid=(0.1,)).check_wegner()
    with pytest.raises(ValueError):
        ExperimentConfig(E_star=E_CRIT).check_wegner()


def test_manifest_per_L(tmp_path):
    assert _manifest_for(None, 3) is None
    assert _manifest_for(tmp_path / "run.json", 4).name == "run_L4.json"


# -- Wegner ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_table():
    return wegner_experiment(SMALL)


def test_wegner_against_brute_loop(small_table):
    for L in SMALL.L_list:
        for E in SMALL.E_grid:
            for eta in SMALL.eta_grid:
                b = brute_counts(L, SMALL, E, eta)
                r = small_table.row(L, E, eta)
                assert r.mean_count == pytest.approx(b.mean(), abs=1e-15) and r.n == SMALL.samples


def test_wegner_zero_width_and_monotone(small_table):
    for L in SMALL.L_list:
        for E in SMALL.E_grid:
            means = [small_table.row(L, E, eta).mean_count for eta in SMALL.eta_grid]
            assert means[0] == 0
            assert means == sorted(means)
            per = [small_table.counts[(L, E, eta)] for eta in SMALL.eta_grid]
            assert np.all(per[0] <= per[1]) and np.all(per[1] <= per[2])


def test_wegner_mirror(small_table):
    for r in small_table.rows:
        tol = 3 * max(np.hypot(r.stderr, r.mirror_stderr), 1e-12)
        assert abs(r.mean_count - r.mirror_mean) <= tol


def test_wegner_workers_do_not_change_output(tmp_path):
    one = wegner_experiment(SMALL)
    two = wegner_experiment(SMALL.with_overrides(worker_count=2))
    one.to_csv(tmp_path / "a.csv")
    two.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def synthetic_table(c0, c1):
    rows = [WegnerRow(4, 1.0, eta, float(c.mean()), 0.0, len(c), 0.0, 0.0) for eta, c in ((0.1, c0), (0.2, c1))]
    return WegnerTable(rows, {(4, 1.0, 0.1): c0, (4, 1.0, 0.2): c1})


def test_doubling_ratio_stderr_against_bootstrap():
    rng = np.random.default_rng(0)
    c0 = rng.poisson(5, 400).astype(float)
    c1 = c0 + rng.poisson(5, 400)
    d = synthetic_table(c0, c1).doubling_ratios(4, 1.0)[0]
    assert d["ratio"] == pytest.approx(c1.mean() / c0.mean())
    idx = rng.integers(0, 400, (2000, 400))
    boot = c1[idx].mean(1) / c0[idx].mean(1)
    assert d["stderr"] == pytest.approx(boot.std(), rel=0.15)


def test_doubling_ratio_nan_on_empty_base():
    d = synthetic_table(np.zeros(5), np.ones(5)).doubling_ratios(4, 1.0)[0]
    assert np.isnan(d["ratio"])


def test_fitted_C_and_volume_exponent():
    rows = [WegnerRow(L, 1.0, 0.1, 0.3 * L**2, 0.0, 10, 0.0, 0.0) for L in (2, 4, 8)]
    t = WegnerTable(rows)
    assert t.volume_exponent(1.0, 0.1) == pytest.approx(2.0)
    C = t.fitted_C()
    assert all(r.mean_count <= C * r.eta * r.L**8 * (1 + 1e-12) for r in rows)
    assert C == pytest.approx(max(r.mean_count / (r.eta * r.L**8) for r in rows))
    assert t.plot_data()[0] == (0.1, 1.2, 0.0)


# -- IDS ------------------------------------------------------------------------


def test_ids_of_clean_3x3_box():
    box = BoxRegion.centered(1)
    k = np.arange(1, 4)
    # Neumann-free 3x3 grid: eigenvalues of 4 - adjacency
    w = np.sort((4 - 2 * np.cos(k[:, None] * np.pi / 4) - 2 * np.cos(k[None, :] * np.pi / 4)).ravel())
    grid = np.linspace(0, 8, 33)
    c = ids_of_flux(FluxField.constant(box, 0.0), grid)
    want = np.array([np.sum(w <= E + 1e-12) for E in grid]) / 9
    assert np.allclose(c.k_hat, want)


def test_ids_monotone_and_consistent_with_counts():
    cfg = ExperimentConfig(L_list=(2, 3), samples=10, E_grid=tuple(np.linspace(0, 8, 81)))
    c = ids_estimate(cfg)
    assert c.L == 3 and c.drift_L == 2 and c.drift.shape == c.k_hat.shape
    assert np.all(np.diff(c.k_hat) >= 0) and c.k_hat[-1] == 1.0
    assert c.k_hat[0] == 0.0
    # difference of the counting fraction equals the Wegner count of the same samples
    E, eta = 1.0, 0.2
    cfg2 = cfg.with_overrides(E_grid=(E - eta / 2, E + eta / 2))
    k2 = ids_estimate(cfg2.with_overrides(L_list=(3,))).k_hat
    counts = brute_counts(3, cfg, E, eta)
    assert (k2[1] - k2[0]) * 49 == pytest.approx(counts.mean(), abs=1e-12)


def test_ids_csv(tmp_path):
    c = ids_of_flux(FluxField.constant(BoxRegion.centered(1), 0.0), [0.0, 4.5])
    c.to_csv(tmp_path / "i.csv")
    rows = read_csv(tmp_path / "i.csv")
    assert [r["drift"] for r in rows] == ["", ""] and float(rows[1]["k_hat"]) == pytest.approx(6 / 9)


# -- Lifshitz -------------------------------------------------------------------


def test_lifshitz_rows_and_flags(tmp_path):
    b = np.pi / 4
    E0 = spectral_bottom(b)
    grid = np.array([E0 - 0.1, E0, E0 + 0.2, E0 + 0.5, E0 + 0.7, E0 + 1.0, 3.0])
    ids = IDSCurve(grid, np.array([0, 0, 0, 0.3, 1.0, 1.0, 1.0]), np.zeros(7), 4, 1)
    rows = lifshitz_diagnostic(ids, b)
    assert [r.flag for r in rows] == ["k_zero", "ok", "k_one"]
    r = rows[1]
    assert r.ratio == pytest.approx(np.log(-np.log(0.3)) / np.log(0.5))
    lifshitz_to_csv(rows, tmp_path / "l.csv")
    assert read_csv(tmp_path / "l.csv")[0]["ratio"] == ""


# -- localization -------------------------------------------------------------


def test_decay_fit_recovers_exponential():
    box = BoxRegion.centered(4)
    c = box.coords
    psi = np.exp(-0.7 * np.abs(c).max(axis=1))
    psi /= np.linalg.norm(psi)
    rate, r2, shells, flag = decay_fit(psi, box)
    assert rate == pytest.approx(0.7) and r2 == pytest.approx(1.0) and shells == 5 and flag == "ok"
    R, peak = shell_profile(psi, box)
    assert list(R) == [0, 1, 2, 3, 4] and peak[0] == np.abs(psi).max()
    assert decay_fit(np.ones(9), BoxRegion.centered(1))[3] == "too_few_shells"


def test_ipr_limits():
    assert ipr(np.eye(5)[2]) == 1.0
    assert ipr(np.ones(16) * 3) == pytest.approx(1 / 16)


def test_clean_reference_is_extended():
    small = np.mean([s.ipr for s in clean_reference(3, 0.0, 3)])
    big = np.mean([s.ipr for s in clean_reference(7, 0.0, 3)])
    ratio = big / small
    assert ratio == pytest.approx(49 / 225, rel=0.3)


def test_localization_report(tmp_path):
    cfg = ExperimentConfig(L_list=(3, 4), samples=3, n_states=2)
    rep = localization_diagnostics(cfg)
    assert len(rep.states) == 2 * 3 * 2 and len(rep.clean) == 2 * 2
    assert set(rep.ipr_by_L()) == {3, 4}
    assert 0 <= rep.fit_fraction() <= 1 and 0 <= rep.sample_fit_fraction() <= 1
    assert rep.clean_volume_exponent() < 0
    rep.to_csv(tmp_path / "loc.csv")
    rows = read_csv(tmp_path / "loc.csv")
    assert rows[0]["kind"] == "disordered" and rows[-1]["kind"] == "clean"
    assert len(rep.plot_data()) == 2


def test_window_selection_uses_band_edge():
    cfg = ExperimentConfig(L_list=(3,), samples=2, window=0.5)
    rep = localization_diagnostics(cfg)
    E0 = spectral_bottom(cfg.b)
    assert all(E0 <= s.energy <= E0 + 0.5 for s in rep.states)


def test_estar_sweep_floor_is_monotone():
    rows = estar_sweep(ExperimentConfig(L_list=(3,), samples=3), [0.8, 1.0, 1.5])
    floors = [r["floor"] for r in rows]
    assert floors[0] >= floors[1] >= floors[2] > 0
    assert [r["above_E_crit"] for r in rows] == [False, False, True]


def test_linearity_in_width_inside_the_finite_box_spectrum():
    # at E = 0.9 the L = 6 spectrum is populated, so doubling eta should double the count
    cfg = ExperimentConfig(L_list=(6,), E_grid=(0.9,), eta_grid=(0.02, 0.04, 0.08), samples=400)
    for d in wegner_experiment(cfg).doubling_ratios(6, 0.9):
        assert d["ratio"] + 2 * d["stderr"] >= 1.6 and d["ratio"] - 2 * d["stderr"] <= 2.4
