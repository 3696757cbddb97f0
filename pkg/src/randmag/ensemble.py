"""Monte Carlo experiments over flux disorder.

Every experiment is a per-sample pure function of ``(config, sample index)``
run through :func:`randmag.parallel.run_parallel`, so tables depend only on
the configuration and master seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .gauge import FluxField
from .hamiltonian import E_CRIT, assemble_from_flux, count_eigenvalues, spectral_bottom
from .io import write_csv
from .lattice import BoxRegion
from .parallel import run_parallel
from .randomfield import FluxDensity, bump_density, sample


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs shared by all experiments.

    Empty ``E_grid`` means "use the experiment's default grid".
    ``n_states`` selects the lowest states per sample for localization;
    when ``None`` the energy window ``[E0, E0 + window]`` is used instead.
    """

    L_list: tuple[int, ...] = (4, 6, 8, 10)
    E_grid: tuple[float, ...] = ()
    eta_grid: tuple[float, ...] = (0.02, 0.05, 0.1)
    samples: int = 200
    b: float = np.pi / 4
    mode: str = "symmetric"
    master_seed: int = 0
    E_star: float = 1.0
    worker_count: int = 1
    window: float = 0.15
    n_states: int | None = None
    eps: float = 0.1

    def __post_init__(self):
        for name in ("L_list", "E_grid", "eta_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.L_list or any(int(L) != L or L < 1 for L in self.L_list):
            raise ValueError(f"L_list must hold positive integers, got {self.L_list}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if any(eta < 0 for eta in self.eta_grid):
            raise ValueError("window widths must be non-negative")
        self.density  # validates b and mode

    @property
    def density(self) -> FluxDensity:
        return bump_density(self.b, self.mode)

    @property
    def E0(self) -> float:
        return spectral_bottom(self.b)

    def wegner_E_grid(self) -> tuple[float, ...]:
        if self.E_grid:
            return self.E_grid
        top = self.E_star - max(self.eta_grid, default=0.0) / 2
        return tuple(float(x) for x in np.linspace(self.E0, top, 6))

    def ids_E_grid(self) -> tuple[float, ...]:
        if self.E_grid:
            return self.E_grid
        return tuple(float(x) for x in np.linspace(0.0, 8.0, 161))

    def check_wegner(self) -> None:
        if self.E_star >= E_CRIT:
            raise ValueError(f"E* = {self.E_star} must be below E_crit = 4 - sqrt(8) = {E_CRIT:.6f}")
        for E in self.wegner_E_grid():
            for eta in self.eta_grid:
                if E + eta / 2 > self.E_star + 1e-12:
                    raise ValueError(
                        f"window E + eta/2 <= E* violated: E={E}, eta={eta}, E*={self.E_star}"
                    )

    def to_json(self) -> dict:
        d = asdict(self)
        d["L_list"] = list(self.L_list)
        d["E_grid"] = list(self.E_grid)
        d["eta_grid"] = list(self.eta_grid)
        d["density"] = self.density.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        dens = d.pop("density", None)
        if dens is not None:
            d.setdefault("b", dens["b"])
            d.setdefault("mode", dens.get("mode", "symmetric"))
            if dens.get("profile", "cos4") != "cos4":
                raise ValueError(f"unknown profile {dens['profile']!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _manifest_for(manifest, L: int):
    """Per-``L`` partial-results file so that sample indices never collide."""
    if manifest is None:
        return None
    m = Path(manifest)
    return m.with_name(f"{m.stem}_L{int(L)}{m.suffix}")


def _eigenvalues(L: int, b: float, mode: str, seed: int, index: int) -> np.ndarray:
    box = BoxRegion.centered(L)
    omega = sample(bump_density(b, mode), box, seed, index).flux_field
    return np.linalg.eigvalsh(assemble_from_flux(omega).entries)


# -- Wegner -------------------------------------------------------------------


@dataclass(frozen=True)
class WegnerRow:
    L: int
    E: float
    eta: float
    mean_count: float
    stderr: float
    n: int
    mirror_mean: float
    mirror_stderr: float


@dataclass
class WegnerTable:
    rows: list[WegnerRow]
    counts: dict[tuple[int, float, float], np.ndarray] = field(default_factory=dict, repr=False)

    header = ("L", "E", "eta", "mean_count", "stderr", "n", "mirror_mean", "mirror_stderr")

    def row(self, L: int, E: float, eta: float) -> WegnerRow:
        for r in self.rows:
            if r.L == L and np.isclose(r.E, E) and np.isclose(r.eta, eta):
                return r
        raise KeyError((L, E, eta))

    def fitted_C(self) -> float:
        """Smallest ``C`` with ``mean_count <= C eta L^8`` on every row with ``eta > 0``."""
        ratios = [r.mean_count / (r.eta * r.L**8) for r in self.rows if r.eta > 0]
        return float(max(ratios)) if ratios else 0.0

    def doubling_ratios(self, L: int, E: float) -> list[dict]:
        """Ratios of mean counts at successive widths, with delta-method stderr.

        The same samples enter every width, so the covariance of the two
        counts is included.
        """
        rows = sorted((r for r in self.rows if r.L == L and np.isclose(r.E, E)), key=lambda r: r.eta)
        out = []
        for r0, r1 in zip(rows, rows[1:]):
            c0 = self.counts.get((r0.L, r0.E, r0.eta))
            c1 = self.counts.get((r1.L, r1.E, r1.eta))
            if r0.mean_count == 0:
                out.append({"eta0": r0.eta, "eta1": r1.eta, "ratio": float("nan"), "stderr": float("nan")})
                continue
            ratio = r1.mean_count / r0.mean_count
            se = float("nan")
            if c0 is not None and len(c0) > 1:
                cov = np.cov(c0, c1) / len(c0)
                rel = cov[1, 1] / r1.mean_count**2 + cov[0, 0] / r0.mean_count**2
                if r1.mean_count > 0:
                    rel -= 2 * cov[0, 1] / (r0.mean_count * r1.mean_count)
                se = float(ratio * np.sqrt(max(rel, 0.0)))
            out.append({"eta0": r0.eta, "eta1": r1.eta, "ratio": ratio, "stderr": se})
        return out

    def volume_exponent(self, E: float, eta: float) -> float:
        """Least-squares slope of ``log mean_count`` against ``log L``."""
        pts = [(r.L, r.mean_count) for r in self.rows if np.isclose(r.E, E) and np.isclose(r.eta, eta)]
        pts = [(L, m) for L, m in pts if m > 0]
        if len(pts) < 2:
            return float("nan")
        x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self, path):
        return write_csv(path, self.header, [astuple_row(r) for r in self.rows])

    def plot_data(self) -> list[tuple[float, float, float]]:
        return [(r.eta, r.mean_count, r.stderr) for r in self.rows]


def astuple_row(r) -> tuple:
    return tuple(getattr(r, k) for k in r.__dataclass_fields__)


def _wegner_task(index, L, b, mode, seed, E_grid, eta_grid) -> dict:
    w = _eigenvalues(L, b, mode, seed, index)
    counts = [[count_eigenvalues(w, E, eta) for eta in eta_grid] for E in E_grid]
    mirror = [[count_eigenvalues(w, 8.0 - E, eta) for eta in eta_grid] for E in E_grid]
    return {"counts": counts, "mirror": mirror}


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(x.mean()), se


def wegner_experiment(config: ExperimentConfig, manifest=None, resume: bool = False) -> WegnerTable:
    """Mean eigenvalue counts in ``[E - eta/2, E + eta/2]`` (and at ``8 - E``) per ``(L, E, eta)``."""
    config.check_wegner()
    E_grid = config.wegner_E_grid()
    rows, counts = [], {}
    for L in config.L_list:
        res = run_parallel(
            _wegner_task,
            range(config.samples),
            workers=config.worker_count,
            args=(int(L), config.b, config.mode, config.master_seed, E_grid, config.eta_grid),
            manifest=_manifest_for(manifest, L),
            resume=resume,
        )
        C = np.array([r["counts"] for r in res], dtype=float)
        Cm = np.array([r["mirror"] for r in res], dtype=float)
        for i, E in enumerate(E_grid):
            for j, eta in enumerate(config.eta_grid):
                m, se = _mean_se(C[:, i, j])
                mm, mse = _mean_se(Cm[:, i, j])
                rows.append(WegnerRow(int(L), float(E), float(eta), m, se, config.samples, mm, mse))
                counts[(int(L), float(E), float(eta))] = C[:, i, j]
    return WegnerTable(rows, counts)


# -- integrated density of states -------------------------------------------


@dataclass
class IDSCurve:
    E_grid: np.ndarray
    k_hat: np.ndarray
    stderr: np.ndarray
    L: int
    samples: int
    drift: np.ndarray | None = None
    drift_L: int | None = None

    header = ("E", "k_hat", "stderr", "drift")

    def to_csv(self, path):
        drift = self.drift if self.drift is not None else [None] * len(self.E_grid)
        return write_csv(path, self.header, zip(self.E_grid, self.k_hat, self.stderr, drift))

    def plot_data(self) -> list[tuple[float, float, float]]:
        return list(zip(map(float, self.E_grid), map(float, self.k_hat), map(float, self.stderr)))


def _ids_task(index, L, b, mode, seed, E_grid) -> dict:
    w = _eigenvalues(L, b, mode, seed, index)
    return {"counts": np.searchsorted(w, np.asarray(E_grid), side="right").tolist()}


def ids_counts(L: int, config: ExperimentConfig, E_grid, manifest=None, resume: bool = False) -> np.ndarray:
    res = run_parallel(
        _ids_task,
        range(config.samples),
        workers=config.worker_count,
        args=(int(L), config.b, config.mode, config.master_seed, tuple(E_grid)),
        manifest=_manifest_for(manifest, L),
        resume=resume,
    )
    return np.array([r["counts"] for r in res], dtype=float) / BoxRegion.centered(L).n_sites


def ids_estimate(config: ExperimentConfig, manifest=None, resume: bool = False) -> IDSCurve:
    """Averaged eigenvalue-counting fraction at the largest ``L``.

    ``drift`` is the difference to the second largest ``L`` when the
    configuration has one.
    """
    E_grid = np.asarray(config.ids_E_grid())
    Ls = sorted(set(int(L) for L in config.L_list))
    K = ids_counts(Ls[-1], config, E_grid, manifest, resume)
    k = K.mean(axis=0)
    se = K.std(axis=0, ddof=1) / np.sqrt(len(K)) if len(K) > 1 else np.zeros_like(k)
    drift = drift_L = None
    if len(Ls) > 1:
        drift_L = Ls[-2]
        drift = k - ids_counts(drift_L, config, E_grid, manifest, resume).mean(axis=0)
    return IDSCurve(E_grid, k, se, Ls[-1], config.samples, drift, drift_L)


def ids_of_flux(omega: FluxField, E_grid) -> IDSCurve:
    """Counting fraction of one fixed flux configuration (no averaging)."""
    w = np.linalg.eigvalsh(assemble_from_flux(omega).entries)
    k = np.searchsorted(w, np.asarray(E_grid), side="right") / omega.box.n_sites
    return IDSCurve(np.asarray(E_grid, dtype=float), k, np.zeros_like(k), omega.box.half_width, 1)


@dataclass(frozen=True)
class LifshitzRow:
    E: float
    k_hat: float
    E_minus_E0: float
    ratio: float | None
    flag: str


def lifshitz_diagnostic(ids: IDSCurve, b: float) -> list[LifshitzRow]:
    """``log(-log k_hat) / log(E - E0)`` on grid points with ``E0 < E < E0 + 1``.

    Points with ``k_hat = 0`` are kept with flag ``k_zero`` and no ratio;
    ``k_hat = 1`` is flagged likewise.  Points outside ``(E0, E0 + 1)``,
    where the logarithm of ``E - E0`` is not negative, are left out.
    """
    E0 = spectral_bottom(b)
    rows = []
    for E, k in zip(ids.E_grid, ids.k_hat):
        d = float(E - E0)
        if not 0 < d < 1:
            continue
        if k <= 0:
            rows.append(LifshitzRow(float(E), float(k), d, None, "k_zero"))
        elif k >= 1:
            rows.append(LifshitzRow(float(E), float(k), d, None, "k_one"))
        else:
            rows.append(LifshitzRow(float(E), float(k), d, float(np.log(-np.log(k)) / np.log(d)), "ok"))
    return rows


def lifshitz_to_csv(rows: Sequence[LifshitzRow], path):
    return write_csv(path, ("E", "k_hat", "E_minus_E0", "ratio", "flag"), [astuple_row(r) for r in rows])


# -- localization -------------------------------------------------------------


@dataclass(frozen=True)
class StateDiagnostic:
    L: int
    sample: int
    state: int
    energy: float
    decay_rate: float
    fit_r2: float
    ipr: float
    n_shells: int
    flag: str


def shell_profile(psi: np.ndarray, box: BoxRegion) -> tuple[np.ndarray, np.ndarray]:
    """``r`` and ``max |psi(x)|`` over the sup-norm shell at distance ``r`` from the maximum."""
    mod = np.abs(psi)
    c = box.coords
    r = np.abs(c - c[int(np.argmax(mod))]).max(axis=1)
    R = np.arange(int(r.max()) + 1)
    peak = np.zeros(len(R))
    np.maximum.at(peak, r, mod)
    return R, peak


def decay_fit(psi: np.ndarray, box: BoxRegion, min_shells: int = 4) -> tuple[float, float, int, str]:
    """Exponential fit of the shell maxima: ``(rate, r^2, shells, flag)``."""
    R, peak = shell_profile(psi, box)
    ok = peak > 0
    R, y = R[ok], np.log(peak[ok])
    if len(R) < min_shells:
        return float("nan"), float("nan"), len(R), "too_few_shells"
    slope, icpt = np.polyfit(R, y, 1)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - (slope * R + icpt)) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), float(r2), len(R), "ok"


def ipr(psi: np.ndarray) -> float:
    p = np.abs(psi) ** 2
    return float(np.sum(p * p) / np.sum(p) ** 2)


def _state_rows(L, index, w, V, E0, window, n_states) -> list[dict]:
    box = BoxRegion.centered(L)
    if n_states is not None:
        sel = range(min(n_states, len(w)))
    else:
        sel = np.nonzero((w >= E0) & (w <= E0 + window))[0]
    rows = []
    for k in sel:
        rate, r2, shells, flag = decay_fit(V[:, k], box)
        rows.append(asdict(StateDiagnostic(L, index, int(k), float(w[k]), rate, r2, ipr(V[:, k]), shells, flag)))
    return rows


def _localization_task(index, L, b, mode, seed, window, n_states) -> dict:
    box = BoxRegion.centered(L)
    omega = sample(bump_density(b, mode), box, seed, index).flux_field
    w, V = np.linalg.eigh(assemble_from_flux(omega).entries)
    return {"rows": _state_rows(L, index, w, V, spectral_bottom(b), window, n_states)}


@dataclass
class LocalizationReport:
    states: list[StateDiagnostic]
    clean: list[StateDiagnostic]

    header = ("kind",) + tuple(StateDiagnostic.__dataclass_fields__)

    def ipr_by_L(self, clean: bool = False) -> dict[int, float]:
        src = self.clean if clean else self.states
        out: dict[int, list[float]] = {}
        for s in src:
            out.setdefault(s.L, []).append(s.ipr)
        return {L: float(np.mean(v)) for L, v in sorted(out.items())}

    def fit_fraction(self, threshold: float = 0.9) -> float:
        """Fraction of disordered states whose exponential fit has ``r^2 > threshold``."""
        flags = [s.fit_r2 > threshold for s in self.states if s.flag == "ok"]
        return float(np.mean(flags)) if flags else float("nan")

    def sample_fit_fraction(self, threshold: float = 0.9) -> float:
        """Fraction of ``(L, sample)`` groups in which every state fits with ``r^2 > threshold``."""
        groups: dict[tuple[int, int], bool] = {}
        for s in self.states:
            key = (s.L, s.sample)
            groups[key] = groups.get(key, True) and s.flag == "ok" and s.fit_r2 > threshold
        return float(np.mean(list(groups.values()))) if groups else float("nan")

    def clean_volume_exponent(self) -> float:
        """Slope of ``log IPR`` against ``log N`` for the clean reference."""
        d = self.ipr_by_L(clean=True)
        if len(d) < 2:
            return float("nan")
        N = [(2 * L + 1) ** 2 for L in d]
        return float(np.polyfit(np.log(N), np.log(list(d.values())), 1)[0])

    def to_csv(self, path):
        rows = [("disordered",) + astuple_row(s) for s in self.states]
        rows += [("clean",) + astuple_row(s) for s in self.clean]
        return write_csv(path, self.header, rows)

    def plot_data(self) -> list[tuple[float, float, float]]:
        out = []
        for L in sorted({s.L for s in self.states}):
            v = np.array([s.ipr for s in self.states if s.L == L])
            se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
            out.append((float(L), float(v.mean()), se))
        return out


def clean_reference(L: int, window: float, n_states: int | None) -> list[StateDiagnostic]:
    """Zero-flux counterparts of the band-edge states."""
    box = BoxRegion.centered(L)
    w, V = np.linalg.eigh(assemble_from_flux(FluxField.constant(box, 0.0)).entries)
    rows = _state_rows(L, 0, w, V, float(w[0]), window, n_states)
    return [StateDiagnostic(**r) for r in rows]


def localization_diagnostics(config: ExperimentConfig, manifest=None, resume: bool = False) -> LocalizationReport:
    states, clean = [], []
    for L in config.L_list:
        res = run_parallel(
            _localization_task,
            range(config.samples),
            workers=config.worker_count,
            args=(int(L), config.b, config.mode, config.master_seed, config.window, config.n_states),
            manifest=_manifest_for(manifest, L),
            resume=resume,
        )
        states += [StateDiagnostic(**r) for item in res for r in item["rows"]]
        clean += clean_reference(int(L), config.window, config.n_states)
    return LocalizationReport(states, clean)


# -- exploratory threshold sweep ----------------------------------------------


def _sweep_task(index, L, b, mode, seed, E_max) -> dict:
    from .current import hf_derivatives

    box = BoxRegion.centered(L)
    omega = sample(bump_density(b, mode), box, seed, index).flux_field
    H = assemble_from_flux(omega)
    w, V = np.linalg.eigh(H.entries)
    pairs = []
    for k in np.nonzero(w <= E_max)[0]:
        Y = hf_derivatives(V[:, k], H.potential)
        pairs.append([float(w[k]), float(L**4 * np.sum(Y**2))])
    return {"pairs": pairs}


def estar_sweep(config: ExperimentConfig, E_star_list: Sequence[float]) -> list[dict]:
    """Empirical floor of ``L^4 sum_f <Y_f H>^2`` below each trial threshold.

    Exploratory: thresholds may exceed ``E_crit``, where no certificate
    exists.  Rows report the minimum over samples and eigenpairs.
    """
    E_max = max(E_star_list)
    out = []
    for L in config.L_list:
        res = run_parallel(
            _sweep_task,
            range(config.samples),
            workers=config.worker_count,
            args=(int(L), config.b, config.mode, config.master_seed, float(E_max)),
        )
        pairs = np.array([p for r in res for p in r["pairs"]]).reshape(-1, 2)
        for Es in E_star_list:
            sel = pairs[pairs[:, 0] <= Es, 1]
            out.append(
                {
                    "L": int(L),
                    "E_star": float(Es),
                    "above_E_crit": bool(Es >= E_CRIT),
                    "pairs": int(len(sel)),
                    "floor": float(sel.min()) if len(sel) else None,
                }
            )
    return out
