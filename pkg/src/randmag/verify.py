"""Randomised identity and inequality suites.

Each suite draws instances ``(L, master_seed, index)`` from the bump density
and returns a signed margin per instance; a suite passes when every margin
is non-negative.  The first failing instance is reported for replay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .current import (
    current_field,
    current_from_derivatives_all,
    current_values,
    derivative_norm_squared,
    flux_derivatives_fd,
    hf_derivative_direct,
    hf_derivatives,
    second_derivative_operator_norm,
    trace_trick_check,
)
from .gauge import assemble_potential
from .hamiltonian import (
    HamiltonianMatrix,
    SpectrumResult,
    eigendecompose,
    gauge_invariance_check,
    hopping_matrix,
    particle_hole_defect,
)
from .lattice import BoxRegion
from .randomfield import bump_density, sample
from .regularity import current_lower_bound, find_square, neighbor_bounds

GAUGE_TOL = 1e-9
PH_TOL = 1e-9
HERMITIAN_TOL = 1e-12
DIV_TOL = 1e-10
HF_REL_TOL = 1e-5
HF_FLOOR = 1e-4
HF_GAP = 1e-3
INVERSION_TOL = 1e-10
HALF_SUM_TOL = 1e-12
FAULTS = ("antisymmetry",)


@dataclass
class Instance:
    L: int
    seed: int
    index: int
    omega: object
    H: HamiltonianMatrix
    spec: SpectrumResult
    rng: np.random.Generator
    b: float = np.pi / 4


def make_instance(L: int, b: float, seed: int, index: int, fault: str | None = None) -> Instance:
    box = BoxRegion.centered(L)
    omega = sample(bump_density(b), box, seed, index).flux_field
    A = assemble_potential(omega)
    if fault is None:
        entries = hopping_matrix(box, A.values)
    elif fault == "antisymmetry":
        # reversed arrows reuse A(a) instead of -A(a)
        entries = hopping_matrix(box, A.values, reverse_values=A.values)
    else:
        raise ValueError(f"unknown fault {fault!r}")
    H = HamiltonianMatrix(box, entries, A, 2, omega)
    rng = np.random.default_rng([seed, L, index, 7])
    return Instance(L, seed, index, omega, H, eigendecompose(H), rng, b)


def _random_plaquets(inst: Instance, k: int):
    P = inst.H.box.plaquets()
    pick = inst.rng.choice(len(P), size=min(k, len(P)), replace=False)
    return [P[i] for i in sorted(pick)]


def check_gauge(inst: Instance) -> float:
    return GAUGE_TOL - gauge_invariance_check(inst.omega, inst.rng)


def check_symmetry(inst: Instance) -> float:
    return min(
        PH_TOL - particle_hole_defect(inst.spec.eigenvalues),
        HERMITIAN_TOL - inst.H.hermiticity_defect(),
    )


def check_current(inst: Instance) -> float:
    A, V = inst.H.potential, inst.spec.eigenvectors
    worst = max(np.abs(current_field(V[:, k], A).divergence()).max() for k in range(V.shape[1]))
    return DIV_TOL - worst


def check_hf(inst: Instance) -> float:
    """Flux derivative from the current against centred differences.

    Only eigenvalues separated from the rest of the spectrum by at least
    ``HF_GAP`` enter; the relative error is taken against
    ``max(|derivative|, HF_FLOOR)``.
    """
    A, spec = inst.H.potential, inst.spec
    ok = np.nonzero(spec.gaps() >= HF_GAP)[0]
    worst = 0.0
    for f in _random_plaquets(inst, 4):
        fd = flux_derivatives_fd(A, f, base=spec)
        p = A.box.plaquet_index(f)
        for k in ok:
            hf = hf_derivatives(spec.eigenvectors[:, k], A)[p]
            worst = max(worst, abs(hf - fd[k]) / max(abs(hf), HF_FLOOR))
    return HF_REL_TOL - worst


def check_inversion(inst: Instance) -> float:
    A, V = inst.H.potential, inst.spec.eigenvectors
    worst = 0.0
    for k in range(V.shape[1]):
        J = current_values(V[:, k], A)
        worst = max(worst, float(np.abs(current_from_derivatives_all(V[:, k], A) - J).max()))
    return INVERSION_TOL - worst


def check_ylambda(inst: Instance) -> float:
    A, V = inst.H.potential, inst.spec.eigenvectors
    box = A.box
    worst = 0.0
    for f in _random_plaquets(inst, 4):
        p = box.plaquet_index(f)
        for k in range(V.shape[1]):
            d = hf_derivative_direct(V[:, k], A, f) - hf_derivatives(V[:, k], A)[p]
            worst = max(worst, abs(d))
    return HALF_SUM_TOL - worst


def check_neighbor_bounds(inst: Instance) -> float:
    spec = inst.spec
    worst = np.inf
    for k, E in enumerate(spec.eigenvalues):
        if E > 4.0:
            break
        r = neighbor_bounds(spec.eigenvectors[:, k], max(float(E), 0.0), inst.H.box, inst.H)
        margins = [r.margin_a, r.margin_b_tight, r.margin_c] + ([r.margin_b] if r.margin_b is not None else [])
        m = min(margins) / r.M
        if r.residual is not None and r.residual > 1e-8:
            m = min(m, -r.residual)
        worst = min(worst, m)
    return float(worst) + 1e-10


def _low_pairs(inst: Instance, E_star: float):
    for k, E in enumerate(inst.spec.eigenvalues):
        if E > E_star:
            return
        yield k, max(float(E), 0.0)


def check_square(inst: Instance, E_star: float = 1.0) -> float:
    worst = np.inf
    for k, E in _low_pairs(inst, E_star):
        cert = find_square(inst.spec.eigenvectors[:, k], E, E_star, inst.H.potential)
        if not cert.valid:
            return -1.0
        worst = min(worst, cert.min_modulus_on_Q / cert.M - cert.lower_bound_c)
    return float(worst)


def check_current_bound(inst: Instance, E_star: float = 1.0) -> float:
    worst = np.inf
    for k, E in _low_pairs(inst, E_star):
        psi = inst.spec.eigenvectors[:, k]
        rep = current_lower_bound(psi, E, inst.H.potential, E_star, inst.b)
        if rep.bound <= 0:
            return -1.0
        worst = min(worst, rep.sum_J_sq_on_Q / rep.bound - 1.0)
        nrm = derivative_norm_squared(psi, inst.H.potential)
        if not nrm.bound_holds:
            return -1.0
    return float(worst) + 1e-10


def check_trace_trick(inst: Instance) -> float:
    A = inst.H.potential
    worst = np.inf
    for f in _random_plaquets(inst, 2):
        worst = min(worst, 4.0 - second_derivative_operator_norm(A, f))
        for eta in (0.02, 0.1):
            E = float(inst.rng.uniform(0.2, 1.0))
            r = trace_trick_check(inst.H, f, E=E, eta=eta, spec=inst.spec)
            worst = min(worst, r.G_bound - r.trace_G)
            if not r.skipped:
                worst = min(worst, r.rhs + 1e-6 - r.lhs)
    return float(worst)


SUITES: dict[str, Callable[[Instance], float]] = {
    "gauge": check_gauge,
    "symmetry": check_symmetry,
    "current": check_current,
    "hf": check_hf,
    "lemma41": check_inversion,
    "ylambda": check_ylambda,
    "lemma51": check_neighbor_bounds,
    "prop52": check_square,
    "lemma33": check_current_bound,
    "lemma32": check_trace_trick,
}


@dataclass
class SuiteResult:
    name: str
    passed: bool
    trials: int
    worst_margin: float
    replay: dict | None = None
    error: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        s = f"{status} {self.name:<9} trials={self.trials:<4} worst_margin={self.worst_margin:.3e}"
        if self.replay:
            s += f" replay: --suite {self.name} --L {self.replay['L']} --seed {self.replay['seed']} --index {self.replay['index']}"
        if self.error:
            s += f" ({self.error})"
        return s


def run_suite(
    name: str,
    L_list=(2, 3, 4),
    trials: int = 100,
    seed: int = 0,
    b: float = np.pi / 4,
    fault: str | None = None,
    start_index: int = 0,
) -> SuiteResult:
    """Run one suite on ``trials`` instances for every ``L``.

    Stops at the first failing instance.
    """
    check = SUITES[name]
    worst = np.inf
    n = 0
    for L in L_list:
        for index in range(start_index, start_index + trials):
            inst = make_instance(int(L), b, seed, index, fault)
            replay = {"L": int(L), "seed": int(seed), "index": int(index)}
            try:
                m = check(inst)
            except (AssertionError, ValueError, np.linalg.LinAlgError) as exc:
                return SuiteResult(name, False, n + 1, -np.inf, replay, str(exc))
            n += 1
            worst = min(worst, m)
            if not m >= 0:
                return SuiteResult(name, False, n, float(m), replay)
    return SuiteResult(name, True, n, float(worst))


def run_suites(names=None, **kw) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    return [run_suite(n, **kw) for n in names]
