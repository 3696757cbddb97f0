"""Constructive lower bounds on eigenfunction currents.

Starting from the site ``x0`` where ``|psi|`` is maximal, the eigenvalue
equation forces large moduli on nearby sites.  :func:`find_square` follows
that argument to a unit square ``Q`` on which ``|psi| >= c M``, and
:func:`current_lower_bound` turns the flux through ``Q`` into a certified
lower bound on the current.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .current import current_field, hf_derivatives
from .gauge import VectorPotential, curl_all, in_torus_band, torus_distance, wrap
from .hamiltonian import E_CRIT, HamiltonianMatrix
from .lattice import Arrow, BoxRegion, Plaquet, Site, boundary

EPSILON = 0.1
PHASE_FLOOR = 1e-14


def case1_constants(E_star: float, eps: float = EPSILON) -> dict[str, float]:
    """Guarantees (in units of ``M``) when every neighbour of ``x0`` exceeds ``eps M``."""
    kappa = 1.0 - E_star / 4.0
    return {"y0": kappa, "diagonal": 0.5 * ((4.0 - E_star) * kappa - 2.0), "side": eps}


def case2_constants(E_star: float, eps: float = EPSILON) -> dict[str, float]:
    """Guarantees when some neighbour of ``x0`` is at most ``eps M``."""
    kappa = 2.0 - E_star - eps
    return {"y0": kappa, "diagonal": 0.5 * ((4.0 - E_star) * kappa - 2.0), "side": kappa}


def square_constant(E_star: float, eps: float = EPSILON) -> float:
    """Worst case of the square constant over both cases."""
    c1 = min(case1_constants(E_star, eps).values())
    c2 = min(case2_constants(E_star, eps).values())
    return min(1.0, c1, c2)


@dataclass(frozen=True)
class MaxSiteReport:
    x0: Site
    M: float
    neighbor_moduli: list[tuple[Site, float]]
    normalization_floor: float
    coarse_floor: float

    @property
    def floor_ok(self) -> bool:
        return self.M >= self.normalization_floor * (1 - 1e-12)


def max_site(psi: np.ndarray, box: BoxRegion) -> MaxSiteReport:
    """Location and size of the largest modulus of a normalised vector.

    ``normalization_floor`` is ``N^{-1/2}`` (``1/(2L+1)`` on the centred box);
    ``coarse_floor`` is the cruder ``1/L`` kept for comparison.
    """
    mod = np.abs(psi)
    i0 = int(np.argmax(mod))
    L = box.half_width or max(box.n1, box.n2)
    return MaxSiteReport(
        x0=box.site(i0),
        M=float(mod[i0]),
        neighbor_moduli=[(box.site(j), float(mod[j])) for j in sorted(box.neighbors[i0])],
        normalization_floor=1.0 / np.sqrt(box.n_sites),
        coarse_floor=1.0 / L,
    )


@dataclass(frozen=True)
class NeighborBoundsReport:
    E: float
    M: float
    x0: Site
    margin_a: float
    margin_b: float | None
    margin_b_tight: float
    margin_c: float
    residual: float | None = None

    @property
    def ok(self) -> bool:
        margins = [self.margin_a, self.margin_b_tight, self.margin_c]
        if self.margin_b is not None:
            margins.append(self.margin_b)
        tol = 1e-10 * self.M
        res_ok = self.residual is None or self.residual <= 1e-8
        return res_ok and min(margins) >= -tol


def neighbor_bounds(
    psi: np.ndarray, E: float, box: BoxRegion, H: HamiltonianMatrix | None = None, eps: float = EPSILON
) -> NeighborBoundsReport:
    """Margins of the three neighbour inequalities at the maximum site.

    (a) ``max_y |psi(y)| >= (1 - E/4) M`` over in-box neighbours ``y``;
    (b) if the smallest neighbour is ``<= eps M`` the others are
    ``>= (2 - E - eps) M`` (``margin_b_tight`` uses the smallest admissible
    ``eps``, the actual ratio, so it always applies);
    (c) for every neighbour ``y0`` with ``|psi(y0)| = kappa M``,
    ``|psi(y0+t)| + |psi(y0-t)| >= ((4-E) kappa - 2) M``.

    Sites outside the box count as zero.  With ``H`` given, the residual
    of the eigen-equation is also reported so that non-eigenvectors are
    flagged.
    """
    if not 0.0 <= E <= 4.0:
        raise ValueError(f"energy must lie in [0, 4], got {E!r}")
    psi = np.asarray(psi)
    mod = np.abs(psi)
    i0 = int(np.argmax(mod))
    M = float(mod[i0])
    nbs = sorted(box.neighbors[i0])
    nb_mod = mod[nbs]
    margin_a = float(nb_mod.max() - (1.0 - E / 4.0) * M)

    j_min = int(np.argmin(nb_mod))
    others = np.delete(nb_mod, j_min)
    lo_others = float(others.min()) if len(others) else np.inf
    eps_actual = float(nb_mod[j_min] / M)
    margin_b_tight = lo_others - (2.0 - E - eps_actual) * M
    margin_b = lo_others - (2.0 - E - eps) * M if nb_mod[j_min] <= eps * M else None

    x0 = box.site(i0)
    margin_c = np.inf
    for j in nbs:
        y0 = box.site(j)
        d = (y0.x1 - x0.x1, y0.x2 - x0.x2)
        t = (0, 1) if d[1] == 0 else (1, 0)
        side = sum(mod[box.index(y0 + s)] for s in (t, (-t[0], -t[1])) if (y0 + s) in box)
        kappa = mod[j] / M
        margin_c = min(margin_c, side - ((4.0 - E) * kappa - 2.0) * M)

    residual = None
    if H is not None:
        residual = float(np.linalg.norm(H.entries @ psi - E * psi))
    return NeighborBoundsReport(E, M, x0, margin_a, margin_b, float(margin_b_tight), float(margin_c), residual)


@dataclass
class SquareCertificate:
    Q: Plaquet | None
    case_taken: int
    lower_bound_c: float
    min_modulus_on_Q: float
    M: float
    phases: list[float] = field(default_factory=list)
    flux_on_Q: float = float("nan")
    E: float = float("nan")
    E_star: float = float("nan")
    used_fallback: bool = False
    failure: str = ""

    @property
    def valid(self) -> bool:
        return (
            not self.failure
            and self.Q is not None
            and self.lower_bound_c > 0
            and self.min_modulus_on_Q >= self.lower_bound_c * self.M * (1 - 1e-12)
        )


def _perp(d: tuple[int, int]) -> tuple[int, int]:
    return (0, 1) if d[1] == 0 else (1, 0)


def _diagonal_guarantee(mod, box, y0: Site, sigma: int, t, bound: float) -> float:
    """What the third inequality certifies for ``y0 + sigma t`` a priori."""
    here = y0 + (sigma * t[0], sigma * t[1])
    there = y0 + (-sigma * t[0], -sigma * t[1])
    if here not in box:
        return 0.0
    if there not in box:
        return 2.0 * bound
    if mod[box.index(here)] >= mod[box.index(there)]:
        return bound
    return 0.0


def find_square(
    psi: np.ndarray, E: float, E_star: float, A: VectorPotential, eps: float = EPSILON
) -> SquareCertificate:
    """Unit square of the box on which ``|psi| >= c M``, with the certified ``c``.

    Case 1 (all neighbours of ``x0`` above ``eps M``): ``y0`` is the largest
    neighbour.  Case 2: ``y0`` sits opposite the smallest neighbour.  In
    both cases the square is ``{x0, x0 + s t, y0, y0 + s t}`` with ``t``
    perpendicular to ``y0 - x0`` and the sign ``s`` picking the larger of
    ``|psi(y0 +- t)|``.  Ties go to the larger certified bound, then the
    smaller site index.
    """
    if E > E_star:
        raise ValueError(f"eigenvalue {E} exceeds E* = {E_star}")
    box = A.box
    psi = np.asarray(psi)
    mod = np.abs(psi)
    i0 = int(np.argmax(mod))
    M = float(mod[i0])
    x0 = box.site(i0)
    nbs = sorted(box.neighbors[i0])
    nb_mod = mod[nbs]

    if nb_mod.min() > eps * M:
        case = 1
        g = case1_constants(E_star, eps)
        y0 = box.site(nbs[int(np.argmax(nb_mod))])
        small = None
    else:
        case = 2
        g = case2_constants(E_star, eps)
        small = box.site(nbs[int(np.argmin(nb_mod))])
        y0 = Site(2 * x0.x1 - small.x1, 2 * x0.x2 - small.x2)

    def side_guarantee(s: Site) -> float:
        if s == small:
            return 0.0
        return g["side"]

    def certify(y: Site, y_bound: float, sigma: int):
        t = _perp((y.x1 - x0.x1, y.x2 - x0.x2))
        diag = _diagonal_guarantee(mod, box, y, sigma, t, g["diagonal"])
        side = x0 + (sigma * t[0], sigma * t[1])
        if side not in box:
            return None
        c = min(1.0, y_bound, side_guarantee(side), diag)
        return c, [x0, side, y, y + (sigma * t[0], sigma * t[1])]

    candidates = []
    if y0 in box:
        for sigma in (-1, 1):
            r = certify(y0, g["y0"], sigma)
            if r is not None and r[0] > 0:
                corner_idx = min(box.index(s) for s in r[1])
                candidates.append((-r[0], corner_idx, r[1]))
    used_fallback = not candidates
    if used_fallback:
        # y0 left the box: try every square at x0 built on another neighbour.
        for j in nbs:
            y = box.site(j)
            if y == small:
                continue
            y_bound = g["y0"] if case == 2 or y == y0 else g["side"]
            for sigma in (-1, 1):
                r = certify(y, y_bound, sigma)
                if r is not None and r[0] > 0:
                    corner_idx = min(box.index(s) for s in r[1])
                    candidates.append((-r[0], corner_idx, r[1]))
    if not candidates:
        return SquareCertificate(None, case, 0.0, 0.0, M, E=E, E_star=E_star, used_fallback=True,
                                 failure="no square inside the box certifies")
    candidates.sort(key=lambda r: (r[0], r[1]))
    neg_c, _, square = candidates[0]
    c = -neg_c
    corner = Site(min(s.x1 for s in square), min(s.x2 for s in square))
    Q = Plaquet(corner)
    if not box.contains_plaquet(Q):
        raise AssertionError(f"square {corner} is not inside {box}")
    q_mod = [mod[box.index(s)] for s in square]
    cert = SquareCertificate(Q, case, c, float(min(q_mod)), M, E=E, E_star=E_star, used_fallback=used_fallback)
    if min(q_mod) < PHASE_FLOOR * M:
        cert.failure = "vanishing amplitude on the square; phase undefined"
        return cert
    lam = np.angle(psi)
    phases = []
    for a in boundary(Q):
        phases.append(float(wrap(A(a) + lam[box.index(a.terminal)] - lam[box.index(a.initial)])))
    cert.phases = phases
    cert.flux_on_Q = float(wrap(sum(phases)))
    return cert


@dataclass
class CurrentBoundReport:
    sum_J_sq: float
    bound: float
    pigeonhole_arrow: Arrow
    certificate: SquareCertificate
    sum_J_sq_on_Q: float
    universal_bound: float
    assembled_constant: float

    @property
    def holds(self) -> bool:
        return self.bound > 0 and self.sum_J_sq_on_Q >= self.bound * (1 - 1e-10)

    def to_json(self) -> dict:
        c = self.certificate
        return {
            "E": c.E,
            "case": c.case_taken,
            "Q_corner": [int(c.Q.corner[0]), int(c.Q.corner[1])],
            "c": c.lower_bound_c,
            "min_on_Q": c.min_modulus_on_Q,
            "omega_Q": c.flux_on_Q,
            "phases": c.phases,
            "bound": self.bound,
            "sum_J_sq": self.sum_J_sq,
        }


def fluxes_in_band(A: VectorPotential, b: float) -> bool:
    return bool(np.all(in_torus_band(curl_all(A), b)))


def current_lower_bound(
    psi: np.ndarray, E: float, A: VectorPotential, E_star: float, b: float, eps: float = EPSILON
) -> CurrentBoundReport:
    """Certified lower bound on ``sum_a |J_psi(a)|^2`` from one good square.

    The four boundary phases of ``Q`` add up to the flux through ``Q``,
    which lies in ``T_b``; hence one of them lies in ``T_{b/8}`` and the
    current on that arrow is at least ``2 (cM)^2 |sin(b/8)|``.  The
    returned ``bound`` is ``4 (cM)^4 sin^2(b/8)``; ``universal_bound``
    replaces ``M`` by its normalisation floor ``N^{-1/2}``.
    """
    if not fluxes_in_band(A, b):
        raise ValueError(f"fluxes must avoid the open bands of half-width {b} around 0 and pi")
    if E_star >= E_CRIT:
        raise ValueError(f"E* = {E_star} must stay below E_crit = {E_CRIT}")
    cert = find_square(psi, E, E_star, A, eps)
    if not cert.valid:
        raise AssertionError(f"square certificate failed: {cert.failure or 'bound violated'}")
    if not in_torus_band(cert.flux_on_Q, b):
        raise AssertionError("flux through the certified square left T_b")
    box = A.box
    chosen = None
    for a, phi in zip(boundary(cert.Q), cert.phases):
        if in_torus_band(phi, b / 8.0):
            chosen = a
            break
    if chosen is None:
        raise AssertionError("no boundary phase in T_{b/8} although the flux is in T_b")
    J = current_field(psi, A)
    sum_Q = float(sum(J(a) ** 2 for a in boundary(cert.Q)))
    s2 = np.sin(b / 8.0) ** 2
    c = cert.lower_bound_c
    const = 4.0 * c**4 * s2
    return CurrentBoundReport(
        sum_J_sq=J.directed_sum_of_squares(),
        bound=const * cert.M**4,
        pigeonhole_arrow=chosen,
        certificate=cert,
        sum_J_sq_on_Q=sum_Q,
        universal_bound=const / box.n_sites**2,
        assembled_constant=const,
    )


def pigeonhole_grid_check(b: float, step: float | None = None) -> tuple[int, int]:
    """Exhaustive check that four phases outside ``T_{b/8}`` sum outside ``T_b``.

    Phases run over a grid of spacing ``step`` (default ``b/100``) covering
    ``[-b/8, b/8]`` and ``[pi - b/8, pi + b/8]``.  Returns
    ``(combinations checked, violations)``.
    """
    step = b / 100.0 if step is None else step
    half = np.arange(-b / 8.0, b / 8.0 + step / 2, step)
    grid = np.concatenate([half, np.pi + half])
    s2 = (grid[:, None] + grid[None, :]).ravel()
    violations = 0
    total = 0
    for s in s2:
        tot = s + s2
        total += tot.size
        violations += int(np.count_nonzero(in_torus_band(tot, b, closed=True)))
    return total, violations


def certificates_to_json(reports: list[CurrentBoundReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=1)


# -- per-instance driver used by the scaling study and verification suites ----


@dataclass
class RegularityInstance:
    L: int
    sample_index: int
    n_pairs: int = 0
    n_certified: int = 0
    n_bound_ok: int = 0
    n_neighbor_ok: int = 0
    n_floor_ok: int = 0
    min_scaled_Y: float = float("inf")
    min_cert_margin: float = float("inf")
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def regularity_instance(
    L: int,
    b: float,
    E_star: float,
    master_seed: int,
    sample_index: int,
    eps: float = EPSILON,
    mode: str = "symmetric",
) -> RegularityInstance:
    """Run square finder, current bound and neighbour lemma on one disorder sample."""
    from .hamiltonian import assemble_from_flux, eigendecompose
    from .lattice import BoxRegion
    from .randomfield import bump_density, sample

    box = BoxRegion.centered(L)
    omega = sample(bump_density(b, mode), box, master_seed, sample_index).flux_field
    H = assemble_from_flux(omega)
    spec = eigendecompose(H)
    out = RegularityInstance(L, sample_index)
    for k, E in enumerate(spec.eigenvalues):
        if E > E_star:
            break
        psi = spec.eigenvectors[:, k]
        E_use = max(float(E), 0.0)
        out.n_pairs += 1
        nb = neighbor_bounds(psi, E_use, box, H)
        out.n_neighbor_ok += nb.ok
        out.n_floor_ok += max_site(psi, box).floor_ok
        try:
            rep = current_lower_bound(psi, E_use, H.potential, E_star, b, eps)
        except AssertionError as exc:
            out.failures.append(f"E={E:.6f}: {exc}")
            continue
        cert = rep.certificate
        out.n_certified += cert.valid
        out.n_bound_ok += rep.holds
        out.min_cert_margin = min(out.min_cert_margin, cert.min_modulus_on_Q / cert.M - cert.lower_bound_c)
        Y = hf_derivatives(psi, H.potential)
        out.min_scaled_Y = min(out.min_scaled_Y, L**4 * float(np.sum(Y**2)))
    return out


def scaling_study(
    L_list,
    samples: int,
    E_star: float,
    b: float,
    master_seed: int = 0,
    workers: int = 1,
    mode: str = "symmetric",
    eps: float = EPSILON,
) -> list[dict]:
    """Empirical floor of ``L^4 sum_f <Y_f H>^2`` over eigenpairs below ``E*``.

    One row per ``L`` with the minimum, median and maximum over samples of
    the per-sample minimum, plus certification counts.  ``mode="near_zero"``
    squeezes the fluxes towards 0 as ``b`` shrinks (negative control).
    """
    from .parallel import run_parallel

    rows = []
    for L in L_list:
        results = run_parallel(
            _regularity_task, range(samples), workers=workers, args=(int(L), b, E_star, master_seed, eps, mode)
        )
        floors = np.array([r["min_scaled_Y"] for r in results if r["n_pairs"] > 0])
        rows.append(
            {
                "L": int(L),
                "samples": samples,
                "pairs": int(sum(r["n_pairs"] for r in results)),
                "certified": int(sum(r["n_certified"] for r in results)),
                "bound_ok": int(sum(r["n_bound_ok"] for r in results)),
                "floor_min": float(floors.min()) if len(floors) else float("nan"),
                "floor_median": float(np.median(floors)) if len(floors) else float("nan"),
                "floor_max": float(floors.max()) if len(floors) else float("nan"),
            }
        )
    return rows


def _regularity_task(index, L, b, E_star, master_seed, eps, mode) -> dict:
    return regularity_instance(L, b, E_star, master_seed, index, eps, mode).to_json()


def torus_gap_to_integer_pi(phi) -> np.ndarray:
    """Distance of an angle to the nearest multiple of ``pi``."""
    return np.minimum(torus_distance(phi, 0.0), torus_distance(phi, np.pi))
