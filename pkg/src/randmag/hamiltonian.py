"""Box Hamiltonian with simple boundary conditions, spectra and window counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .gauge import (
    FluxField,
    VectorPotential,
    assemble_potential,
    gauge_transform,
    random_gauge,
)
from .lattice import BoxRegion

E_CRIT = 4.0 - np.sqrt(8.0)


def spectral_bottom(c: float) -> float:
    """Bottom ``4(1 - cos(c/4))`` of the almost-sure spectrum for fluxes ``|w| >= c``."""
    return 4.0 * (1.0 - np.cos(c / 4.0))


@dataclass(frozen=True)
class SpectralEdgeConstants:
    E_crit: float = E_CRIT

    @staticmethod
    def E0_of_c(c: float) -> float:
        return spectral_bottom(c)


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    box: BoxRegion
    entries: np.ndarray
    potential: VectorPotential
    gauge_used: int | str | None = None
    flux_field: FluxField | None = None

    @property
    def n(self) -> int:
        return self.box.n_sites

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())


def hopping_matrix(box: BoxRegion, values: np.ndarray, reverse_values: np.ndarray | None = None):
    """``4 I`` minus the magnetic adjacency, phases ``exp(i A)`` on canonical edges.

    ``reverse_values`` overrides the phases on reversed arrows; by default
    they are ``-values`` so that the matrix is Hermitian.
    """
    e = box.edges
    H = np.zeros((box.n_sites, box.n_sites), dtype=complex)
    H[np.arange(box.n_sites), np.arange(box.n_sites)] = 4.0
    rev = -values if reverse_values is None else reverse_values
    H[e[:, 0], e[:, 1]] = -np.exp(1j * values)
    H[e[:, 1], e[:, 0]] = -np.exp(1j * rev)
    return H


def assemble(box: BoxRegion, A: VectorPotential, gauge_used=None, flux_field=None) -> HamiltonianMatrix:
    if A.box != box:
        raise ValueError(f"potential lives on {A.box}, not {box}")
    return HamiltonianMatrix(box, hopping_matrix(box, A.values), A, gauge_used, flux_field)


def assemble_from_flux(omega: FluxField, tau: int = 2) -> HamiltonianMatrix:
    A = assemble_potential(omega, tau)
    return assemble(omega.box, A, gauge_used=tau, flux_field=omega)


def quadratic_form(psi: np.ndarray, A: VectorPotential) -> float:
    """``1/2 sum_a |psi(a_i) - e^{iA(a)} psi(a_t)|^2`` over directed arrows of the box."""
    e = A.box.edges
    d = psi[e[:, 0]] - np.exp(1j * A.values) * psi[e[:, 1]]
    # each canonical edge stands for two directed arrows of equal modulus
    return float(np.sum(np.abs(d) ** 2))


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    max_residual: float
    degeneracy_tolerance: float = 1e-8

    def clusters(self) -> list[np.ndarray]:
        """Index groups of eigenvalues closer than the degeneracy tolerance."""
        w = self.eigenvalues
        groups, cur = [], [0]
        for k in range(1, len(w)):
            if w[k] - w[k - 1] < self.degeneracy_tolerance:
                cur.append(k)
            else:
                groups.append(np.array(cur))
                cur = [k]
        groups.append(np.array(cur))
        return groups

    def gaps(self) -> np.ndarray:
        """Distance from each eigenvalue to its nearest neighbour in the spectrum."""
        w = self.eigenvalues
        if len(w) == 1:
            return np.array([np.inf])
        d = np.diff(w)
        return np.minimum(np.concatenate([[np.inf], d]), np.concatenate([d, [np.inf]]))


def eigendecompose(H: HamiltonianMatrix | np.ndarray, vectors: bool = True, method: str = "lapack") -> SpectrumResult:
    """Full spectrum of ``H``, ascending, with residual certificate.

    ``method="householder"`` runs the in-package tridiagonal-QL solver;
    ``"lapack"`` delegates to :func:`numpy.linalg.eigh`.
    """
    M = H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H)
    if method == "lapack":
        if not vectors:
            return SpectrumResult(np.linalg.eigvalsh(M), None, float("nan"))
        w, V = np.linalg.eigh(M)
    elif method == "householder":
        w, V = linalg.hermitian_eigh(M)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(M @ V - V * w, axis=0).max()) if len(w) else 0.0
    if not vectors:
        V = None
    return SpectrumResult(w, V, res)


def window_bounds(E: float, eta: float) -> tuple[float, float]:
    if eta < 0:
        raise ValueError(f"window width must be non-negative, got {eta!r}")
    return E - eta / 2.0, E + eta / 2.0


def count_eigenvalues(eigenvalues: np.ndarray, E: float, eta: float) -> int:
    """Eigenvalues in the closed window ``[E - eta/2, E + eta/2]``."""
    lo, hi = window_bounds(E, eta)
    w = np.asarray(eigenvalues)
    return int(np.searchsorted(w, hi, side="right") - np.searchsorted(w, lo, side="left"))


def count_in_window(H, E: float, eta: float, method: str = "spectrum") -> int:
    """``Tr chi_{E,eta}(H)`` by a full solve or by Sylvester inertia.

    ``H`` may also be a :class:`SpectrumResult` for the spectrum route.
    """
    lo, hi = window_bounds(E, eta)
    if method == "spectrum":
        w = H.eigenvalues if isinstance(H, SpectrumResult) else eigendecompose(H, vectors=False).eigenvalues
        return count_eigenvalues(w, E, eta)
    if method == "inertia":
        M = H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H)
        tol = 1e-13 * max(np.abs(M).sum(axis=1).max(), 1.0)
        upto_hi = linalg.count_below(M, hi, inclusive=True, zero_tol=tol)
        below_lo = linalg.count_below(M, lo, inclusive=False, zero_tol=tol)
        return upto_hi - below_lo
    raise ValueError(f"unknown method {method!r}")


def particle_hole_defect(eigenvalues: np.ndarray) -> float:
    w = np.sort(eigenvalues)
    return float(np.abs(w + w[::-1] - 8.0).max())


def gauge_invariance_check(omega: FluxField, rng: np.random.Generator | None = None) -> float:
    """Largest eigenvalue deviation among the four canonical gauges and a random regauging."""
    rng = np.random.default_rng(0) if rng is None else rng
    spectra = []
    for tau in (1, 2, 3, 4):
        spectra.append(eigendecompose(assemble_from_flux(omega, tau), vectors=False).eigenvalues)
    A = gauge_transform(assemble_potential(omega, 2), random_gauge(omega.box, rng))
    spectra.append(eigendecompose(assemble(omega.box, A), vectors=False).eigenvalues)
    ref = spectra[0]
    return float(max(np.abs(s - ref).max() for s in spectra[1:]))
