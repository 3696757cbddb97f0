"""Torus-valued vector potentials, fluxes and gauge transformations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import Arrow, BoxRegion, Plaquet, boundary

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Map angles onto the canonical representative in ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


def torus_distance(x, y):
    d = np.abs(np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), TWO_PI))
    return np.minimum(d, TWO_PI - d)


def in_torus_band(x, b: float, closed: bool = True):
    """Membership in ``T \\ ((-b, b) u (pi-b, pi+b))``.

    With ``closed`` the endpoints ``+-b`` and ``pi +- b`` belong to the set
    (with a slack of ``1e-12`` for wrapping round-off); otherwise only the
    interior is accepted.
    """
    d0 = torus_distance(x, 0.0)
    dpi = torus_distance(x, np.pi)
    if closed:
        return (d0 >= b - 1e-12) & (dpi >= b - 1e-12)
    return (d0 > b) & (dpi > b)


class TorusAngle(float):
    """A float kept in ``(-pi, pi]`` under addition, negation and scaling."""

    def __new__(cls, value=0.0):
        return super().__new__(cls, float(wrap(value)))

    def __add__(self, other):
        return TorusAngle(float(self) + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return TorusAngle(float(self) - float(other))

    def __rsub__(self, other):
        return TorusAngle(float(other) - float(self))

    def __neg__(self):
        return TorusAngle(-float(self))

    def __mul__(self, k):
        return TorusAngle(float(self) * float(k))

    __rmul__ = __mul__

    def distance(self, other) -> float:
        return float(torus_distance(self, other))

    def __repr__(self):
        return f"TorusAngle({float(self)!r})"


@dataclass(frozen=True, eq=False)
class VectorPotential:
    """Antisymmetric function on the arrows of a box.

    ``values[k]`` is the value on canonical edge ``k`` of ``box.edges``;
    reversed arrows read ``-values[k]``.  Coefficient fields such as the
    canonical gauges store plain reals here and are only wrapped after
    multiplication by a flux.
    """

    box: BoxRegion
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.box.n_edges,):
            raise ValueError(f"expected {self.box.n_edges} edge values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, box: BoxRegion) -> "VectorPotential":
        return cls(box, np.zeros(box.n_edges))

    def __call__(self, a: Arrow) -> float:
        k, sign = self.box.edge_index(a)
        return sign * self.values[k]

    def __add__(self, other: "VectorPotential") -> "VectorPotential":
        _same_box(self.box, other.box)
        return VectorPotential(self.box, wrap(self.values + other.values))

    def wrapped(self) -> "VectorPotential":
        return VectorPotential(self.box, wrap(self.values))


@dataclass(frozen=True, eq=False)
class FluxField:
    """Torus-valued flux per plaquet of a box, in ``box.plaquets()`` order."""

    box: BoxRegion
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.box.n_plaquets,):
            raise ValueError(f"expected {self.box.n_plaquets} plaquet values, got shape {v.shape}")
        v = wrap(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, box: BoxRegion, flux: float) -> "FluxField":
        return cls(box, np.full(box.n_plaquets, float(flux)))

    def __getitem__(self, f: Plaquet) -> TorusAngle:
        return TorusAngle(self.values[self.box.plaquet_index(f)])

    def to_json(self) -> dict:
        return {
            "box": self.box.to_json(),
            "plaquets": [
                {"corner": [int(c[0]), int(c[1])], "flux": float(w)}
                for c, w in zip(self.box.plaquet_corners, self.values)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FluxField":
        box = BoxRegion.from_json(d["box"])
        values = np.full(box.n_plaquets, np.nan)
        for entry in d["plaquets"]:
            values[box.plaquet_index(Plaquet(tuple(entry["corner"])))] = entry["flux"]
        if np.isnan(values).any():
            raise ValueError("flux file does not cover every plaquet of the box")
        return cls(box, values)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FluxField":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Torus-valued function on the sites of a box (index order)."""

    box: BoxRegion
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.box.n_sites,):
            raise ValueError(f"expected {self.box.n_sites} site values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    def differential(self) -> np.ndarray:
        """``d lambda(a) = lambda(a_i) - lambda(a_t)`` on canonical edges."""
        e = self.box.edges
        return self.values[e[:, 0]] - self.values[e[:, 1]]


def _same_box(a: BoxRegion, b: BoxRegion) -> None:
    if a != b:
        raise ValueError(f"box mismatch: {a} vs {b}")


def curl(A: VectorPotential, f: Plaquet) -> TorusAngle:
    """Flux of ``A`` through ``f``: the sum over its oriented boundary."""
    if not A.box.contains_plaquet(f):
        raise KeyError(f"plaquet {tuple(f.corner)} not inside {A.box}")
    return TorusAngle(sum(A(a) for a in boundary(f)))


def curl_all(A: VectorPotential, wrap_result: bool = True) -> np.ndarray:
    """Vectorised curl on every plaquet of the box, in plaquet order."""
    idx, sgn = A.box.plaquet_boundary
    s = (A.values[idx] * sgn).sum(axis=1)
    return wrap(s) if wrap_result else s


def flux_of(A: VectorPotential) -> FluxField:
    return FluxField(A.box, curl_all(A))


def gauge_transform(A: VectorPotential, lam: GaugeFunction) -> VectorPotential:
    _same_box(A.box, lam.box)
    return VectorPotential(A.box, wrap(A.values + lam.differential()))


@lru_cache(maxsize=64)
def gauge_matrix(box: BoxRegion, tau: int) -> np.ndarray:
    """Coefficients of the canonical gauge ``tau`` for every plaquet.

    Row ``p`` holds the canonical-edge values of the unit-flux potential
    attached to plaquet ``p``:

    * ``tau=1``: ``-1`` on horizontal edges of the column above the plaquet,
    * ``tau=2``: ``+1`` on vertical edges of the row to its right,
    * ``tau=3``: ``+1`` on horizontal edges of the column at or below it,
    * ``tau=4``: ``-1`` on vertical edges of the row at or left of it.
    """
    if tau not in (1, 2, 3, 4):
        raise ValueError(f"gauge selector must be 1..4, got {tau!r}")
    e = box.edges
    tail = box.coords[e[:, 0]]
    horiz = e[:, 2] == 0
    c1 = box.plaquet_corners[:, 0][:, None]
    c2 = box.plaquet_corners[:, 1][:, None]
    y1 = tail[:, 0][None, :]
    y2 = tail[:, 1][None, :]
    if tau == 1:
        mask = horiz[None, :] & (y1 == c1) & (y2 > c2)
        val = -1.0
    elif tau == 2:
        mask = ~horiz[None, :] & (y2 == c2) & (y1 > c1)
        val = 1.0
    elif tau == 3:
        mask = horiz[None, :] & (y1 == c1) & (y2 <= c2)
        val = 1.0
    else:
        mask = ~horiz[None, :] & (y2 == c2) & (y1 <= c1)
        val = -1.0
    out = np.where(mask, val, 0.0)
    out.setflags(write=False)
    return out


def canonical_gauge(f: Plaquet, tau: int, box: BoxRegion) -> VectorPotential:
    """Unit-flux potential for ``f`` in gauge ``tau``, as a coefficient field."""
    p = box.plaquet_index(f)
    return VectorPotential(box, gauge_matrix(box, tau)[p])


def assemble_potential(omega: FluxField, tau: int = 2) -> VectorPotential:
    """``A = sum_f omega_f alpha_f``; its curl reproduces ``omega``."""
    return VectorPotential(omega.box, wrap(omega.values @ gauge_matrix(omega.box, tau)))


def random_gauge(box: BoxRegion, rng: np.random.Generator) -> GaugeFunction:
    return GaugeFunction(box, rng.uniform(-np.pi, np.pi, box.n_sites))


def maximal_flux_potential(box: BoxRegion) -> VectorPotential:
    """Real gauge for flux ``pi`` everywhere: ``A(x, x+e2) = pi * x1``."""
    e = box.edges
    x1 = box.coords[e[:, 0], 0]
    return VectorPotential(box, np.where(e[:, 2] == 1, np.pi * x1, 0.0))
