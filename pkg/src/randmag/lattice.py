"""Square-lattice geometry: sites, arrows, plaquets and rectangular boxes.

Sites are enumerated row-major (``x2`` outer, ``x1`` inner).  Arrows are
stored canonically as ``(site, +e1)`` or ``(site, +e2)``; the reversed
orientation is derived and carries a sign of ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np

E1 = (1, 0)
E2 = (0, 1)


class Site(NamedTuple):
    x1: int
    x2: int

    def __add__(self, other):  # type: ignore[override]
        return Site(self.x1 + other[0], self.x2 + other[1])

    def __sub__(self, other):
        return Site(self.x1 - other[0], self.x2 - other[1])


class Arrow(NamedTuple):
    """Directed nearest-neighbour edge ``(a_i, a_t)``."""

    initial: Site
    terminal: Site

    @property
    def direction(self) -> tuple[int, int]:
        return (self.terminal.x1 - self.initial.x1, self.terminal.x2 - self.initial.x2)


class Plaquet(NamedTuple):
    """Unit square labelled by its lower-left corner."""

    corner: Site


def make_arrow(initial, terminal) -> Arrow:
    a = Arrow(Site(*initial), Site(*terminal))
    d1, d2 = a.direction
    if abs(d1) + abs(d2) != 1:
        raise ValueError(f"{a} does not join nearest neighbours")
    return a


def reverse(a: Arrow) -> Arrow:
    return Arrow(a.terminal, a.initial)


def boundary(f: Plaquet) -> list[Arrow]:
    """The four arrows of the counterclockwise boundary of ``f``."""
    x = Site(*f.corner)
    x10 = x + E1
    x11 = x10 + E2
    x01 = x + E2
    return [Arrow(x, x10), Arrow(x10, x11), Arrow(x11, x01), Arrow(x01, x)]


def plaquet_of_arrow(a: Arrow) -> Plaquet:
    """The unique plaquet having ``a`` on its oriented boundary.

    Rightward arrows are bottom edges, upward arrows right edges, leftward
    arrows top edges and downward arrows left edges.
    """
    x = a.initial
    d = a.direction
    if d == (1, 0):
        return Plaquet(x)
    if d == (0, 1):
        return Plaquet(Site(x.x1 - 1, x.x2))
    if d == (-1, 0):
        return Plaquet(Site(x.x1 - 1, x.x2 - 1))
    if d == (0, -1):
        return Plaquet(Site(x.x1, x.x2 - 1))
    raise ValueError(f"{a} is not an arrow")


@dataclass(frozen=True)
class BoxRegion:
    """Rectangle ``[x1_min, x1_max] x [x2_min, x2_max]`` of the lattice.

    ``BoxRegion.centered(L)`` gives the box ``max(|x1|, |x2|) <= L``.
    """

    x1_min: int
    x1_max: int
    x2_min: int
    x2_max: int

    def __post_init__(self):
        if self.x1_max < self.x1_min or self.x2_max < self.x2_min:
            raise ValueError("empty box")

    @classmethod
    def centered(cls, L: int) -> "BoxRegion":
        if int(L) != L or L < 1:
            raise ValueError(f"half-width must be a positive integer, got {L!r}")
        L = int(L)
        return cls(-L, L, -L, L)

    @classmethod
    def from_corners(cls, lo, hi) -> "BoxRegion":
        return cls(int(lo[0]), int(hi[0]), int(lo[1]), int(hi[1]))

    @property
    def half_width(self) -> int | None:
        """``L`` when this is a centred square box, else ``None``."""
        L = self.x1_max
        if (self.x1_min, self.x2_min, self.x2_max) == (-L, -L, L):
            return L
        return None

    @property
    def n1(self) -> int:
        return self.x1_max - self.x1_min + 1

    @property
    def n2(self) -> int:
        return self.x2_max - self.x2_min + 1

    @property
    def n_sites(self) -> int:
        return self.n1 * self.n2

    def __contains__(self, x) -> bool:
        return self.x1_min <= x[0] <= self.x1_max and self.x2_min <= x[1] <= self.x2_max

    def index(self, x) -> int:
        if x not in self:
            raise KeyError(f"site {tuple(x)} outside {self}")
        return (x[1] - self.x2_min) * self.n1 + (x[0] - self.x1_min)

    def site(self, i: int) -> Site:
        if not 0 <= i < self.n_sites:
            raise IndexError(i)
        q, r = divmod(int(i), self.n1)
        return Site(self.x1_min + r, self.x2_min + q)

    def sites(self) -> list[Site]:
        return [self.site(i) for i in range(self.n_sites)]

    def __iter__(self) -> Iterator[Site]:
        return iter(self.sites())

    # -- vectorised layout -------------------------------------------------

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_sites, 2)`` integer coordinates in index order."""
        i = np.arange(self.n_sites)
        return np.stack([self.x1_min + i % self.n1, self.x2_min + i // self.n1], axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Canonical arrows as rows ``(tail, head, direction)``.

        ``direction`` is 0 for ``+e1`` and 1 for ``+e2``.  Ordered by tail
        index, ``+e1`` before ``+e2``.
        """
        rows = []
        for i in range(self.n_sites):
            x1, x2 = self.coords[i]
            if x1 < self.x1_max:
                rows.append((i, i + 1, 0))
            if x2 < self.x2_max:
                rows.append((i, i + self.n1, 1))
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(t), int(d)): k for k, (t, _, d) in enumerate(self.edges)}

    def edge_index(self, a: Arrow) -> tuple[int, int]:
        """``(k, sign)`` such that arrow ``a`` is ``sign`` times canonical edge ``k``."""
        d = a.direction
        if d in (E1, E2):
            tail, sign = a.initial, 1
        elif d in ((-1, 0), (0, -1)):
            tail, sign = a.terminal, -1
            d = (-d[0], -d[1])
        else:
            raise ValueError(f"{a} is not an arrow")
        if a.initial not in self or a.terminal not in self:
            raise KeyError(f"{a} leaves {self}")
        return self._edge_lookup[(self.index(tail), 0 if d == E1 else 1)], sign

    def edge_arrow(self, k: int) -> Arrow:
        t, h, _ = self.edges[k]
        return Arrow(self.site(t), self.site(h))

    def arrows(self) -> list[Arrow]:
        """All directed arrows with both endpoints in the box."""
        out = []
        for k in range(self.n_edges):
            a = self.edge_arrow(k)
            out.extend((a, reverse(a)))
        return out

    @cached_property
    def plaquet_corners(self) -> np.ndarray:
        """``(n_plaquets, 2)`` lower-left corners of the plaquets inside the box."""
        c1 = np.arange(self.x1_min, self.x1_max)
        c2 = np.arange(self.x2_min, self.x2_max)
        g2, g1 = np.meshgrid(c2, c1, indexing="ij")
        return np.stack([g1.ravel(), g2.ravel()], axis=1).astype(np.int64)

    @property
    def n_plaquets(self) -> int:
        return (self.n1 - 1) * (self.n2 - 1)

    def plaquets(self) -> list[Plaquet]:
        return [Plaquet(Site(int(a), int(b))) for a, b in self.plaquet_corners]

    def contains_plaquet(self, f: Plaquet) -> bool:
        c = f.corner
        return self.x1_min <= c[0] < self.x1_max and self.x2_min <= c[1] < self.x2_max

    def plaquet_index(self, f: Plaquet) -> int:
        if not self.contains_plaquet(f):
            raise KeyError(f"plaquet {tuple(f.corner)} not inside {self}")
        c = f.corner
        return (c[1] - self.x2_min) * (self.n1 - 1) + (c[0] - self.x1_min)

    @cached_property
    def plaquet_boundary(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge indices and orientation signs of each plaquet boundary.

        Both arrays have shape ``(n_plaquets, 4)`` and follow the
        counterclockwise order of :func:`boundary`.
        """
        idx = np.empty((self.n_plaquets, 4), dtype=np.int64)
        sgn = np.empty((self.n_plaquets, 4), dtype=np.int64)
        for p, f in enumerate(self.plaquets()):
            for j, a in enumerate(boundary(f)):
                idx[p, j], sgn[p, j] = self.edge_index(a)
        return idx, sgn

    @cached_property
    def neighbors(self) -> list[list[int]]:
        """In-box nearest neighbours of each site, ordered ``+e1, -e1, +e2, -e2``."""
        out = []
        for x in self.sites():
            nb = []
            for d in (E1, (-1, 0), E2, (0, -1)):
                y = x + d
                if y in self:
                    nb.append(self.index(y))
            out.append(nb)
        return out

    def to_json(self) -> dict:
        L = self.half_width
        if L is not None:
            return {"L": L}
        return {"corners": [[self.x1_min, self.x2_min], [self.x1_max, self.x2_max]]}

    @classmethod
    def from_json(cls, d: dict) -> "BoxRegion":
        if "L" in d:
            return cls.centered(d["L"])
        lo, hi = d["corners"]
        return cls.from_corners(lo, hi)


def sites(box: BoxRegion) -> list[Site]:
    return box.sites()


def arrows(box: BoxRegion) -> list[Arrow]:
    return box.arrows()


def plaquets(box: BoxRegion) -> list[Plaquet]:
    return box.plaquets()
