"""Dyadic cubes, shifted lattices and cube averages.

Lattice ids:

* ``STANDARD`` (0): cubes 2^m ([0,1)^d + k).
* ``1 .. 3^d``: shifted lattices D^j, j in {0,1,2}^d read in base 3 from
  ``id - 1`` (first axis most significant); level-m cubes are
  2^m ([0,1)^d + k + (-1)^m j / 3).  The alternating sign keeps the levels
  nested.  Id 1 (j = 0) coincides with the standard lattice as a set.
* ``THIRDS`` (-1): the base lattice D' with cubes (2^m / 3)([0,1)^d + k).

Tripling a D' cube about its centre lands in exactly one D^j; that is the
three-lattice cover.  All corner arithmetic uses exact fractions.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .core import DomainError, INF, as_exponent

STANDARD = 0
THIRDS = -1


def n_shifted(d):
    return 3 ** d


def _digits(lattice_id, d):
    j = lattice_id - 1
    out = []
    for _ in range(d):
        out.append(j % 3)
        j //= 3
    return tuple(reversed(out))


def _lattice_id(digits):
    j = 0
    for v in digits:
        j = 3 * j + int(v)
    return j + 1


def _pow2(m):
    return Fraction(2) ** m


@dataclass(frozen=True, order=True)
class DyadicCube:
    lattice_id: int
    level: int
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @property
    def d(self):
        return len(self.coords)

    def _check_lattice(self):
        if not (self.lattice_id in (STANDARD, THIRDS) or 1 <= self.lattice_id <= 3 ** self.d):
            raise DomainError(f"lattice id {self.lattice_id} invalid for d = {self.d}")

    @property
    def side(self):
        s = _pow2(self.level)
        return s / 3 if self.lattice_id == THIRDS else s

    def offset(self, level=None):
        """Lattice shift at a level, in units of that level's side length."""
        m = self.level if level is None else level
        if self.lattice_id in (STANDARD, THIRDS):
            return (Fraction(0),) * self.d
        sign = 1 if m % 2 == 0 else -1
        return tuple(Fraction(sign * j, 3) for j in _digits(self.lattice_id, self.d))

    @property
    def corner(self):
        s = self.side
        return tuple((c + o) * s for c, o in zip(self.coords, self.offset()))

    @property
    def upper(self):
        s = self.side
        return tuple(c + s for c in self.corner)

    @property
    def center(self):
        h = self.side / 2
        return tuple(c + h for c in self.corner)

    @property
    def volume(self):
        return self.side ** self.d

    def contains(self, x):
        x = np.asarray(x, float)
        lo = np.array([float(c) for c in self.corner])
        hi = np.array([float(c) for c in self.upper])
        return np.all((x >= lo) & (x < hi), axis=-1)

    def contains_cube(self, other):
        return all(a <= b for a, b in zip(self.corner, other.corner)) and \
            all(a >= b for a, b in zip(self.upper, other.upper))

    def __str__(self):
        lo = ", ".join(str(c) for c in self.corner)
        return f"[{lo}) + {self.side}  (lattice {self.lattice_id}, level {self.level})"


def cube_from_corner(lattice_id, level, corner):
    """The cube of a lattice and level whose lower corner is ``corner`` (exact)."""
    probe = DyadicCube(lattice_id, level, (0,) * len(corner))
    s = probe.side
    coords = []
    for c, o in zip(corner, probe.offset()):
        k = Fraction(c) / s - o
        if k.denominator != 1:
            raise DomainError(f"corner {corner} is not on lattice {lattice_id} at level {level}")
        coords.append(int(k))
    return DyadicCube(lattice_id, level, tuple(coords))


def cube_containing(lattice_id, level, x):
    """The cube of a lattice and level that contains the point x."""
    probe = DyadicCube(lattice_id, level, (0,) * len(x))
    s = probe.side
    coords = [math.floor(Fraction(xi) / s - o) for xi, o in zip(x, probe.offset())]
    return DyadicCube(lattice_id, level, tuple(coords))


def children(Q):
    Q._check_lattice()
    half = Q.side / 2
    out = []
    for e in product((0, 1), repeat=Q.d):
        corner = tuple(c + ei * half for c, ei in zip(Q.corner, e))
        out.append(cube_from_corner(Q.lattice_id, Q.level - 1, corner))
    return CubeSet(out)


def parent(Q):
    Q._check_lattice()
    return cube_containing(Q.lattice_id, Q.level + 1, Q.corner)


def three_lattice_cover(Q):
    """3Q for Q in D' together with the shifted lattice D^j it belongs to."""
    if Q.lattice_id != THIRDS:
        raise DomainError("three_lattice_cover expects a cube of the base lattice D'")
    m = Q.level
    sign = 1 if m % 2 == 0 else -1
    digits = tuple((sign * (c - 1)) % 3 for c in Q.coords)
    coords = tuple((c - 1 - sign * j) // 3 for c, j in zip(Q.coords, digits))
    out = DyadicCube(_lattice_id(digits), m, coords)
    assert out.corner == tuple((c - 1) * Q.side for c in Q.coords)
    return out


class CubeSet:
    """Deduplicated, ordered collection of cubes from compatible lattices."""

    def __init__(self, cubes=()):
        seen = {}
        for c in cubes:
            seen.setdefault(c, None)
        self.cubes = list(seen)
        dims = {c.d for c in self.cubes}
        if len(dims) > 1:
            raise DomainError("cubes of different dimensions")

    def __iter__(self):
        return iter(self.cubes)

    def __len__(self):
        return len(self.cubes)

    def __contains__(self, c):
        return c in set(self.cubes)

    def __getitem__(self, i):
        return self.cubes[i]

    def __eq__(self, other):
        return set(self.cubes) == set(other.cubes if isinstance(other, CubeSet) else other)

    def __repr__(self):
        return f"CubeSet({len(self.cubes)} cubes)"


def cubes_meeting_box(lattice_id, level, lo, hi):
    """All cubes of one lattice level that meet the half-open box [lo, hi)."""
    d = len(lo)
    probe = DyadicCube(lattice_id, level, (0,) * d)
    s = probe.side
    ranges = []
    for a, b, o in zip(lo, hi, probe.offset()):
        k0 = math.floor(Fraction(a) / s - o)
        k1 = math.ceil(Fraction(b) / s - o)
        ranges.append(range(k0, k1))
    return CubeSet(DyadicCube(lattice_id, level, k) for k in product(*ranges))


def cube_cells(spec, Q):
    """Slices of the grid cells whose centres lie in Q (half-open)."""
    if Q.d != spec.d:
        raise DomainError("cube and grid dimensions differ")
    out = []
    for k, (a, b) in enumerate(zip(Q.corner, Q.upper)):
        h = spec.spacing[k]
        i0 = math.ceil((float(a) - spec.lo[k]) / h - 0.5 - 1e-9)
        i1 = math.ceil((float(b) - spec.lo[k]) / h - 0.5 - 1e-9)
        out.append(slice(max(0, min(spec.n, i0)), max(0, min(spec.n, i1))))
    return tuple(out)


def cube_average(f, Q, p):
    """(|Q|^{-1} sum_{x_i in Q} |f(x_i)|^p cellvol)^{1/p}; p = inf gives the max."""
    p = as_exponent(p)
    sl = cube_cells(f.spec, Q)
    block = np.abs(f.values[sl])
    if block.size == 0:
        warnings.warn(f"cube {Q} does not meet the grid box", stacklevel=2)
        return 0.0
    if p == INF:
        return float(block.max())
    p = float(p)
    return float((np.sum(block ** p) * f.spec.cell_volume / float(Q.volume)) ** (1.0 / p))


def box_cube(spec):
    """The grid box as a standard dyadic cube (raises if it is not one)."""
    sides = {b - a for a, b in zip(spec.lo, spec.hi)}
    if len(sides) != 1:
        raise DomainError("grid box is not a cube")
    side = Fraction(sides.pop()).limit_denominator(1 << 40)
    m = math.log2(side)
    if m != int(m):
        raise DomainError("grid box side is not a power of two")
    return cube_from_corner(STANDARD, int(m), tuple(Fraction(a).limit_denominator(1 << 40) for a in spec.lo))


def _union_box(regions, d):
    boxes = [r.bbox(d) for r in regions]
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    return lo, hi


def _box_distance(a, b):
    gap = np.maximum(0.0, np.maximum(a[0] - b[1], b[0] - a[1]))
    return float(np.linalg.norm(gap))


LOCALIZATION_EXPONENT = 4.5


def localization_level(supp_f, supp_g, supp_h, d):
    """Smallest level m0 such that every cube of level >= m0 contributes nothing.

    A cube Q' can only contribute at a point x when l(Q') / 2^{9/2} <= diam,
    where diam bounds the diameter of the hull of the three supports; so
    m0 is the least integer with 2^{m0} > 2^{9/2} diam.
    """
    lo, hi = _union_box([supp_f, supp_g, supp_h], d)
    diam = float(np.linalg.norm(hi - lo))
    if diam <= 0:
        raise DomainError("supports must have positive diameter")
    return math.floor(LOCALIZATION_EXPONENT + math.log2(diam)) + 1


def vanishing_below(supp_f, supp_g, supp_h, d):
    """Largest level m at which (and below which) every cube contributes nothing.

    Cubes of level m only see radii t <= 2^{m-3}, so they vanish when
    2^{m-3} is smaller than the distance from supp h to supp f or supp g.
    Returns None when the supports touch.
    """
    bh = supp_h.bbox(d)
    sep = max(_box_distance(bh, supp_f.bbox(d)), _box_distance(bh, supp_g.bbox(d)))
    if sep <= 0:
        return None
    return math.ceil(3 + math.log2(sep)) - 1
