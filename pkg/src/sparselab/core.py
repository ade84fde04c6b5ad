"""Exponent triples, the boundedness region, and power-law fitting."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

INF = math.inf
SLACK = 1e-12


class SparselabError(ValueError):
    pass


class DomainError(SparselabError):
    pass


class InsufficientDataError(SparselabError):
    pass


class UnsupportedDimensionError(SparselabError):
    pass


class ResolutionError(SparselabError):
    pass


class ShapeMismatchError(SparselabError):
    pass


class AliasingError(SparselabError):
    pass


def as_exponent(x):
    """Normalize an exponent: ints, Fractions and "a/b" strings stay exact, floats stay floats."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise DomainError(f"not an exponent: {x!r}")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return INF
        return Fraction(s)
    x = float(x)
    if math.isnan(x):
        raise DomainError("exponent is NaN")
    return x


def recip(x):
    """1/x with 1/inf = 0, exact for Fractions."""
    if x == INF:
        return Fraction(0)
    if isinstance(x, Fraction):
        return 1 / x
    return 1.0 / x


def _exact(*vals):
    return all(isinstance(v, Fraction) for v in vals)


def _lt(a, b):
    if _exact(a, b):
        return a < b
    return float(b) - float(a) > SLACK


def _le(a, b):
    if _exact(a, b):
        return a <= b
    return float(a) - float(b) <= SLACK


def holder_conjugate(r):
    r = as_exponent(r)
    if r == INF:
        return Fraction(1)
    if _lt(r, 1):
        raise DomainError(f"Hölder conjugate needs r >= 1, got {r}")
    if r == 1:
        return INF
    if isinstance(r, Fraction):
        return r / (r - 1)
    return r / (r - 1.0)


@dataclass(frozen=True)
class ExponentTriple:
    p: object
    q: object
    r: object
    r_conj: object = field(init=False)

    def __post_init__(self):
        for name in ("p", "q", "r"):
            object.__setattr__(self, name, as_exponent(getattr(self, name)))
        if not (self.r > 0):
            raise DomainError(f"r must be positive, got {self.r}")
        if not (self.p > 0 and self.q > 0):
            raise DomainError("p and q must be positive")
        rc = holder_conjugate(self.r) if not _lt(self.r, 1) else None
        object.__setattr__(self, "r_conj", rc)

    @property
    def inv(self):
        return recip(self.p), recip(self.q), recip(self.r)

    def __str__(self):
        return f"({self.p}, {self.q}, {self.r})"


def m_bound(d, r):
    if d < 2:
        raise UnsupportedDimensionError("m(d, r) is defined for d >= 2; use in_region for d = 1")
    r = as_exponent(r)
    if not (r > 0):
        raise DomainError("r must be positive")
    ir = recip(r)
    if d == 2:
        return min(1 + ir, Fraction(3, 2))
    return min(1 + d * ir, Fraction(2 * d - 1, d), ir + Fraction(2 * (d - 1), d))


# vertices of the known d = 1 region, in (1/p, 1/q, 1/r) coordinates
D1_HULL = (
    (Fraction(0), Fraction(0), Fraction(0)),
    (Fraction(0), Fraction(1), Fraction(1)),
    (Fraction(1), Fraction(0), Fraction(1)),
    (Fraction(3, 5), Fraction(3, 5), Fraction(2, 5)),
)


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _hull_halfspaces(verts):
    out = []
    for face in combinations(range(4), 3):
        a, b, c = (verts[i] for i in face)
        (other,) = set(range(4)) - set(face)
        nrm = _cross(_sub(b, a), _sub(c, a))
        off = _dot(nrm, a)
        if _dot(nrm, verts[other]) < off:
            nrm = tuple(-x for x in nrm)
            off = -off
        out.append((nrm, off))
    return out


_D1_FACES = _hull_halfspaces(D1_HULL)


def in_region_d1(t):
    pt = t.inv
    for nrm, off in _D1_FACES:
        if not _lt(off, _dot(nrm, pt)):
            return False
    return True


def in_region(d, t):
    if d == 1:
        return in_region_d1(t)
    if t.p == INF or t.q == INF or t.r == INF:
        return False
    if not (_lt(1, t.p) and _lt(1, t.q)):
        return False
    ip, iq, ir = t.inv
    s = ip + iq
    return _lt(ir, s) and _lt(s, m_bound(d, t.r))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    max_abs_residual: float
    samples: tuple

    def predict(self, scale):
        return math.exp(self.intercept) * scale ** self.slope


def fit_power_law(samples):
    """OLS fit of log(value) against log(scale)."""
    samples = [(float(s), float(v)) for s, v in samples]
    if len(samples) < 3:
        raise InsufficientDataError(f"need at least 3 samples, got {len(samples)}")
    s = np.array([a for a, _ in samples])
    v = np.array([b for _, b in samples])
    if np.any(s <= 0) or np.any(~np.isfinite(s)):
        raise DomainError("scales must be positive and finite")
    if len(np.unique(s)) != len(s):
        raise DomainError("scales must be distinct")
    if np.any(v <= 0) or np.any(~np.isfinite(v)):
        raise DomainError("values must be positive and finite")
    x, y = np.log(s), np.log(v)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(y - (slope * x + icpt))))
    return ScalingFit(float(slope), float(icpt), resid, tuple(samples))
