"""Bilinear and linear spherical maximal functions, the Hardy-Littlewood
maximal function, and continuity differences."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .averaging import _assemble, bilinear_sweep, linear_profiles
from .core import DomainError, in_region
from .fields import GridFunction, lp_norm, shift


@dataclass(frozen=True)
class RadiusGrid:
    t_lo: float
    t_hi: float
    n_t: int = 33
    geometric: bool = True

    def __post_init__(self):
        if not (self.t_lo > 0 and self.t_hi >= self.t_lo):
            raise DomainError("radius grid needs 0 < t_lo <= t_hi")
        if self.n_t < 1:
            raise DomainError("radius grid needs at least one radius")

    def radii(self):
        if self.n_t == 1 or self.t_hi == self.t_lo:
            return np.array([float(self.t_lo)])
        if self.geometric:
            return np.geomspace(self.t_lo, self.t_hi, self.n_t)
        return np.linspace(self.t_lo, self.t_hi, self.n_t)


UNIT_OCTAVE = RadiusGrid(1.0, 2.0, 33)


def octave_radii(m_lo, m_hi, n_t_per_octave=33):
    """Union of geometric grids on [2^m, 2^(m+1)], m_lo <= m <= m_hi."""
    if m_hi < m_lo:
        raise DomainError("need m_lo <= m_hi")
    parts = [RadiusGrid(2.0 ** m, 2.0 ** (m + 1), n_t_per_octave).radii() for m in range(m_lo, m_hi + 1)]
    return np.unique(np.concatenate(parts))


def bilinear_maximal(f, g, radii, quad=None, out_spec=None, points=None, where=None, backend=None):
    """max over the given radii of |A_t(f, g)|."""
    sup, _, idx, ospec = bilinear_sweep(f, g, radii, quad, out_spec, points, where, backend=backend)
    return _assemble(sup, idx, ospec)


def localized_maximal(f, g, rg=UNIT_OCTAVE, **kw):
    return bilinear_maximal(f, g, rg.radii(), **kw)


def lacunary_maximal(f, g, m_lo, m_hi, **kw):
    if m_hi < m_lo:
        raise DomainError("need m_lo <= m_hi")
    return bilinear_maximal(f, g, 2.0 ** np.arange(m_lo, m_hi + 1), **kw)


def full_maximal(f, g, m_lo, m_hi, n_t_per_octave=33, **kw):
    return bilinear_maximal(f, g, octave_radii(m_lo, m_hi, n_t_per_octave), **kw)


def default_levels(spec):
    """Octave range from the grid spacing up to the box diameter."""
    diam = math.sqrt(sum((b - a) ** 2 for a, b in zip(spec.lo, spec.hi)))
    return math.floor(math.log2(spec.min_spacing)), math.ceil(math.log2(diam))


def linear_spherical_maximal(f, rg=UNIT_OCTAVE, quad=None, out_spec=None, points=None, where=None,
                             include_zero=False, backend=None):
    """max over the radius grid of the linear spherical average of |f|.

    ``include_zero`` adds the degenerate radius 0, i.e. the value |f(x)|.
    """
    radii = rg.radii() if isinstance(rg, RadiusGrid) else np.asarray(rg, float)
    if include_zero:
        radii = np.concatenate([[0.0], radii])
    vals, idx, ospec = linear_profiles(abs(f), radii, quad, out_spec, points, where, backend)
    return _assemble(vals.max(axis=1) if vals.shape[1] else np.zeros(vals.shape[0]), idx, ospec)


def _window_sums(a, b, axis):
    """Sums over every length-b window meeting the array; entry k covers cells k-b+1 .. k."""
    pad = [(0, 0)] * a.ndim
    pad[axis] = (b, b - 1)
    c = np.cumsum(np.pad(a, pad), axis=axis)
    n = a.shape[axis]
    return np.take(c, np.arange(b, n + 2 * b - 1), axis=axis) - np.take(c, np.arange(0, n + b - 1), axis=axis)


def _forward_max(w, b, axis):
    """out[j] = max(w[j], ..., w[j+b-1]) for a power of two b, by repeated doubling."""
    m = w
    span = 1
    while span < b:
        k = m.shape[axis]
        m = np.maximum(np.take(m, np.arange(0, k - span), axis=axis), np.take(m, np.arange(span, k), axis=axis))
        span *= 2
    return m


def hardy_littlewood_maximal(f):
    """Uncentred maximal function over grid-aligned cubes with dyadic side lengths.

    Cubes of side 2^k cells (k = 0, 1, ...) at every cell offset are used;
    this contains every shifted dyadic lattice that is aligned with the grid,
    and any cube containing x sits inside one of these of at most twice the
    side, so the result is within a factor 2^d of the maximal function over
    all cubes.  Values outside the box count as zero.
    """
    a = np.abs(f.values)
    spec = f.spec
    best = a.copy()
    b = 2
    while b <= 2 * spec.n:
        m = a
        for ax in range(spec.d):
            m = _window_sums(m, b, ax)
        m = m / float(b) ** spec.d
        for ax in range(spec.d):
            m = _forward_max(m, b, ax)
        best = np.maximum(best, m)
        b *= 2
    return GridFunction(spec, best)


def _snap_warn_region(d, t):
    if not in_region(d, t):
        warnings.warn(f"exponents {t} lie outside the boundedness region for d = {d}", stacklevel=3)


def continuity_norm(f, g, h, t, rg=UNIT_OCTAVE, quad=None, out_spec=None, backend=None):
    """L^r norm of sup over the radius grid of |A_t(f, g - g(. - h))|."""
    if float(np.linalg.norm(np.atleast_1d(h))) >= rg.t_lo:
        raise DomainError("shift must be shorter than the smallest radius")
    _snap_warn_region(f.spec.d, t)
    dg = g - shift(g, h)
    m = localized_maximal(f, dg, rg, quad=quad, out_spec=out_spec, backend=backend)
    return lp_norm(m, t.r)


def double_continuity_norm(f, g, h1, h2, t, rg=UNIT_OCTAVE, quad=None, out_spec=None, backend=None):
    """Same with both arguments differenced: f - f(. - h1), g - g(. - h2)."""
    _snap_warn_region(f.spec.d, t)
    df = f - shift(f, h1)
    dg = g - shift(g, h2)
    m = localized_maximal(df, dg, rg, quad=quad, out_spec=out_spec, backend=backend)
    return lp_norm(m, t.r)
