"""Linear and bilinear spherical averages on grid functions.

The bilinear average integrates f(x - t*y) g(x - t*z) over the unit sphere of
R^{2d} in (y, z).  Writing |y| = sin(phi), |z| = cos(phi) reduces it to a
one-dimensional integral of two linear averages,

    A_t(f, g)(x) = int_0^{pi/2} A_{t sin phi} f(x) * A_{t cos phi} g(x) dW_d(phi),

where dW_d = kappa_d sin^{d-1} cos^{d-1} dphi is the distribution of the angle
phi on the sphere.  Changing variables rho = sin(phi) gives the ball form
c_d * int_{B^d} f(x - t*rho) A_{t sqrt(1-|rho|^2)} g(x) (1-|rho|^2)^{(d-2)/2} d rho
with c_d = Gamma(d) / (pi^{d/2} Gamma(d/2)); for d = 1 the same formula is
the normalised circle average (1/2pi) int f(x - t cos s) g(x - t sin s) ds.

The phi integral uses a midpoint rule whose weights are the exact masses
W_d(phi_{k+1}) - W_d(phi_k), so the weights are positive and sum to one for
every node count.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

from . import _kernels
from .core import DomainError, ShapeMismatchError, UnsupportedDimensionError
from .fields import GridFunction


@dataclass(frozen=True)
class SphereRule:
    d: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class SlicingRule:
    d: int
    radial_nodes: np.ndarray
    radial_weights: np.ndarray
    normalizer: float


@dataclass(frozen=True)
class Quadrature:
    """Resolution of the adaptive rules.

    ``n_angular`` and ``n_radial`` are lower bounds on the node counts of each
    windowed sphere rule and of each slicing-angle rule; the actual counts
    grow with the arc length so that consecutive nodes are at most
    ``spacing / oversample`` apart.
    """

    n_radial: int = 64
    n_angular: int = 128
    oversample: float = 2.0

    def step(self, spec):
        return spec.min_spacing / self.oversample

    def refined(self, factor=2):
        return Quadrature(self.n_radial * factor, self.n_angular * factor, self.oversample * factor)


DEFAULT_QUAD = Quadrature()


def sphere_rule(d, n):
    if d not in (1, 2, 3):
        raise UnsupportedDimensionError(f"no sphere rule for d = {d}")
    if d == 1:
        return SphereRule(1, np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))
    if n < 2:
        raise DomainError("need at least 2 nodes")
    if d == 2:
        th = 2 * math.pi * np.arange(n) / n
        return SphereRule(2, np.column_stack([np.cos(th), np.sin(th)]), np.full(n, 1.0 / n))
    z, wz = np.polynomial.legendre.leggauss(n)
    na = 2 * n
    ps = 2 * math.pi * np.arange(na) / na
    r = np.sqrt(1 - z * z)
    nodes = np.stack(np.broadcast_arrays(r[:, None] * np.cos(ps), r[:, None] * np.sin(ps), z[:, None]), -1)
    weights = (wz[:, None] / 2 / na) * np.ones(na)
    return SphereRule(3, nodes.reshape(-1, 3), weights.ravel())


def slicing_normalizer(d):
    if d < 2:
        raise UnsupportedDimensionError("the ball form of the slicing needs d >= 2")
    return math.exp(gammaln(d) - 0.5 * d * math.log(math.pi) - gammaln(d / 2))


def slice_cdf(d, phi):
    """Closed-form cumulative angle weight W_d."""
    return _kernels.slice_mass_array(d, phi)


def slice_cdf_reference(d, phi):
    """Same distribution through the regularised incomplete beta function."""
    return betainc(d / 2, d / 2, np.sin(np.asarray(phi, float)) ** 2)


def slicing_rule(d, n):
    """Midpoint rule in the slicing angle over [0, pi/2] with exact cell masses.

    ``radial_nodes`` are rho = sin(phi) at the midpoints; the weights already
    include the factor (1 - rho^2)^{(d-2)/2}, the Jacobian and c_d.
    """
    if d not in (1, 2, 3):
        raise UnsupportedDimensionError(f"unsupported dimension {d}")
    edges = np.linspace(0.0, math.pi / 2, n + 1)
    w = np.diff(slice_cdf(d, edges))
    rho = np.sin(0.5 * (edges[:-1] + edges[1:]))
    c = slicing_normalizer(d) if d >= 2 else 1.0 / math.pi
    return SlicingRule(d, rho, w, c)


def _points_for(spec, out_spec, points, where):
    """Evaluation points and, for grid output, their flat indices."""
    if points is not None:
        pts = np.atleast_2d(np.asarray(points, float))
        if pts.shape[1] != spec.d:
            pts = pts.reshape(-1, spec.d)
        return pts, None, None
    out_spec = out_spec or spec
    if out_spec.d != spec.d:
        raise ShapeMismatchError("output grid has the wrong dimension")
    allpts = out_spec.points()
    if where is None:
        return allpts, np.arange(allpts.shape[0]), out_spec
    mask = where.values != 0 if isinstance(where, GridFunction) else np.asarray(where, bool)
    idx = np.flatnonzero(mask.ravel())
    return allpts[idx], idx, out_spec


def _assemble(vals, idx, out_spec):
    if out_spec is None:
        return vals
    out = np.zeros(int(np.prod(out_spec.shape)))
    out[idx] = vals
    return GridFunction(out_spec, out.reshape(out_spec.shape))


def _box_of(f):
    return _kernels.support_descriptor(f.values, f.spec.geometry())


def linear_profiles(f, radii, quad=None, out_spec=None, points=None, where=None, backend=None):
    """Matrix of linear averages, one row per evaluation point, one column per radius."""
    quad = quad or DEFAULT_QUAD
    radii = np.atleast_1d(np.asarray(radii, float))
    pts, idx, ospec = _points_for(f.spec, out_spec, points, where)
    box = _box_of(f)
    if box is None or pts.shape[0] == 0:
        return np.zeros((pts.shape[0], radii.size)), idx, ospec
    vals = _kernels.linear_points(f.values, f.spec.geometry(), pts, radii, box,
                                  quad.step(f.spec), quad.n_angular, backend=backend)
    return vals, idx, ospec


def linear_spherical_average(f, t, rule=None, quad=None, out_spec=None, points=None, where=None, backend=None):
    """x -> average of f over the sphere of radius t around x.

    With an explicit ``rule`` (see ``sphere_rule``) the fixed nodes are used at
    every point; otherwise an adaptive rule restricted to the part of the
    sphere that can meet the support of f.
    """
    if not t > 0:
        raise DomainError("radius must be positive")
    if rule is not None:
        if rule.d != f.spec.d:
            raise ShapeMismatchError("sphere rule dimension differs from the grid")
        pts, idx, ospec = _points_for(f.spec, out_spec, points, where)
        vals = _kernels.fixed_rule_points(f.values, f.spec.geometry(), pts, t, rule.nodes, rule.weights,
                                          backend=backend)
        return _assemble(vals, idx, ospec)
    vals, idx, ospec = linear_profiles(f, [t], quad, out_spec, points, where, backend)
    return _assemble(vals[:, 0], idx, ospec)


def bilinear_sweep(f, g, radii, quad=None, out_spec=None, points=None, where=None, keep_all=False, backend=None):
    """Bilinear averages at sorted radii: returns (sup_t |A_t|, all values or None, idx, out_spec)."""
    if f.spec != g.spec:
        raise ShapeMismatchError("f and g must share a grid")
    quad = quad or DEFAULT_QUAD
    radii = np.sort(np.atleast_1d(np.asarray(radii, float)))
    if np.any(radii <= 0):
        raise DomainError("radii must be positive")
    pts, idx, ospec = _points_for(f.spec, out_spec, points, where)
    fbox, gbox = _box_of(f), _box_of(g)
    if fbox is None or gbox is None or pts.shape[0] == 0:
        zero_all = np.zeros((pts.shape[0], radii.size)) if keep_all else None
        return np.zeros(pts.shape[0]), zero_all, idx, ospec
    sup, allv = _kernels.bilinear_points(f.values, g.values, f.spec.geometry(), pts, radii, fbox, gbox,
                                         quad.step(f.spec), quad.n_angular, quad.n_radial,
                                         keep_all=keep_all, backend=backend)
    return sup, allv, idx, ospec


def bilinear_spherical_average(f, g, t, quad=None, out_spec=None, points=None, where=None, backend=None):
    """A_t(f, g) on the output grid (default: the input grid) or at explicit points."""
    if not t > 0:
        raise DomainError("radius must be positive")
    _, allv, idx, ospec = bilinear_sweep(f, g, [t], quad, out_spec, points, where, keep_all=True, backend=backend)
    return _assemble(allv[:, 0], idx, ospec)
