"""Reference computations that share no code with the package.

Each oracle works from the mathematical definition directly: random sphere
sampling, brute-force scans over intervals and dyadic cubes, and adaptive
one-dimensional quadrature.
"""

import math
from fractions import Fraction
from itertools import product

import numpy as np
from scipy import integrate
from scipy.special import betainc


def mc_bilinear_average(f_in, g_in, x, t, d, samples=10 ** 6, seed=0):
    """Monte-Carlo A_t(f, g)(x) with (y, z) uniform on the unit sphere of R^{2d}.

    ``f_in`` and ``g_in`` are membership predicates taking (N, d) arrays.
    Returns (estimate, standard error).
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((samples, 2 * d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    y, z = w[:, :d], w[:, d:]
    x = np.asarray(x, float)
    vals = f_in(x - t * y).astype(float) * g_in(x - t * z).astype(float)
    return float(vals.mean()), float(vals.std() / math.sqrt(samples))


def circle_average_d1(f, g, x, t):
    """(1/2pi) int_0^{2pi} f(x - t cos s) g(x - t sin s) ds by adaptive quadrature."""
    val, _ = integrate.quad(lambda s: f(x - t * math.cos(s)) * g(x - t * math.sin(s)), 0.0, 2 * math.pi,
                            limit=400, points=np.linspace(0, 2 * math.pi, 17)[1:-1])
    return val / (2 * math.pi)


def ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def slicing_constant(d):
    """1 / int_{B^d} (1 - |y|^2)^{(d-2)/2} dy in polar coordinates."""
    area = d * ball_volume(d)
    val, _ = integrate.quad(lambda r: r ** (d - 1) * (1 - r * r) ** ((d - 2) / 2), 0.0, 1.0)
    return 1.0 / (area * val)


def slice_weight_cdf(d, phi):
    """Distribution of the angle between |y| and |z| on S^{2d-1}, from the beta law of |y|^2."""
    return betainc(d / 2, d / 2, math.sin(phi) ** 2)


def hl_brute_1d(values, h, i):
    """max over all grid intervals [a, b] of cells containing cell i of the cell average."""
    v = np.abs(np.asarray(values, float))
    c = np.concatenate([[0.0], np.cumsum(v)])
    best = 0.0
    n = v.size
    for a in range(0, i + 1):
        for b in range(i + 1, n + 1):
            best = max(best, (c[b] - c[a]) / (b - a))
    return best


def dyadic_subcubes_1d(level_max, lo=Fraction(0), side=Fraction(1)):
    """All dyadic subintervals of [lo, lo + side) down to side / 2^level_max, coarse first."""
    out = []
    for l in range(level_max + 1):
        s = side / 2 ** l
        out.extend((lo + k * s, lo + (k + 1) * s) for k in range(2 ** l))
    return out


def cz_stopping_brute_1d(f, a, b, p, C0, level_max):
    """Maximal dyadic subintervals of [a, b) whose L^p average exceeds C0 times the root average.

    ``f`` is a vectorized callable; averages are computed with fine midpoint sums
    on the same grid resolution as level_max.
    """
    n = 2 ** level_max
    xs = a + (np.arange(n) + 0.5) * (b - a) / n
    v = np.abs(f(xs)) ** p

    def avg(lo, hi):
        i0 = int(round((lo - a) / (b - a) * n))
        i1 = int(round((hi - a) / (b - a) * n))
        return float(v[i0:i1].mean()) ** (1.0 / p)

    root = avg(a, b)
    chosen = []
    for lo, hi in dyadic_subcubes_1d(level_max, Fraction(a), Fraction(b - a)):
        if (lo, hi) == (a, b):
            continue
        if any(c0 <= lo and hi <= c1 for c0, c1 in chosen):
            continue
        if avg(float(lo), float(hi)) > C0 * root:
            chosen.append((lo, hi))
    return chosen


def shifted_lattice_intervals(level, digit, span=4):
    """Level cubes of the 1-d shifted lattice with digit j, listed by brute force."""
    s = Fraction(2) ** level
    sign = 1 if level % 2 == 0 else -1
    off = Fraction(sign * digit, 3)
    return [((k + off) * s, (k + off + 1) * s) for k in range(-span, span + 1)]


def box_lattice_points(d, lo, hi):
    return list(product(*[range(lo, hi)] * d))


def slice_weight_density(d, phi):
    """d/dphi of the angle distribution, via the beta density of sin^2(phi)."""
    from scipy import stats
    return 2 * math.sin(phi) * math.cos(phi) * stats.beta.pdf(math.sin(phi) ** 2, d / 2, d / 2)


def slice_integral(d, F):
    """int_0^{pi/2} F(sin phi) dW_d(phi) by adaptive quadrature."""
    val, _ = integrate.quad(lambda p: F(math.sin(p)) * slice_weight_density(d, p), 0.0, math.pi / 2, limit=200)
    return val
