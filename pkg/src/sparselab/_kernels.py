"""Per-point quadrature kernels.

Two interchangeable backends implement the same three entry points:

``fixed_rule_points``   sum_j w_j f(x - t*node_j) for an explicit sphere rule
``linear_points``       windowed spherical averages of f at several radii
``bilinear_points``     bilinear averages at several radii, optionally reduced
                        to the supremum of |A_t| over the radii

The numba backend is used when numba imports and ``SPARSELAB_BACKEND`` is not
``numpy``.  Both backends visit points independently, so results do not
depend on the thread count.

Windowing: the nonzero cells of a function lie in a coordinate box and in a
ball B(c, R).  Seen from a point x they occupy the shell dmin <= |y - x| <= dmax,
and the sphere of radius s around x meets the ball in a cap of half-angle
beta(s) around the direction of c.  Sphere nodes are placed only on that cap
and slicing nodes only where both shells are hit; the integrand vanishes
everywhere else, so the restriction changes nothing but the cost.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _pick_backend():
    want = os.environ.get("SPARSELAB_BACKEND", "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"SPARSELAB_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and numba is None:
        return "numpy"
    return want


BACKEND = _pick_backend()

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def set_threads(n):
    if numba is not None and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def slice_mass(d, phi):
    """Cumulative slicing weight on [0, phi]; equals I_{sin^2 phi}(d/2, d/2)."""
    if d == 1:
        return phi / HALF_PI
    if d == 2:
        s = math.sin(phi)
        return s * s
    return (phi - 0.25 * math.sin(4.0 * phi)) / HALF_PI


def slice_mass_array(d, phi):
    phi = np.asarray(phi, float)
    if d == 1:
        return phi / HALF_PI
    if d == 2:
        return np.sin(phi) ** 2
    return (phi - 0.25 * np.sin(4.0 * phi)) / HALF_PI


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------

if numba is not None:
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    _jit = numba.njit(cache=True, nogil=True)
    _pjit = numba.njit(cache=True, nogil=True, parallel=True)
    _prange = numba.prange

    _slice_mass_nb = _jit(slice_mass)

    @_jit
    def _look(vals, lo, h, n, d, y0, y1, y2):
        i0 = int(math.floor((y0 - lo[0]) / h[0]))
        if i0 < 0 or i0 >= n[0]:
            return 0.0
        if d == 1:
            return vals[i0]
        i1 = int(math.floor((y1 - lo[1]) / h[1]))
        if i1 < 0 or i1 >= n[1]:
            return 0.0
        if d == 2:
            return vals[i0 * n[1] + i1]
        i2 = int(math.floor((y2 - lo[2]) / h[2]))
        if i2 < 0 or i2 >= n[2]:
            return 0.0
        return vals[(i0 * n[1] + i1) * n[2] + i2]

    @_jit
    def _window(x, sup, u):
        """Shell [dmin, dmax] and direction/distance of the support ball centre."""
        d = x.shape[0]
        dmin2 = 0.0
        dmax2 = 0.0
        dist2 = 0.0
        for k in range(d):
            lo_k = sup[k]
            hi_k = sup[d + k]
            e = max(lo_k - x[k], x[k] - hi_k, 0.0)
            dmin2 += e * e
            m = max(abs(x[k] - lo_k), abs(x[k] - hi_k))
            dmax2 += m * m
            c = sup[2 * d + k] - x[k]
            u[k] = c
            dist2 += c * c
        rad = sup[3 * d]
        dist = math.sqrt(dist2)
        if dist > 0.0:
            for k in range(d):
                u[k] /= dist
        else:
            for k in range(d):
                u[k] = 0.0
            u[0] = 1.0
        dmin = max(math.sqrt(dmin2), dist - rad)
        dmax = min(math.sqrt(dmax2), dist + rad)
        return dmin, dmax, dist, rad

    @_jit
    def _half_angle(s, dist, rad):
        if dist <= 0.0:
            return math.pi if s <= rad else 0.0
        c = (s * s + dist * dist - rad * rad) / (2.0 * s * dist)
        if c <= -1.0:
            return math.pi
        if c >= 1.0:
            return 0.0
        return math.acos(c)

    @_jit
    def _sphere_avg(vals, lo, h, n, x, s, u, dist, rad, ds, nmin):
        d = x.shape[0]
        x0 = x[0]
        x1 = x[1] if d > 1 else 0.0
        x2 = x[2] if d > 2 else 0.0
        if s <= 0.0:
            return _look(vals, lo, h, n, d, x0, x1, x2)
        if d == 1:
            return 0.5 * (_look(vals, lo, h, n, 1, x0 - s, 0.0, 0.0)
                          + _look(vals, lo, h, n, 1, x0 + s, 0.0, 0.0))
        beta = _half_angle(s, dist, rad)
        if beta <= 0.0:
            return 0.0
        if d == 2:
            span = 2.0 * beta
            m = max(nmin, int(math.ceil(span * s / ds)))
            dth = span / m
            th = math.atan2(u[1], u[0]) - beta + 0.5 * dth
            c = math.cos(th)
            sn = math.sin(th)
            cd = math.cos(dth)
            sd = math.sin(dth)
            acc = 0.0
            for j in range(m):
                acc += _look(vals, lo, h, n, 2, x0 + s * c, x1 + s * sn, 0.0)
                c, sn = c * cd - sn * sd, sn * cd + c * sd
            return acc * (span / TWO_PI) / m
        # d == 3: equal-area bands in cos(polar angle) inside the cap
        e30, e31, e32 = u[0], u[1], u[2]
        if abs(e30) < 0.9:
            a0, a1, a2 = 1.0, 0.0, 0.0
        else:
            a0, a1, a2 = 0.0, 1.0, 0.0
        pr = a0 * e30 + a1 * e31 + a2 * e32
        e10, e11, e12 = a0 - pr * e30, a1 - pr * e31, a2 - pr * e32
        nr = math.sqrt(e10 * e10 + e11 * e11 + e12 * e12)
        e10 /= nr
        e11 /= nr
        e12 /= nr
        e20 = e31 * e12 - e32 * e11
        e21 = e32 * e10 - e30 * e12
        e22 = e30 * e11 - e31 * e10
        band = 1.0 - math.cos(beta)
        mp = max(max(4, nmin // 8), int(math.ceil(s * beta / ds)))
        acc = 0.0
        for j in range(mp):
            z = 1.0 - (j + 0.5) * band / mp
            r = math.sqrt(max(0.0, 1.0 - z * z))
            ma = max(max(8, nmin // 4), int(math.ceil(TWO_PI * s * r / ds)))
            dps = TWO_PI / ma
            c = r * math.cos(0.5 * dps)
            sn = r * math.sin(0.5 * dps)
            cd = math.cos(dps)
            sd = math.sin(dps)
            ring = 0.0
            for k in range(ma):
                w0 = c * e10 + sn * e20 + z * e30
                w1 = c * e11 + sn * e21 + z * e31
                w2 = c * e12 + sn * e22 + z * e32
                ring += _look(vals, lo, h, n, 3, x0 + s * w0, x1 + s * w1, x2 + s * w2)
                c, sn = c * cd - sn * sd, sn * cd + c * sd
            acc += ring / ma
        return acc * 0.5 * band / mp

    @_jit
    def _interp(prof, j0, ds, s):
        m = prof.shape[0]
        v = s / ds
        k = math.floor(v)
        i = int(k) - j0
        if i < 0:
            return prof[0]
        if i >= m - 1:
            return prof[m - 1]
        fr = v - k
        return prof[i] + fr * (prof[i + 1] - prof[i])

    @_jit
    def _phi_window(t, sminF, smaxF, sminG, smaxG):
        if sminF > t or sminG > t:
            return 0.0, -1.0
        a1 = math.asin(min(sminF / t, 1.0))
        b1 = math.asin(min(smaxF / t, 1.0))
        a2 = math.acos(min(smaxG / t, 1.0))
        b2 = math.acos(min(sminG / t, 1.0))
        return max(a1, a2), min(b1, b2)

    @_jit
    def _sweep(d, F, j0F, G, j0G, ds, sminF, smaxF, sminG, smaxG, t, nrad):
        a, b = _phi_window(t, sminF, smaxF, sminG, smaxG)
        if b <= a:
            return 0.0
        m = max(nrad, int(math.ceil(t * (b - a) / ds)))
        dphi = (b - a) / m
        acc = 0.0
        w_prev = _slice_mass_nb(d, a)
        for k in range(m):
            w_next = _slice_mass_nb(d, a + (k + 1) * dphi)
            mid = a + (k + 0.5) * dphi
            fv = _interp(F, j0F, ds, t * math.sin(mid))
            if fv != 0.0:
                acc += (w_next - w_prev) * fv * _interp(G, j0G, ds, t * math.cos(mid))
            w_prev = w_next
        return acc

    @_jit
    def _profile(vals, lo, h, n, x, j0, j1, ds, u, dist, rad, nmin):
        out = np.empty(j1 - j0 + 1)
        for k in range(j0, j1 + 1):
            out[k - j0] = _sphere_avg(vals, lo, h, n, x, k * ds, u, dist, rad, ds, nmin)
        return out

    @_pjit
    def _bilinear_nb(fv, gv, lo, h, n, pts, radii, fsup, gsup, ds, nang, nrad, keep_all, out_sup, out_all):
        npts = pts.shape[0]
        nt = radii.shape[0]
        d = pts.shape[1]
        for p in _prange(npts):
            x = pts[p]
            uF = np.empty(d)
            uG = np.empty(d)
            dminF, dmaxF, distF, radF = _window(x, fsup, uF)
            dminG, dmaxG, distG, radG = _window(x, gsup, uG)
            best = 0.0
            if dminF <= dmaxF and dminG <= dmaxG:
                t_lo = math.sqrt(dminF * dminF + dminG * dminG)
                t_hi = math.sqrt(dmaxF * dmaxF + dmaxG * dmaxG)
                j0 = 0
                while j0 < nt and radii[j0] < t_lo:
                    j0 += 1
                j1 = nt
                while j1 > j0 and radii[j1 - 1] > t_hi:
                    j1 -= 1
                if j1 > j0:
                    ta = radii[j0]
                    tb = radii[j1 - 1]
                    sminF = max(dminF, math.sqrt(max(ta * ta - dmaxG * dmaxG, 0.0)))
                    smaxF = min(dmaxF, math.sqrt(max(tb * tb - dminG * dminG, 0.0)))
                    sminG = max(dminG, math.sqrt(max(ta * ta - dmaxF * dmaxF, 0.0)))
                    smaxG = min(dmaxG, math.sqrt(max(tb * tb - dminF * dminF, 0.0)))
                    if sminF <= smaxF and sminG <= smaxG:
                        j0F = int(math.floor(sminF / ds))
                        j0G = int(math.floor(sminG / ds))
                        F = _profile(fv, lo, h, n, x, j0F, int(math.ceil(smaxF / ds)), ds, uF, distF, radF, nang)
                        G = _profile(gv, lo, h, n, x, j0G, int(math.ceil(smaxG / ds)), ds, uG, distG, radG, nang)
                        for j in range(j0, j1):
                            v = _sweep(d, F, j0F, G, j0G, ds, dminF, dmaxF, dminG, dmaxG, radii[j], nrad)
                            if keep_all:
                                out_all[p, j] = v
                            if abs(v) > best:
                                best = abs(v)
            out_sup[p] = best

    @_pjit
    def _linear_nb(vals, lo, h, n, pts, radii, sup, ds, nang, out):
        npts = pts.shape[0]
        nt = radii.shape[0]
        d = pts.shape[1]
        for p in _prange(npts):
            x = pts[p]
            u = np.empty(d)
            dmin, dmax, dist, rad = _window(x, sup, u)
            for j in range(nt):
                s = radii[j]
                if s < dmin or s > dmax:
                    out[p, j] = 0.0
                else:
                    out[p, j] = _sphere_avg(vals, lo, h, n, x, s, u, dist, rad, ds, nang)

    @_pjit
    def _fixed_nb(vals, lo, h, n, pts, t, nodes, weights, out):
        npts = pts.shape[0]
        d = pts.shape[1]
        nn = nodes.shape[0]
        for p in _prange(npts):
            acc = 0.0
            for j in range(nn):
                y0 = pts[p, 0] - t * nodes[j, 0]
                y1 = pts[p, 1] - t * nodes[j, 1] if d > 1 else 0.0
                y2 = pts[p, 2] - t * nodes[j, 2] if d > 2 else 0.0
                acc += weights[j] * _look(vals, lo, h, n, d, y0, y1, y2)
            out[p] = acc


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------

def _look_np(vals, lo, h, n, y):
    """Vectorised nearest-cell lookup of flat ``vals`` at points ``y`` (m, d)."""
    d = y.shape[1]
    idx = np.zeros(y.shape[0], dtype=np.int64)
    ok = np.ones(y.shape[0], dtype=bool)
    for k in range(d):
        i = np.floor((y[:, k] - lo[k]) / h[k]).astype(np.int64)
        ok &= (i >= 0) & (i < n[k])
        idx = idx * n[k] + np.where(ok, i, 0)
    out = np.zeros(y.shape[0])
    out[ok] = vals[idx[ok]]
    return out


def _window_np(x, sup):
    d = x.shape[0]
    blo, bhi, cen, rad = sup[:d], sup[d:2 * d], sup[2 * d:3 * d], float(sup[3 * d])
    e = np.maximum(np.maximum(blo - x, x - bhi), 0.0)
    m = np.maximum(np.abs(x - blo), np.abs(x - bhi))
    c = cen - x
    dist = math.sqrt(float(np.sum(c * c)))
    if dist > 0.0:
        u = c / dist
    else:
        u = np.zeros(d)
        u[0] = 1.0
    dmin = max(math.sqrt(float(np.sum(e * e))), dist - rad)
    dmax = min(math.sqrt(float(np.sum(m * m))), dist + rad)
    return dmin, dmax, u, dist, rad


def _half_angle_np(s, dist, rad):
    if dist <= 0.0:
        return math.pi if s <= rad else 0.0
    c = (s * s + dist * dist - rad * rad) / (2.0 * s * dist)
    if c <= -1.0:
        return math.pi
    if c >= 1.0:
        return 0.0
    return math.acos(c)


def _frame_np(u):
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - np.dot(a, u) * u
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return e1, e2


def _cap_nodes_np(d, s, u, beta, ds, nmin):
    """Directions and weights of the windowed sphere rule at radius s > 0."""
    if d == 1:
        return np.array([[-1.0], [1.0]]), np.array([0.5, 0.5])
    if d == 2:
        span = 2.0 * beta
        m = max(nmin, int(math.ceil(span * s / ds)))
        th = math.atan2(u[1], u[0]) - beta + (np.arange(m) + 0.5) * (span / m)
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(m, (span / TWO_PI) / m)
    e1, e2 = _frame_np(u)
    band = 1.0 - math.cos(beta)
    mp = max(max(4, nmin // 8), int(math.ceil(s * beta / ds)))
    z = 1.0 - (np.arange(mp) + 0.5) * band / mp
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    ma = np.maximum(max(8, nmin // 4), np.ceil(TWO_PI * s * r / ds).astype(np.int64))
    rep = np.repeat(np.arange(mp), ma)
    starts = np.cumsum(ma) - ma
    k = np.arange(rep.size) - starts[rep]
    ps = (k + 0.5) * TWO_PI / ma[rep]
    c, sn = r[rep] * np.cos(ps), r[rep] * np.sin(ps)
    dirs = c[:, None] * e1 + sn[:, None] * e2 + z[rep, None] * u
    w = 0.5 * band / mp / ma[rep]
    return dirs, w


def _sphere_avg_np(vals, lo, h, n, x, s, u, dist, rad, ds, nmin):
    if s <= 0.0:
        return float(_look_np(vals, lo, h, n, x[None, :])[0])
    d = x.shape[0]
    beta = math.pi if d == 1 else _half_angle_np(s, dist, rad)
    if beta <= 0.0:
        return 0.0
    dirs, w = _cap_nodes_np(d, s, u, beta, ds, nmin)
    return float(np.dot(w, _look_np(vals, lo, h, n, x + s * dirs)))


def _profile_np(vals, lo, h, n, x, j0, j1, ds, u, dist, rad, nmin):
    return np.array([_sphere_avg_np(vals, lo, h, n, x, k * ds, u, dist, rad, ds, nmin) for k in range(j0, j1 + 1)])


def _interp_np(prof, j0, ds, s):
    v = s / ds
    k = np.floor(v)
    i = k.astype(np.int64) - j0
    m = prof.shape[0]
    nxt = prof[np.clip(i + 1, 0, m - 1)]
    out = prof[np.clip(i, 0, m - 1)] + (v - k) * (nxt - prof[np.clip(i, 0, m - 1)])
    out = np.where(i < 0, prof[0], out)
    return np.where(i >= m - 1, prof[m - 1], out)


def _sweep_np(d, F, j0F, G, j0G, ds, sminF, smaxF, sminG, smaxG, t, nrad):
    if sminF > t or sminG > t:
        return 0.0
    a = max(math.asin(min(sminF / t, 1.0)), math.acos(min(smaxG / t, 1.0)))
    b = min(math.asin(min(smaxF / t, 1.0)), math.acos(min(sminG / t, 1.0)))
    if b <= a:
        return 0.0
    m = max(nrad, int(math.ceil(t * (b - a) / ds)))
    dphi = (b - a) / m
    edges = a + np.arange(m + 1) * dphi
    mass = np.diff(slice_mass_array(d, edges))
    mid = a + (np.arange(m) + 0.5) * dphi
    fv = _interp_np(F, j0F, ds, t * np.sin(mid))
    gv = _interp_np(G, j0G, ds, t * np.cos(mid))
    return float(np.sum(mass * fv * gv))


def _bilinear_np(fv, gv, lo, h, n, pts, radii, fsup, gsup, ds, nang, nrad, keep_all, out_sup, out_all):
    d = pts.shape[1]
    for p in range(pts.shape[0]):
        x = pts[p]
        dminF, dmaxF, uF, distF, radF = _window_np(x, fsup)
        dminG, dmaxG, uG, distG, radG = _window_np(x, gsup)
        best = 0.0
        if dminF <= dmaxF and dminG <= dmaxG:
            t_lo = math.hypot(dminF, dminG)
            t_hi = math.hypot(dmaxF, dmaxG)
            active = np.nonzero((radii >= t_lo) & (radii <= t_hi))[0]
            if active.size:
                ta, tb = radii[active[0]], radii[active[-1]]
                sminF = max(dminF, math.sqrt(max(ta * ta - dmaxG * dmaxG, 0.0)))
                smaxF = min(dmaxF, math.sqrt(max(tb * tb - dminG * dminG, 0.0)))
                sminG = max(dminG, math.sqrt(max(ta * ta - dmaxF * dmaxF, 0.0)))
                smaxG = min(dmaxG, math.sqrt(max(tb * tb - dminF * dminF, 0.0)))
                if sminF <= smaxF and sminG <= smaxG:
                    j0F, j0G = math.floor(sminF / ds), math.floor(sminG / ds)
                    F = _profile_np(fv, lo, h, n, x, j0F, math.ceil(smaxF / ds), ds, uF, distF, radF, nang)
                    G = _profile_np(gv, lo, h, n, x, j0G, math.ceil(smaxG / ds), ds, uG, distG, radG, nang)
                    for j in active:
                        v = _sweep_np(d, F, j0F, G, j0G, ds, dminF, dmaxF, dminG, dmaxG, radii[j], nrad)
                        if keep_all:
                            out_all[p, j] = v
                        best = max(best, abs(v))
        out_sup[p] = best


def _linear_np(vals, lo, h, n, pts, radii, sup, ds, nang, out):
    for p in range(pts.shape[0]):
        x = pts[p]
        dmin, dmax, u, dist, rad = _window_np(x, sup)
        for j, s in enumerate(radii):
            if s < dmin or s > dmax:
                out[p, j] = 0.0
            else:
                out[p, j] = _sphere_avg_np(vals, lo, h, n, x, s, u, dist, rad, ds, nang)


def _fixed_np(vals, lo, h, n, pts, t, nodes, weights, out):
    for p in range(pts.shape[0]):
        out[p] = float(np.dot(weights, _look_np(vals, lo, h, n, pts[p] - t * nodes)))


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _impl(name, backend):
    backend = backend or BACKEND
    if backend == "numba":
        if numba is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return globals()[f"_{name}_nb"]
    return globals()[f"_{name}_np"]


def _c(a, dtype=float):
    return np.ascontiguousarray(a, dtype=dtype)


def support_descriptor(vals, geom):
    """Bounding box and bounding ball of the nonzero cells, packed for the kernels.

    Layout: [box lo (d), box hi (d), ball centre (d), ball radius].  None when
    ``vals`` vanishes identically.
    """
    lo, h, n = geom
    nz = np.nonzero(vals)
    if len(nz[0]) == 0:
        return None
    idx = np.stack(nz, axis=1)
    blo = lo + idx.min(axis=0) * h
    bhi = lo + (idx.max(axis=0) + 1) * h
    cen = 0.5 * (blo + bhi)
    centres = lo + (idx + 0.5) * h
    rad = math.sqrt(float(np.max(np.sum((centres - cen) ** 2, axis=1)))) + 0.5 * math.sqrt(float(np.sum(h * h)))
    rad = min(rad, 0.5 * math.sqrt(float(np.sum((bhi - blo) ** 2))))
    return np.concatenate([blo, bhi, cen, [rad * (1.0 + 1e-12)]])


def bilinear_points(fvals, gvals, geom, pts, radii, fsup, gsup, ds, nang, nrad, keep_all=False, backend=None):
    lo, h, n = geom
    pts = _c(pts)
    radii = _c(radii)
    out_sup = np.zeros(pts.shape[0])
    out_all = np.zeros((pts.shape[0], radii.size) if keep_all else (1, 1))
    _impl("bilinear", backend)(_c(fvals).ravel(), _c(gvals).ravel(), _c(lo), _c(h), _c(n, np.int64), pts, radii,
                               _c(fsup), _c(gsup), float(ds), int(nang), int(nrad), bool(keep_all), out_sup, out_all)
    return out_sup, (out_all if keep_all else None)


def linear_points(vals, geom, pts, radii, sup, ds, nang, backend=None):
    lo, h, n = geom
    pts = _c(pts)
    radii = _c(radii)
    out = np.zeros((pts.shape[0], radii.size))
    _impl("linear", backend)(_c(vals).ravel(), _c(lo), _c(h), _c(n, np.int64), pts, radii, _c(sup),
                             float(ds), int(nang), out)
    return out


def fixed_rule_points(vals, geom, pts, t, nodes, weights, backend=None):
    lo, h, n = geom
    pts = _c(pts)
    out = np.zeros(pts.shape[0])
    _impl("fixed", backend)(_c(vals).ravel(), _c(lo), _c(h), _c(n, np.int64), pts, float(t), _c(nodes),
                            _c(weights), out)
    return out
