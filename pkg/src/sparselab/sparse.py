"""Calderon-Zygmund decomposition, stopping-time sparse families and the
empirical sparse domination ratio.

All cube averages over the dyadic subcubes of Q0 come from block-sum
pyramids: level l holds the sums of |f|^p over the (2^l)^d subcubes of
side l(Q0) / 2^l.  Q0 must be aligned with the grid and cover 2^K cells per
axis, so that every subcube down to a single cell is a union of cells.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import INF, DomainError, ResolutionError, as_exponent
from .dyadic import CubeSet, DyadicCube, box_cube, cube_cells, cube_from_corner
from .fields import GridFunction, pairing

SPARSE_CSV_MAGIC = "# sparselab-sparse v1"


def _block_layout(spec, Q0):
    """(slices of Q0 in the grid, K) with 2^K cells per axis."""
    sl = cube_cells(spec, Q0)
    side = float(Q0.side)
    counts = {s.stop - s.start for s in sl}
    if len(counts) != 1:
        raise ResolutionError("Q0 is not covered by a square block of cells")
    b = counts.pop()
    if b == 0 or b & (b - 1):
        raise ResolutionError(f"Q0 spans {b} cells per axis; need a power of two")
    for k in range(spec.d):
        if abs(side / spec.spacing[k] - b) > 1e-9 * b:
            raise ResolutionError("Q0 is not aligned with the grid cells")
    return sl, int(round(math.log2(b)))


def _require_supported(f, sl):
    mask = np.ones(f.spec.shape, bool)
    mask[sl] = False
    if np.any(f.values[mask] != 0):
        raise DomainError("function must vanish outside Q0")


def _coarsen(a, op):
    d = a.ndim
    shape = []
    for s in a.shape:
        shape += [s // 2, 2]
    return op(a.reshape(shape), axis=tuple(range(1, 2 * d, 2)))


def _pyramid(block, p):
    """Level arrays of sum |f|^p (or max |f| for p = inf), finest last."""
    a = np.abs(block)
    if p == INF:
        levels, op = [a], np.max
    else:
        levels, op = [a ** float(p)], np.sum
    while levels[-1].shape[0] > 1:
        levels.append(_coarsen(levels[-1], op))
    return levels[::-1]


def _power_ratio(sub, parent, scale, p):
    """Normalized average ratios (<.>_P / <.>_R) from pyramid entries."""
    if parent <= 0:
        return np.zeros_like(sub, dtype=float)
    if p == INF:
        return sub / parent
    return (sub * scale / parent) ** (1.0 / float(p))


def _up(a, factor):
    for ax in range(a.ndim):
        a = np.repeat(a, factor, axis=ax)
    return a


def _subcube(Q0, l, idx):
    s = Q0.side / (2 ** l)
    corner = tuple(c + int(i) * s for c, i in zip(Q0.corner, idx))
    return cube_from_corner(Q0.lattice_id, Q0.level - l, corner)


@dataclass
class CZDecomposition:
    stopping_cubes: CubeSet
    good: GridFunction
    bad: GridFunction
    threshold: float
    base_exponent: object
    Q0: DyadicCube
    root_average: float
    bound: float

    def check(self, f, tol=1e-10):
        """Reconstruction, mean-zero and L-infinity invariants as a dict of booleans."""
        recon = float(np.max(np.abs(self.good.values + self.bad.values - f.values)))
        scale = max(self.root_average, 1e-300)
        worst_mean = 0.0
        for P in self.stopping_cubes:
            blk = self.bad.values[cube_cells(f.spec, P)]
            worst_mean = max(worst_mean, abs(float(blk.mean())) if blk.size else 0.0)
        sup_good = float(np.max(np.abs(self.good.values)))
        disjoint = _cells_disjoint(f.spec, self.stopping_cubes)
        return {
            "reconstruction": recon <= tol * max(1.0, float(np.max(np.abs(f.values)))),
            "mean_zero": worst_mean <= tol * scale,
            "good_bounded": sup_good <= self.bound * self.root_average * (1 + 1e-12) + 1e-300,
            "disjoint": disjoint,
        }


def _cells_disjoint(spec, cubes):
    count = np.zeros(spec.shape, np.int32)
    for P in cubes:
        count[cube_cells(spec, P)] += 1
    return bool(count.max(initial=0) <= 1)


def cz_decompose(f, Q0, p, C0):
    """Stopping cubes, good part and bad part of f relative to Q0.

    A subcube P is selected when <f>_{P,p} > C0 <f>_{Q0,p} and no strict
    ancestor inside Q0 was selected.  The bad part is f - <f>_P on each
    selected P with the plain mean, the good part is the rest.  ``bound`` is
    the constant C = 2^{d/p} C0 with |good| <= C <f>_{Q0,p}.
    """
    if not C0 > 1:
        raise DomainError("C0 must exceed 1")
    p = as_exponent(p)
    spec = f.spec
    d = spec.d
    sl, K = _block_layout(spec, Q0)
    _require_supported(f, sl)
    block = f.values[sl]
    pyr = _pyramid(block, p)
    plain = [block]
    while plain[-1].shape[0] > 1:
        plain.append(_coarsen(plain[-1], np.sum))
    plain = plain[::-1]
    root = pyr[0].item()
    vol0 = float(Q0.volume)
    if p == INF:
        root_avg = root
        bound = float(C0)
    else:
        root_avg = (root * spec.cell_volume / vol0) ** (1.0 / float(p))
        bound = 2.0 ** (d / float(p)) * C0
    covered = np.zeros((1,) * d, bool)
    cubes = []
    means = np.zeros(block.shape)
    for l in range(1, K + 1):
        covered = _up(covered, 2)
        if p == INF:
            sel = (pyr[l] > C0 * root) & ~covered
        else:
            sel = (pyr[l] * 2.0 ** (d * l) > C0 ** float(p) * root) & ~covered
        if sel.any():
            for idx in np.argwhere(sel):
                cubes.append(_subcube(Q0, l, idx))
            cells = 2 ** (d * (K - l))
            means += _up(np.where(sel, plain[l] / cells, 0.0), 2 ** (K - l))
            covered |= sel
    bad = np.zeros(spec.shape)
    bad[sl] = np.where(covered, block - means, 0.0)
    good = f.values - bad
    return CZDecomposition(CubeSet(cubes), GridFunction(spec, good), GridFunction(spec, bad),
                           float(C0), p, Q0, float(root_avg), bound)


@dataclass
class SparsityReport:
    passed: bool
    eta_target: float
    min_ratio: float
    worst_cube: object
    overlaps: list = field(default_factory=list)
    outside: list = field(default_factory=list)

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        msg = f"{status}: min |E_Q|/|Q| = {self.min_ratio:.6g} (target {self.eta_target:.6g})"
        if self.overlaps:
            a, b = self.overlaps[0]
            msg += f"; E sets overlap for {a} and {b}"
        if self.outside:
            msg += f"; E_Q leaves Q for {self.outside[0]}"
        return msg


class SparseFamily:
    """Cubes with pairwise disjoint exceptional sets E_Q, stored as flat grid cell indices."""

    def __init__(self, spec, cubes, exceptional):
        self.spec = spec
        self.cubes = CubeSet(cubes)
        self.exceptional = {Q: np.unique(np.asarray(exceptional[Q], np.int64)) for Q in self.cubes}
        self.eta_by_cube = {Q: self._ratio(Q) for Q in self.cubes}
        self.eta = min(self.eta_by_cube.values()) if self.cubes else 1.0

    @classmethod
    def from_masks(cls, spec, masks):
        """Build from {cube: boolean grid array or GridFunction}."""
        ex = {}
        for Q, m in masks.items():
            m = m.values != 0 if isinstance(m, GridFunction) else np.asarray(m, bool)
            ex[Q] = np.flatnonzero(m.ravel())
        return cls(spec, list(masks), ex)

    def _ratio(self, Q):
        return self.exceptional[Q].size * self.spec.cell_volume / float(Q.volume)

    def __len__(self):
        return len(self.cubes)

    def mask(self, Q):
        out = np.zeros(int(np.prod(self.spec.shape)), bool)
        out[self.exceptional[Q]] = True
        return out.reshape(self.spec.shape)

    def __repr__(self):
        return f"SparseFamily({len(self.cubes)} cubes, eta={self.eta:.4g})"


def _cube_flat_cells(spec, Q):
    sl = cube_cells(spec, Q)
    grids = np.meshgrid(*[np.arange(s.start, s.stop) for s in sl], indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grids), spec.shape)


def verify_sparsity(S, eta_target):
    """Check |E_Q| >= eta |Q|, E_Q inside Q and pairwise disjointness on the grid."""
    spec = S.spec
    min_ratio, worst = math.inf, None
    outside = []
    owners = []
    for k, Q in enumerate(S.cubes):
        r = S._ratio(Q)
        if r < min_ratio:
            min_ratio, worst = r, Q
        e = S.exceptional[Q]
        if not np.all(np.isin(e, _cube_flat_cells(spec, Q), assume_unique=True)):
            outside.append(Q)
        owners.append(np.full(e.size, k, np.int64))
    overlaps = []
    if S.cubes:
        allidx = np.concatenate([S.exceptional[Q] for Q in S.cubes])
        own = np.concatenate(owners)
        order = np.argsort(allidx, kind="stable")
        si, so = allidx[order], own[order]
        dup = np.flatnonzero(si[1:] == si[:-1])
        pairs = sorted({(int(so[i]), int(so[i + 1])) for i in dup})
        overlaps = [(S.cubes[a], S.cubes[b]) for a, b in pairs]
    if min_ratio is math.inf:
        min_ratio = 1.0
    passed = min_ratio >= eta_target * (1 - 1e-12) and not overlaps and not outside
    return SparsityReport(bool(passed), float(eta_target), float(min_ratio), worst, overlaps, outside)


def _exponents(t):
    if t.r_conj is None:
        raise DomainError("r must be at least 1 for the sparse form")
    return as_exponent(t.p), as_exponent(t.q), as_exponent(t.r_conj)


def build_sparse_family(f, g, h, Q0, t, C0=4.0):
    """Recursive joint stopping time below Q0.

    For a selected cube R the next generation consists of the maximal
    subcubes P of R with
        <f>_{P,p}/<f>_{R,p} + <g>_{P,q}/<g>_{R,q} + <h>_{P,r'}/<h>_{R,r'} > C0,
    a term being 0 when its denominator vanishes.  E_R is R minus the next
    generation, and the recursion stops at single cells.
    """
    if not C0 > 1:
        raise DomainError("C0 must exceed 1")
    spec = f.spec
    if g.spec != spec or h.spec != spec:
        raise DomainError("f, g, h must share a grid")
    d = spec.d
    sl, K = _block_layout(spec, Q0)
    exps = _exponents(t)
    pyrs = []
    for u, e in zip((f, g, h), exps):
        _require_supported(u, sl)
        pyrs.append(_pyramid(u.values[sl], e))
    starts = np.array([s.start for s in sl], np.int64)

    cubes, ex = [], {}
    stack = [(0, np.zeros(d, np.int64))]
    while stack:
        lR, I = stack.pop()
        R = _subcube(Q0, lR, I)
        cubes.append(R)
        width = 2 ** (K - lR)
        covered = np.zeros((1,) * d, bool)
        for l in range(lR + 1, K + 1):
            covered = _up(covered, 2)
            k = 2 ** (l - lR)
            lo = I * k
            region = tuple(slice(a, a + k) for a in lo)
            total = np.zeros((k,) * d)
            for pyr, e in zip(pyrs, exps):
                total += _power_ratio(pyr[l][region], pyr[lR][tuple(I)], 2.0 ** (d * (l - lR)), e)
            sel = (total > C0) & ~covered
            if sel.any():
                for idx in np.argwhere(sel):
                    stack.append((l, lo + idx))
                covered |= sel
        free = ~_up(covered, width // covered.shape[0])
        local = np.argwhere(free) + starts + I * width
        ex[R] = np.ravel_multi_index(tuple(local.T), spec.shape) if local.size else np.zeros(0, np.int64)
    return SparseFamily(spec, cubes, ex)


def sparse_form(S, f, g, h, t):
    """sum over S of |Q| <f>_{Q,p} <g>_{Q,q} <h>_{Q,r'}."""
    from .dyadic import cube_average
    ep, eq, er = _exponents(t)
    total = 0.0
    for Q in S.cubes:
        total += float(Q.volume) * cube_average(f, Q, ep) * cube_average(g, Q, eq) * cube_average(h, Q, er)
    return total


MAXIMAL_KINDS = ("full", "lacunary", "localized")


def _maximal_on(f, g, h, kind, quad, levels, n_t_per_octave, backend):
    from .maximal import RadiusGrid, bilinear_maximal, default_levels, octave_radii
    if kind not in MAXIMAL_KINDS:
        raise DomainError(f"unknown maximal kind {kind!r}")
    if kind == "localized":
        radii = RadiusGrid(1.0, 2.0, n_t_per_octave).radii()
    else:
        m_lo, m_hi = levels or default_levels(f.spec)
        if kind == "full":
            radii = octave_radii(m_lo, m_hi, n_t_per_octave)
        else:
            radii = 2.0 ** np.arange(m_lo, m_hi + 1)
    return bilinear_maximal(f, g, radii, quad=quad, where=h)


def domination_ratio(f, g, h, t, maximal_kind="full", Q0=None, C0=4.0, quad=None, levels=None,
                     n_t_per_octave=33, backend=None):
    """<M(f, g), |h|> divided by the sparse form of the stopping-time family.

    Q0 defaults to the grid box viewed as a dyadic cube.  Returns
    (ratio, family); the ratio is inf when the form vanishes but the
    pairing does not.
    """
    Q0 = Q0 or box_cube(f.spec)
    S = build_sparse_family(f, g, h, Q0, t, C0)
    m = _maximal_on(f, g, h, maximal_kind, quad, levels, n_t_per_octave, backend)
    num = pairing(m, abs(h))
    den = sparse_form(S, f, g, h, t)
    if den == 0:
        return (math.inf if num > 0 else 0.0), S
    return num / den, S


def write_family_csv(S, path):
    with open(path, "w", newline="") as fh:
        fh.write(SPARSE_CSV_MAGIC + "\n")
        w = csv.writer(fh)
        d = S.spec.d
        w.writerow(["lattice_id", "level"] + [f"k{i}" for i in range(d)] + ["eta_Q"])
        for Q in S.cubes:
            w.writerow([Q.lattice_id, Q.level, *Q.coords, repr(S.eta_by_cube[Q])])


def read_family_csv(path):
    """Rows of (cube, eta_Q) from a family CSV."""
    with open(path, newline="") as fh:
        if fh.readline().strip() != SPARSE_CSV_MAGIC:
            raise DomainError("not a sparselab sparse-family file")
        rows = list(csv.reader(fh))
    out = []
    for row in rows[1:]:
        vals = [int(v) for v in row[:-1]]
        out.append((DyadicCube(vals[0], vals[1], tuple(vals[2:])), float(row[-1])))
    return out
