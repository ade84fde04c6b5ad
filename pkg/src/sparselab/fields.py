"""Functions sampled on cell-centred regular grids over boxes in R^d.

Grid point i along an axis sits at ``lo + (i + 1/2) * spacing`` and owns the
cell ``[lo + i*spacing, lo + (i+1)*spacing)``.  Off-grid lookups return the
value of the containing cell; everything outside the box is zero.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DomainError, ShapeMismatchError, as_exponent, INF


@dataclass(frozen=True)
class GridSpec:
    d: int
    lo: tuple
    hi: tuple
    n: int

    def __init__(self, d, lo, hi, n):
        if d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {d}")
        lo = tuple(float(v) for v in np.broadcast_to(np.asarray(lo, float), (d,)))
        hi = tuple(float(v) for v in np.broadcast_to(np.asarray(hi, float), (d,)))
        if any(b <= a for a, b in zip(lo, hi)):
            raise DomainError("need hi > lo on every axis")
        if int(n) < 2:
            raise DomainError("need at least 2 samples per axis")
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", int(n))

    @classmethod
    def cube(cls, d, half_width, n):
        return cls(d, -half_width, half_width, n)

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def spacing(self):
        return tuple((b - a) / self.n for a, b in zip(self.lo, self.hi))

    @property
    def min_spacing(self):
        return min(self.spacing)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    def axis(self, k):
        h = self.spacing[k]
        return self.lo[k] + (np.arange(self.n) + 0.5) * h

    def mesh(self):
        return np.meshgrid(*[self.axis(k) for k in range(self.d)], indexing="ij")

    def points(self):
        """All grid points as an (N, d) array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def cell_index(self, x):
        """Integer cell indices of points ``x`` (..., d); -1 marks outside."""
        x = np.asarray(x, float)
        idx = np.empty(x.shape, dtype=np.int64)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for k in range(self.d):
            i = np.floor((x[..., k] - self.lo[k]) / self.spacing[k]).astype(np.int64)
            inside &= (i >= 0) & (i < self.n)
            idx[..., k] = i
        idx[~inside] = -1
        return idx, inside

    def geometry(self):
        """Arrays consumed by the compiled kernels."""
        return (np.array(self.lo), np.array(self.spacing), np.full(self.d, self.n, dtype=np.int64))


class GridFunction:
    __slots__ = ("spec", "values")

    def __init__(self, spec, values):
        vals = np.array(values, dtype=float, copy=True)
        if vals.size != int(np.prod(spec.shape)):
            raise ShapeMismatchError(f"expected {spec.shape} values, got {vals.shape}")
        vals = vals.reshape(spec.shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid values must be finite")
        vals.setflags(write=False)
        self.spec = spec
        self.values = vals

    @classmethod
    def zeros(cls, spec):
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec, c):
        return cls(spec, np.full(spec.shape, float(c)))

    @classmethod
    def from_callable(cls, spec, fn):
        return cls(spec, fn(*spec.mesh()))

    def _check(self, other):
        if isinstance(other, GridFunction) and other.spec != self.spec:
            raise ShapeMismatchError("grid functions live on different grids")

    def _binary(self, other, op):
        self._check(other)
        b = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.spec, op(self.values, b))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.spec, -self.values)

    def __abs__(self):
        return GridFunction(self.spec, np.abs(self.values))

    def __repr__(self):
        return f"GridFunction(d={self.spec.d}, n={self.spec.n}, box={self.spec.lo}..{self.spec.hi})"

    def at(self, x):
        """Nearest-cell lookup at points ``x`` of shape (d,) or (..., d)."""
        x = np.asarray(x, float)
        if x.ndim == 0:
            x = x.reshape(1)
        idx, inside = self.spec.cell_index(x)
        out = np.zeros(x.shape[:-1])
        if np.any(inside):
            out[inside] = self.values[tuple(idx[inside].T)]
        return out if out.ndim else float(out)

    def resample(self, spec):
        """Nearest-cell lookup at the grid points of another grid."""
        if spec == self.spec:
            return self
        if spec.d != self.spec.d:
            raise ShapeMismatchError("dimension mismatch")
        return GridFunction(spec, self.at(spec.points()).reshape(spec.shape))

    def support_box(self):
        """Cell-index bounds (lo_idx, hi_idx_inclusive) of the nonzero set, or None."""
        nz = np.nonzero(self.values)
        if len(nz[0]) == 0:
            return None
        return np.array([a.min() for a in nz]), np.array([a.max() for a in nz])

    def support_bbox(self):
        """Closed coordinate box covering every cell with a nonzero value, or None."""
        b = self.support_box()
        if b is None:
            return None
        lo, h = np.array(self.spec.lo), np.array(self.spec.spacing)
        return lo + b[0] * h, lo + (b[1] + 1) * h

    def integral(self):
        return float(np.sum(self.values) * self.spec.cell_volume)


@dataclass(frozen=True)
class RegionSpec:
    kind: str
    center: tuple = ()
    r_in: float = 0.0
    r_out: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ball", "annulus", "box"):
            raise DomainError(f"unknown region kind {self.kind!r}")
        if self.kind == "ball" and self.r_out < 0:
            raise DomainError("radius must be nonnegative")
        if self.kind == "annulus" and not (0 <= self.r_in < self.r_out):
            raise DomainError("annulus needs 0 <= r_in < r_out")
        if self.kind == "box" and any(b < a for a, b in zip(self.lo, self.hi)):
            raise DomainError("empty box")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=tuple(np.atleast_1d(np.asarray(center, float)).tolist()), r_out=float(radius))

    @classmethod
    def annulus(cls, center, r_in, r_out):
        return cls("annulus", center=tuple(np.atleast_1d(np.asarray(center, float)).tolist()),
                   r_in=float(r_in), r_out=float(r_out))

    @classmethod
    def box(cls, lo, hi):
        lo = tuple(np.atleast_1d(np.asarray(lo, float)).tolist())
        hi = tuple(np.atleast_1d(np.asarray(hi, float)).tolist())
        return cls("box", lo=lo, hi=hi)

    def _center(self, d):
        return np.broadcast_to(np.asarray(self.center, float), (d,))

    def contains(self, x):
        x = np.asarray(x, float)
        d = x.shape[-1]
        if self.kind == "box":
            lo = np.broadcast_to(np.asarray(self.lo, float), (d,))
            hi = np.broadcast_to(np.asarray(self.hi, float), (d,))
            return np.all((x >= lo) & (x <= hi), axis=-1)
        r = np.sqrt(np.sum((x - self._center(d)) ** 2, axis=-1))
        if self.kind == "ball":
            return r <= self.r_out
        return (r >= self.r_in) & (r <= self.r_out)

    def bbox(self, d):
        if self.kind == "box":
            return (np.broadcast_to(np.asarray(self.lo, float), (d,)).copy(),
                    np.broadcast_to(np.asarray(self.hi, float), (d,)).copy())
        c = self._center(d)
        return c - self.r_out, c + self.r_out

    def measure(self, d):
        """Exact Lebesgue measure of the region."""
        if self.kind == "box":
            lo, hi = self.bbox(d)
            return float(np.prod(hi - lo))
        vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        if self.kind == "ball":
            return vol * self.r_out ** d
        return vol * (self.r_out ** d - self.r_in ** d)

    def scaled(self, c):
        if self.kind == "box":
            return RegionSpec.box(np.multiply(self.lo, c), np.multiply(self.hi, c))
        return RegionSpec(self.kind, center=tuple(np.multiply(self.center, c).tolist()),
                          r_in=self.r_in * c, r_out=self.r_out * c)


def make_indicator(region, spec):
    inside = region.contains(spec.points()).reshape(spec.shape)
    return GridFunction(spec, inside.astype(float))


def snap_shift(spec, h):
    """Integer cell offsets for a shift vector, warning when snapping moves it."""
    h = np.broadcast_to(np.asarray(h, float), (spec.d,))
    sp = np.array(spec.spacing)
    k = np.rint(h / sp).astype(np.int64)
    if np.any(np.abs(k * sp - h) > 1e-9 * sp):
        warnings.warn(f"shift {tuple(h)} is not a multiple of the grid spacing; snapped to {tuple(k * sp)}",
                      stacklevel=3)
    return k


def shift(f, h):
    """(shift f)(x) = f(x - h) with h snapped to the grid and zero fill."""
    spec = f.spec
    k = snap_shift(spec, h)
    if np.any(np.abs(k) >= spec.n):
        warnings.warn("shift exceeds the box extent; result is identically zero", stacklevel=2)
        return GridFunction.zeros(spec)
    out = np.zeros(spec.shape)
    src, dst = [], []
    for kk in k:
        kk = int(kk)
        if kk >= 0:
            src.append(slice(0, spec.n - kk))
            dst.append(slice(kk, spec.n))
        else:
            src.append(slice(-kk, spec.n))
            dst.append(slice(0, spec.n + kk))
    out[tuple(dst)] = f.values[tuple(src)]
    return GridFunction(spec, out)


def lp_norm(f, p):
    p = as_exponent(p)
    a = np.abs(f.values)
    if p == INF:
        return float(a.max())
    p = float(p)
    if not p > 0:
        raise DomainError("p must be positive")
    return float((np.sum(a ** p) * f.spec.cell_volume) ** (1.0 / p))


def pairing(u, h):
    if u.spec != h.spec:
        raise ShapeMismatchError("pairing needs both functions on the same grid")
    return float(np.sum(u.values * h.values) * u.spec.cell_volume)


CSV_MAGIC = "# sparselab-grid v1"


def _spec_header(spec):
    lo = " ".join(repr(v) for v in spec.lo)
    hi = " ".join(repr(v) for v in spec.hi)
    return f"d={spec.d};lo={lo};hi={hi};n={spec.n}"


def _parse_header(line):
    kv = dict(item.split("=", 1) for item in line.strip().lstrip("#").strip().split(";"))
    return GridSpec(int(kv["d"]), [float(v) for v in kv["lo"].split()],
                    [float(v) for v in kv["hi"].split()], int(kv["n"]))


def write_csv(f, path):
    """CSV of (index, value) in row-major order, preceded by two comment lines."""
    flat = f.values.ravel(order="C")
    with open(path, "w") as fh:
        fh.write(CSV_MAGIC + "\n")
        fh.write("# " + _spec_header(f.spec) + "\n")
        fh.write("index,value\n")
        for i, v in enumerate(flat):
            fh.write(f"{i},{float(v)!r}\n")


def read_csv(path):
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != CSV_MAGIC:
            raise DomainError(f"{path}: not a sparselab grid file")
        spec = _parse_header(fh.readline())
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    vals = np.zeros(int(np.prod(spec.shape)))
    vals[data[:, 0].astype(np.int64)] = data[:, 1]
    return GridFunction(spec, vals)


def write_binary(f, path):
    """Raw little-endian float64 values in row-major order; the grid is not stored."""
    f.values.astype("<f8").tofile(path)


def read_binary(path, spec):
    return GridFunction(spec, np.fromfile(path, dtype="<f8"))
