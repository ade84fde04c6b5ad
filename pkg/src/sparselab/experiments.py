"""Extremizer families, sharpness scaling runs, continuity decay and the
radius-perturbation scaling law.

The three extremizer families (all indicators, delta the scale parameter):

* ``ball-annulus``: f = 1_B(0, delta), g = 1_B(0, C delta), h = 1 on the annulus
  1/sqrt2 <= |x| <= 1/sqrt2 + EPS0.  Lower bound ~ delta^(2d-1).
* ``annuli-ball``: f, g = thin annuli around radius 1/sqrt2 of half-widths
  2 delta and C delta, h = 1_B(0, delta).  Lower bound ~ delta^(1+d).
* ``knapp-boxes``: f, g = plates [-C_i sqrt(delta), C_i sqrt(delta)]^(d-1) x
  [-C_i delta, C_i delta], h = 1 on [-sqrt(delta), sqrt(delta)]^(d-1) x
  [1/sqrt2, sqrt2].  Lower bound ~ delta^(d + (d-1)/2).
"""

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .averaging import Quadrature, linear_profiles
from .core import (DomainError, InsufficientDataError, ResolutionError, as_exponent, fit_power_law,
                   in_region, recip)
from .fields import GridFunction, GridSpec, RegionSpec, lp_norm, make_indicator, pairing
from .maximal import RadiusGrid, continuity_norm, localized_maximal

SQRT2 = math.sqrt(2.0)
EPS0 = 0.125
GUARD_CELLS = 4
EXPERIMENT_QUAD = Quadrature(64, 128, 1.0)
MIN_EVAL_POINTS = 16


class ExtremizerKind(Enum):
    BALL_ANNULUS = "ball-annulus"
    ANNULI_BALL = "annuli-ball"
    KNAPP_BOXES = "knapp-boxes"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise DomainError(f"unknown extremizer kind {value!r}; choose from "
                              f"{', '.join(k.value for k in cls)}") from None


# Picked by ``calibrate_constants`` (d = 2, n = 256, delta = 2^-3..2^-5 over
# CALIBRATION_CANDIDATES) and frozen here for every dimension.
CONSTANTS = {
    ExtremizerKind.BALL_ANNULUS: {"C": 3.0},
    ExtremizerKind.ANNULI_BALL: {"C": 3.0},
    ExtremizerKind.KNAPP_BOXES: {"C1": 2.0, "C2": 2.0},
}

CALIBRATION_CANDIDATES = {
    ExtremizerKind.BALL_ANNULUS: [{"C": c} for c in (0.5, 1.0, 1.5, 2.0, 3.0)],
    ExtremizerKind.ANNULI_BALL: [{"C": c} for c in (1.0, 1.5, 2.0, 3.0)],
    ExtremizerKind.KNAPP_BOXES: [{"C1": a, "C2": b} for a in (0.5, 1.0, 2.0) for b in (0.5, 1.0, 2.0)],
}


def default_box(kind, d):
    """(lo, hi) of the default grid box; the Knapp box is shifted up to hold h."""
    kind = ExtremizerKind.parse(kind)
    if kind is ExtremizerKind.KNAPP_BOXES:
        return (-1.0,) * (d - 1) + (-0.5,), (1.0,) * (d - 1) + (1.5,)
    return (-1.0,) * d, (1.0,) * d


def _guard(spec, delta):
    h = spec.min_spacing
    if delta < GUARD_CELLS * h * (1 - 1e-12):
        width = max(b - a for a, b in zip(spec.lo, spec.hi))
        need = int(math.ceil(GUARD_CELLS * width / delta))
        raise ResolutionError(f"delta = {delta} needs at least {GUARD_CELLS} cells per delta; "
                              f"use n_per_axis >= {need} (have {spec.n})")


def _regions(kind, d, delta, consts):
    r0 = 1.0 / SQRT2
    if kind is ExtremizerKind.BALL_ANNULUS:
        return (RegionSpec.ball(0.0, delta), RegionSpec.ball(0.0, consts["C"] * delta),
                RegionSpec.annulus(0.0, r0, r0 + EPS0))
    if kind is ExtremizerKind.ANNULI_BALL:
        c = consts["C"]
        return (RegionSpec.annulus(0.0, r0 - 2 * delta, r0 + 2 * delta),
                RegionSpec.annulus(0.0, r0 - c * delta, r0 + c * delta),
                RegionSpec.ball(0.0, delta))
    if d < 2:
        raise DomainError("the Knapp example needs d >= 2")
    sq = math.sqrt(delta)

    def plate(c):
        return RegionSpec.box((-c * sq,) * (d - 1) + (-c * delta,), (c * sq,) * (d - 1) + (c * delta,))

    return (plate(consts["C1"]), plate(consts["C2"]),
            RegionSpec.box((-sq,) * (d - 1) + (r0,), (sq,) * (d - 1) + (SQRT2,)))


def _thin_width(kind, delta):
    """Smallest extent of supp h, used to pick the evaluation grid."""
    if kind is ExtremizerKind.BALL_ANNULUS:
        return EPS0
    if kind is ExtremizerKind.ANNULI_BALL:
        return 2 * delta
    return 2 * math.sqrt(delta)


def extremizer_spec(kind, d, n):
    lo, hi = default_box(kind, d)
    return GridSpec(d, lo, hi, n)


def make_extremizer(kind, d, delta, n=1024, constants=None, spec=None):
    """(f, g, h) indicator GridFunctions of the chosen family at scale delta."""
    kind = ExtremizerKind.parse(kind)
    if d not in (1, 2, 3):
        raise DomainError("d must be 1, 2 or 3")
    consts = dict(CONSTANTS[kind])
    consts.update(constants or {})
    spec = spec or extremizer_spec(kind, d, n)
    _guard(spec, delta)
    return tuple(make_indicator(reg, spec) for reg in _regions(kind, d, delta, consts))


def eval_spec(kind, spec, delta):
    """Coarser grid for the pairing: power-of-two stride, >= 16 points across supp h."""
    kind = ExtremizerKind.parse(kind)
    stride = 1
    thin = _thin_width(kind, delta)
    while spec.n % (2 * stride) == 0 and thin / (2 * stride * spec.min_spacing) >= MIN_EVAL_POINTS:
        stride *= 2
    return GridSpec(spec.d, spec.lo, spec.hi, spec.n // stride)


def radii_for(deltas):
    """Geometric grid on [1, 2] with at least 4 / delta_min nodes."""
    n_t = max(33, int(math.ceil(4.0 / min(deltas))) + 1)
    return RadiusGrid(1.0, 2.0, n_t)


def expected_lower_slope(kind, d):
    kind = ExtremizerKind.parse(kind)
    if kind is ExtremizerKind.BALL_ANNULUS:
        return 2 * d - 1
    if kind is ExtremizerKind.ANNULI_BALL:
        return 1 + d
    return d + (d - 1) / 2


def expected_upper_slope(kind, d, t):
    kind = ExtremizerKind.parse(kind)
    ip, iq = float(recip(t.p)), float(recip(t.q))
    irc = float(recip(t.r_conj)) if t.r_conj is not None else None
    if irc is None:
        raise DomainError("r must be at least 1")
    if kind is ExtremizerKind.BALL_ANNULUS:
        return d * (ip + iq)
    if kind is ExtremizerKind.ANNULI_BALL:
        return ip + iq + d * irc
    return (d + 1) / 2 * (ip + iq) + (d - 1) / 2 * irc


@dataclass
class SharpnessPoint:
    delta: float
    lower: float
    upper: float


def sharpness_point(kind, d, delta, t, n=1024, constants=None, rg=None, quad=None, backend=None):
    kind = ExtremizerKind.parse(kind)
    f, g, h = make_extremizer(kind, d, delta, n, constants)
    consts = dict(CONSTANTS[kind])
    consts.update(constants or {})
    rg = rg or radii_for([delta])
    ospec = eval_spec(kind, f.spec, delta)
    h_eval = make_indicator(_regions(kind, d, delta, consts)[2], ospec)
    m = localized_maximal(f, g, rg, quad=quad or EXPERIMENT_QUAD, out_spec=ospec, where=h_eval,
                          backend=backend)
    lower = pairing(m, h_eval)
    upper = lp_norm(f, t.p) * lp_norm(g, t.q) * lp_norm(h, t.r_conj)
    return SharpnessPoint(float(delta), float(lower), float(upper))


def sharpness_points(kind, d, deltas, t, n=1024, constants=None, quad=None, backend=None):
    if len(deltas) < 3:
        raise InsufficientDataError("need at least 3 scales")
    if t.r_conj is None:
        raise DomainError("r must be at least 1")
    kind = ExtremizerKind.parse(kind)
    spec = extremizer_spec(kind, d, n)
    for delta in deltas:
        _guard(spec, delta)
    rg = radii_for(deltas)
    return [sharpness_point(kind, d, dl, t, n, constants, rg, quad, backend) for dl in deltas]


def sharpness_run(kind, d, deltas, t, n=1024, constants=None, quad=None, backend=None):
    """(lower fit, upper fit) of the pairing and the norm product against delta.

    The lower value is <localized_maximal(f, g), h> with at least
    4 / delta_min radii on [1, 2], evaluated on a coarser grid across supp h.
    """
    pts = sharpness_points(kind, d, deltas, t, n, constants, quad, backend)
    return (fit_power_law([(p.delta, p.lower) for p in pts]),
            fit_power_law([(p.delta, p.upper) for p in pts]))


def calibrate_constants(kind, d, candidates, deltas, t, n=256, quad=None, backend=None):
    """Pick the constants maximizing min over delta of pairing / delta^expected.

    ``candidates`` is a list of constant dicts.  Returns (best, table) with the
    table listing (constants, objective) for every candidate.
    """
    kind = ExtremizerKind.parse(kind)
    e = expected_lower_slope(kind, d)
    table = []
    for consts in candidates:
        pts = sharpness_points(kind, d, deltas, t, n, consts, quad, backend)
        table.append((dict(consts), min(p.lower / p.delta ** e for p in pts)))
    best = max(table, key=lambda row: row[1])[0]
    return best, table


def _inv(x):
    return Fraction(0) if x == math.inf else Fraction(1) / Fraction(x)


def necessity_bounds(d, t):
    """The three upper bounds for 1/p + 1/q as exact fractions."""
    ir = _inv(as_exponent(t.r))
    return {
        ExtremizerKind.ANNULI_BALL: 1 + d * ir,
        ExtremizerKind.BALL_ANNULUS: Fraction(2 * d - 1, d),
        ExtremizerKind.KNAPP_BOXES: Fraction(2 * d, d + 1) + Fraction(d - 1, d + 1) * ir,
    }


def necessity_check(kind, d, t):
    """1/p + 1/q <= the bound of one example (kind None: the minimum of all three)."""
    s = _inv(as_exponent(t.p)) + _inv(as_exponent(t.q))
    bounds = necessity_bounds(d, t)
    if kind is None:
        return s <= min(bounds.values())
    return s <= bounds[ExtremizerKind.parse(kind)]


CONTINUITY_BOX = 2.0
CONTINUITY_N = 1024
CONTINUITY_EVAL_SPACING = 2.0 ** -6
GAUSS_SIGMA = 1.0 / 16


def continuity_inputs(d, input_kind, n=CONTINUITY_N, box=CONTINUITY_BOX):
    spec = GridSpec.cube(d, box, n)
    if input_kind == "indicator":
        f = make_indicator(RegionSpec.ball(0.0, 0.25), spec)
        return f, f
    if input_kind == "gaussian":
        def gauss(*xs):
            r2 = sum(x * x for x in xs)
            return np.where(r2 <= (5 * GAUSS_SIGMA) ** 2, np.exp(-r2 / (2 * GAUSS_SIGMA ** 2)), 0.0)
        f = GridFunction.from_callable(spec, gauss)
        return f, f
    raise DomainError(f"unknown input kind {input_kind!r}")


def continuity_values(d, t, h_list, input_kind="indicator", n=CONTINUITY_N, box=CONTINUITY_BOX,
                      eval_spacing=CONTINUITY_EVAL_SPACING, quad=None, backend=None):
    f, g = continuity_inputs(d, input_kind, n, box)
    m = max(1, int(round(2 * box / eval_spacing)))
    ospec = GridSpec.cube(d, box, min(n, m))
    out = []
    for hv in h_list:
        vec = (float(hv),) + (0.0,) * (d - 1)
        out.append((float(hv), continuity_norm(f, g, vec, t, quad=quad or EXPERIMENT_QUAD,
                                               out_spec=ospec, backend=backend)))
    return out


def continuity_decay_run(d, t, h_list, input_kind="indicator", n=CONTINUITY_N, box=CONTINUITY_BOX,
                         eval_spacing=CONTINUITY_EVAL_SPACING, quad=None, backend=None):
    """Fitted eta in ||sup_{1<=t<=2} |A_t(f, g - g(. - h e_1))| ||_r ~ |h|^eta."""
    if not in_region(d, t):
        raise DomainError(f"{t} is outside the boundedness region for d = {d}")
    if any(not (0 < hv < 1) for hv in h_list):
        raise DomainError("shifts must lie in (0, 1)")
    return fit_power_law(continuity_values(d, t, h_list, input_kind, n, box, eval_spacing, quad, backend))


def delta2_position(p, r):
    """'interior', 'boundary' or 'outside' for (1/p, 1/r) and the triangle
    with vertices (0, 0), (1/2, 1/2), (2/5, 1/5)."""
    x, y = _inv(as_exponent(p)), _inv(as_exponent(r))
    gaps = (x - y, y - x / 2, y - 3 * x + 1)
    if all(gp > 0 for gp in gaps):
        return "interior"
    if all(gp >= 0 for gp in gaps):
        return "boundary"
    return "outside"


def radial_bump(spec, radius=0.5):
    """Smooth bump exp(-1 / (1 - |x|^2 / radius^2)) supported in B(0, radius)."""
    def fn(*xs):
        u = sum(x * x for x in xs) / radius ** 2
        out = np.zeros_like(u)
        inside = u < 1
        out[inside] = np.exp(-1.0 / (1.0 - u[inside]))
        return out
    return GridFunction.from_callable(spec, fn)


RP_BOX = 2.5
RP_N = 640
RP_EVAL_STRIDE = 4
RP_RADII = 161


def _window_range(prof, width):
    """max over index windows of length ``width`` of (max - min), per row."""
    best = np.zeros(prof.shape[0])
    for k in range(prof.shape[1] - width + 1):
        blk = prof[:, k:k + width]
        best = np.maximum(best, blk.max(axis=1) - blk.min(axis=1))
    return best


@dataclass
class RadiusPerturbationResult:
    p: object
    r: object
    values: dict
    eps_fits: dict
    gamma_fits: dict

    def rows(self):
        return sorted(self.values.items())


def radius_perturbation_values(p, r, gamma_list, eps_list, f0=None, d=2, n=RP_N, box=RP_BOX,
                               eval_stride=RP_EVAL_STRIDE, n_radii=RP_RADII, quad=None, backend=None):
    """{(gamma, eps): ||sup_{s,t in [1,2], |s-t| < gamma} |A_{eps s} f_eps - A_{eps t} f_eps| ||_r / ||f_eps||_p}.

    f_eps(x) = f0(x / eps) is the dilated profile on one fixed grid, so the
    quotient carries the scaling eps^(2/r - 2/p) exactly up to discretization.
    """
    spec = GridSpec.cube(d, box, n)
    ospec = GridSpec.cube(d, box, n // eval_stride)
    if f0 is None:
        f0 = lambda pts: radial_bump(spec).at(pts)  # noqa: E731
    elif isinstance(f0, GridFunction):
        base = f0
        f0 = base.at
    s = np.linspace(1.0, 2.0, n_radii)
    ds = s[1] - s[0]
    pts = spec.points()
    out = {}
    for eps in eps_list:
        if not 0 < eps <= 1:
            raise DomainError("eps must lie in (0, 1]")
        f = GridFunction(spec, np.asarray(f0(pts / eps), float).reshape(spec.shape))
        reach = eps * (2.0 + 1.0)
        where = np.linalg.norm(ospec.points(), axis=1).reshape(ospec.shape) <= reach
        prof, idx, _ = linear_profiles(f, eps * s, quad or EXPERIMENT_QUAD, out_spec=ospec, where=where,
                                       backend=backend)
        norm_f = lp_norm(f, p)
        for gam in gamma_list:
            if not 0 < gam < 0.5:
                raise DomainError("gamma must lie in (0, 1/2)")
            width = int(math.floor(gam / ds - 1e-9)) + 1
            sup = np.zeros(int(np.prod(ospec.shape)))
            sup[idx] = _window_range(prof, width)
            val = lp_norm(GridFunction(ospec, sup.reshape(ospec.shape)), r)
            out[(float(gam), float(eps))] = val / norm_f
    return out


def radius_perturbation_run(p, r, gamma_list, eps_list, f0=None, d=2, **kw):
    """Scaling table with eps-slope fits at each gamma and gamma-slope fits at each eps."""
    if d != 2:
        raise DomainError("the radius-perturbation law is stated for d = 2")
    pos = delta2_position(p, r)
    if pos != "interior":
        # The eps-scaling comes from a dilation identity and holds for any
        # exponents; only the gamma gain needs the open triangle.
        warnings.warn(f"(1/p, 1/r) = ({_inv(as_exponent(p))}, {_inv(as_exponent(r))}) is {pos} "
                      "relative to the triangle; the gamma gain is not guaranteed there", stacklevel=2)
    if len(set(gamma_list)) < 1 or len(set(eps_list)) < 1:
        raise InsufficientDataError("need nonempty gamma and eps lists")
    vals = radius_perturbation_values(p, r, gamma_list, eps_list, f0, d, **kw)
    eps_fits = {}
    gamma_fits = {}
    if len(eps_list) >= 3:
        for gam in gamma_list:
            eps_fits[float(gam)] = fit_power_law([(e, vals[(float(gam), float(e))]) for e in eps_list])
    if len(gamma_list) >= 3:
        for e in eps_list:
            gamma_fits[float(e)] = fit_power_law([(g, vals[(float(g), float(e))]) for g in gamma_list])
    if not eps_fits and not gamma_fits:
        raise InsufficientDataError("need at least 3 values of gamma or eps")
    return RadiusPerturbationResult(as_exponent(p), as_exponent(r), vals, eps_fits, gamma_fits)


SUITE_SEED = 20240917
SUITE_SIZE = {1: 20, 2: 20}
SPARSE_N = {1: 256, 2: 128}


SUITE_LATTICE = {1: 128, 2: 32, 3: 16}
SUITE_MAX_CELLS = {1: 38, 2: 10, 3: 5}


def _random_region(rng, d):
    """Box with corners on the lattice (1/L) Z^d, L = SUITE_LATTICE[d].

    Sides are log-uniform between 1 and SUITE_MAX_CELLS lattice steps and the
    lower corner lies in [1/4, 3/4)^d, so every grid whose size is a multiple
    of L represents the box exactly.
    """
    L = SUITE_LATTICE[d]
    sides = np.floor(np.exp(rng.uniform(0.0, math.log(SUITE_MAX_CELLS[d] + 1), d))).astype(int)
    corner = rng.integers(L // 4, 3 * L // 4, d)
    return RegionSpec.box(tuple(corner / L), tuple((corner + sides) / L))


def random_suite(d, size, seed=SUITE_SEED):
    """Each of f, g, h is a sum of 1-3 random lattice-box indicators in [0, 1)^d."""
    rng = np.random.default_rng([seed, d])
    out = []
    for _ in range(size):
        out.append(tuple([_random_region(rng, d) for _ in range(int(rng.integers(1, 4)))] for _ in range(3)))
    return out


def suite_functions(regions_triple, spec):
    fs = []
    for regions in regions_triple:
        v = np.zeros(spec.shape)
        for reg in regions:
            v += make_indicator(reg, spec).values
        fs.append(GridFunction(spec, v))
    return tuple(fs)


def unit_box_spec(d, n):
    return GridSpec(d, 0.0, 1.0, n)


@dataclass
class SparseCheckRow:
    d: int
    index: int
    n: int
    cz_ok: bool
    eta: float
    sparsity_ok: bool
    ratio: float
    cubes: int


def sparse_check(d, t, size=None, n=None, C0=None, seed=SUITE_SEED, maximal_kind="full",
                 n_t_per_octave=9, quad=None, backend=None):
    """Run CZ invariants, family sparsity and the domination ratio on the random suite."""
    from .dyadic import box_cube
    from .sparse import build_sparse_family, cz_decompose, domination_ratio, verify_sparsity
    size = size or SUITE_SIZE.get(d, 10)
    n = n or SPARSE_N.get(d, 64)
    C0 = C0 or 2.0 * 3 ** d
    spec = unit_box_spec(d, n)
    Q0 = box_cube(spec)
    rows = []
    for i, regs in enumerate(random_suite(d, size, seed)):
        f, g, h = suite_functions(regs, spec)
        cz_ok = True
        for u, e in ((f, t.p), (g, t.q), (h, t.r_conj)):
            cz = cz_decompose(u, Q0, e, C0)
            cz_ok = cz_ok and all(cz.check(u).values())
        ratio, S = domination_ratio(f, g, h, t, maximal_kind, Q0, C0, quad=quad or EXPERIMENT_QUAD,
                                    n_t_per_octave=n_t_per_octave, backend=backend)
        rep = verify_sparsity(S, S.eta)
        rows.append(SparseCheckRow(d, i, n, cz_ok, S.eta, rep.passed, ratio, len(S)))
    return rows


POINTWISE_N = 64


def pointwise_ratios(size=10, n=POINTWISE_N, seed=SUITE_SEED, n_t_per_octave=9, quad=None, backend=None):
    """Per input, max over grid points of M(f, g) / (HL f * M_linear g) in d = 2."""
    from .maximal import default_levels, full_maximal, hardy_littlewood_maximal, linear_spherical_maximal
    spec = unit_box_spec(2, n)
    m_lo, m_hi = default_levels(spec)
    # Uniform radii half a cell apart so thin supports of g are never stepped over.
    lin_radii = np.arange(1, int(math.ceil(2.0 ** (m_hi + 1) / (spec.min_spacing / 2))) + 1) * spec.min_spacing / 2
    out = []
    for regs in random_suite(2, size, seed):
        f, g, _ = suite_functions(regs, spec)
        quad_ = quad or EXPERIMENT_QUAD
        big = full_maximal(f, g, m_lo, m_hi, n_t_per_octave, quad=quad_, backend=backend).values
        hl = hardy_littlewood_maximal(f).values
        lin = linear_spherical_maximal(g, lin_radii, quad=quad_,
                                       include_zero=True, backend=backend).values
        mask = big > 1e-12 * big.max() if big.max() > 0 else np.zeros_like(big, bool)
        den = hl * lin
        if np.any(mask & (den <= 0)):
            out.append(math.inf)
        else:
            out.append(float(np.max(big[mask] / den[mask])) if mask.any() else 0.0)
    return out


CSV_MAGIC = "# sparselab-csv v1"
CSV_COLUMNS = ("experiment", "kind", "d", "p", "q", "r", "scale", "lower_value", "upper_value")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(rows, path_or_file):
    """Write experiment rows (dicts keyed by CSV_COLUMNS) with the versioned header.

    Unused columns are left empty; floats are written with repr so that equal
    runs give byte-identical files.
    """
    import csv
    import io
    buf = io.StringIO()
    buf.write(CSV_MAGIC + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    return text


def read_rows(path):
    import csv
    with open(path, newline="") as fh:
        if fh.readline().strip() != CSV_MAGIC:
            raise DomainError("not a sparselab experiment CSV")
        return list(csv.DictReader(fh))
