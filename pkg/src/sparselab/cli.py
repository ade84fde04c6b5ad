"""Command-line experiment runner.

Exit codes: 0 when the run meets its tolerance, 1 when it does not, 2 when
the configuration is invalid.  Every option can also come from a flat
``key = value`` file given with ``--config``; flags on the command line win.
"""

import argparse
import math
import os
import re
import sys
import warnings

import numpy as np

from . import _kernels
from .core import ExponentTriple, SparselabError, as_exponent, in_region, recip

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def parse_number(text):
    """Float from '0.125', '1/8', '2^-3' or 'inf'."""
    s = str(text).strip().replace(" ", "")
    if s.lower() in ("inf", "infinity"):
        return math.inf
    m = re.fullmatch(r"([-+]?[\d.]+)\^([-+]?[\d.]+)", s)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    m = re.fullmatch(r"([-+]?[\d.]+)/([\d.]+)", s)
    if m:
        return float(m.group(1)) / float(m.group(2))
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as a number") from None


def parse_range(text, integer=False):
    """Scale list from 'a..b' (factor-2 geometric steps; unit steps for integers),
    'a..b:n' (n geometric points) or a comma-separated list."""
    s = str(text).strip()
    if ".." not in s:
        vals = [parse_number(v) for v in s.split(",") if v.strip()]
        return [int(v) for v in vals] if integer else vals
    head, _, count = s.partition(":")
    a_txt, b_txt = head.split("..", 1)
    a, b = parse_number(a_txt), parse_number(b_txt)
    if integer:
        a, b = int(a), int(b)
        step = 1 if b >= a else -1
        return list(range(a, b + step, step))
    if a <= 0 or b <= 0:
        raise ConfigError("geometric ranges need positive endpoints")
    if count:
        return list(np.geomspace(a, b, int(count)))
    k = math.log2(b / a)
    if abs(k - round(k)) > 1e-9:
        raise ConfigError(f"range {text!r}: endpoints are not a power of two apart; use a..b:n")
    k = int(round(k))
    step = 1 if k >= 0 else -1
    return [a * 2.0 ** j for j in range(0, k + step, step)]


def read_config(path):
    """Flat key = value pairs; '#' starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _common(p):
    p.add_argument("--config", help="flat key = value file with defaults for these options")
    p.add_argument("--d", help="dimension")
    p.add_argument("--n", help="grid points per axis")
    p.add_argument("--box", help="half-width L of [-L, L]^d, or lo:hi")
    p.add_argument("--p")
    p.add_argument("--q")
    p.add_argument("--r")
    p.add_argument("--c0", help="stopping threshold")
    p.add_argument("--seed")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--threads", help="worker cap (default: SPARSELAB_THREADS)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparselab", description="Bilinear spherical maximal function experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sharpness", help="extremizer scaling run")
    _common(sp)
    sp.add_argument("--kind", help="ball-annulus | annuli-ball | knapp-boxes")
    sp.add_argument("--deltas", help="scale list, e.g. 2^-3..2^-7")
    sp.add_argument("--C")
    sp.add_argument("--C1")
    sp.add_argument("--C2")

    sp = sub.add_parser("continuity", help="continuity decay in |h|")
    _common(sp)
    sp.add_argument("--hs", help="shift list, e.g. 2^-4..2^-8")
    sp.add_argument("--input", help="indicator | gaussian")

    sp = sub.add_parser("lp-decay", help="Littlewood-Paley decay in d = 1")
    _common(sp)
    sp.add_argument("--ks", help="integer range, e.g. 1..6")
    sp.add_argument("--suite-size")

    sp = sub.add_parser("sparse-check", help="CZ, sparsity and domination ratio suite")
    _common(sp)
    sp.add_argument("--suite", help="randomN, e.g. random20")
    sp.add_argument("--maximal", help="full | lacunary | localized")

    sp = sub.add_parser("radius-perturbation", help="radius perturbation scaling in d = 2")
    _common(sp)
    sp.add_argument("--gammas", help="gamma list")
    sp.add_argument("--epss", help="eps list")
    sp.add_argument("--gamma-fixed")
    sp.add_argument("--eps-fixed")

    sp = sub.add_parser("pointwise-bound", help="M(f, g) <= C HL(f) M_linear(g) on the random suite")
    _common(sp)
    sp.add_argument("--suite", help="randomN")
    sp.add_argument("--c-max")

    sp = sub.add_parser("average", help="evaluate A_t(f, g) once and write the grid")
    _common(sp)
    sp.add_argument("--f", help="grid CSV file or region (ball:c1,c2:r | annulus:c:r1:r2 | box:lo:hi)")
    sp.add_argument("--g", help="as --f")
    sp.add_argument("--t", help="radius")
    sp.add_argument("--maximal", help="none | localized (sup over t in [1, 2])")
    return parser


DEFAULTS = {
    "sharpness": {"d": "2", "n": "1024", "p": "2", "q": "2", "r": "2"},
    "continuity": {"d": "2", "n": "1024", "box": "2", "p": "2", "q": "2", "r": "2", "input": "indicator"},
    "lp-decay": {"ks": "1..6", "seed": None, "suite_size": None},
    "sparse-check": {"d": "1", "p": "2", "q": "2", "r": "2", "suite": "random20", "maximal": "full"},
    "radius-perturbation": {"d": "2", "p": "2", "r": "4", "gammas": "0.4,0.2,0.1,0.05,0.025",
                            "epss": "2^-3..2^0", "gamma_fixed": "0.1", "eps_fixed": "0.5"},
    "pointwise-bound": {"d": "2", "suite": "random20", "c_max": "10"},
    "average": {"d": "2", "n": "256", "box": "2", "t": "1", "maximal": "none"},
}

REQUIRED = {"sharpness": ("kind", "deltas"), "continuity": ("hs",), "average": ("f", "g")}


def merge_config(args):
    """Fill unset options from the config file, then from the built-in defaults."""
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if args.config:
        cfg = read_config(args.config)
        unknown = set(cfg) - set(values)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in cfg.items():
            if values.get(k) is None:
                values[k] = v
    for k, v in DEFAULTS.get(args.command, {}).items():
        if values.get(k) is None:
            values[k] = v
    for k in REQUIRED.get(args.command, ()):
        if values.get(k) is None:
            raise ConfigError(f"--{k} is required for {args.command}")
    return values


def _int(values, key):
    v = values.get(key)
    if v is None:
        return None
    try:
        return int(parse_number(v))
    except (ConfigError, ValueError, OverflowError):
        raise ConfigError(f"--{key} must be an integer, got {v!r}") from None


def _exponent(v):
    try:
        return as_exponent(str(v))
    except (ValueError, ZeroDivisionError):
        return parse_number(v)


def _triple(values):
    return ExponentTriple(_exponent(values["p"]), _exponent(values.get("q") or "2"), _exponent(values["r"]))


def _box(values, d):
    b = values.get("box")
    if b is None:
        return None
    if ":" in str(b):
        lo, hi = (parse_number(x) for x in str(b).split(":", 1))
        return (lo,) * d, (hi,) * d
    L = parse_number(b)
    return (-L,) * d, (L,) * d


def _suite_size(values):
    m = re.fullmatch(r"random(\d+)", str(values.get("suite", "")))
    if not m:
        raise ConfigError(f"unknown suite {values.get('suite')!r}; use randomN")
    return int(m.group(1))


def _setup_threads(values):
    n = values.get("threads") or os.environ.get("SPARSELAB_THREADS")
    if n:
        try:
            _kernels.set_threads(int(n))
        except ValueError:
            raise ConfigError(f"invalid thread count {n!r}") from None


def _row(experiment, kind, d, t, scale, lower, upper, include_q=True):
    return {"experiment": experiment, "kind": kind, "d": d, "p": str(t.p), "q": str(t.q) if include_q else None,
            "r": str(t.r), "scale": float(scale), "lower_value": lower, "upper_value": upper}


def run_sharpness(values):
    from .experiments import (CONSTANTS, ExtremizerKind, expected_lower_slope, expected_upper_slope,
                              sharpness_points)
    from .core import fit_power_law
    kind = ExtremizerKind.parse(values["kind"])
    d, n = _int(values, "d"), _int(values, "n")
    t = _triple(values)
    deltas = parse_range(values["deltas"])
    consts = dict(CONSTANTS[kind])
    for key in ("C", "C1", "C2"):
        if values.get(key) is not None:
            consts[key] = parse_number(values[key])
    if any(not 0 < x < 1 for x in deltas) or len(deltas) < 3:
        raise ConfigError("--deltas needs at least three scales in (0, 1)")
    pts = sharpness_points(kind, d, deltas, t, n, consts)
    lower = fit_power_law([(p.delta, p.lower) for p in pts])
    upper = fit_power_law([(p.delta, p.upper) for p in pts])
    target = expected_lower_slope(kind, d)
    tol = 0.25 if kind is ExtremizerKind.KNAPP_BOXES else 0.2
    utarget = expected_upper_slope(kind, d, t)
    ok = abs(lower.slope - target) <= tol and abs(upper.slope - utarget) <= 0.05
    rows = [_row("sharpness", kind.value, d, t, p.delta, p.lower, p.upper) for p in pts]
    summary = (f"sharpness {kind.value} d={d}: lower slope {lower.slope:.4f} (target {target:g} +/- {tol}), "
               f"upper slope {upper.slope:.4f} (target {utarget:.4f} +/- 0.05)")
    return rows, summary, ok


def run_continuity(values):
    from .experiments import continuity_values
    from .core import fit_power_law
    d, n = _int(values, "d"), _int(values, "n")
    t = _triple(values)
    hs = parse_range(values["hs"])
    box = parse_number(values["box"]) if values.get("box") else 2.0
    kind = values["input"]
    if kind not in ("indicator", "gaussian"):
        raise ConfigError("--input must be indicator or gaussian")
    if not in_region(d, t):
        raise ConfigError(f"{t} is outside the boundedness region for d = {d}")
    vals = continuity_values(d, t, hs, kind, n=n, box=box)
    fit = fit_power_law(vals)
    if kind == "gaussian":
        ok, target = abs(fit.slope - 1.0) <= 0.15, "1 +/- 0.15"
    else:
        ok, target = fit.slope > 0.05, "> 0.05"
    rows = [_row("continuity", kind, d, t, h, v, None) for h, v in vals]
    return rows, f"continuity {kind} d={d}: eta {fit.slope:.4f} (target {target})", ok


def run_lp_decay(values):
    from .spectral import LP_SUITE_SEED, LP_SUITE_SIZE, lp_decay_suite, lp_decay_values
    from .core import fit_power_law
    ks = parse_range(values["ks"], integer=True)
    seed = _int(values, "seed")
    size = _int(values, "suite_size") or LP_SUITE_SIZE
    suite = lp_decay_suite(LP_SUITE_SEED if seed is None else seed, size)
    rows, slopes, controls = [], [], []
    t = ExponentTriple(2, 2, 1)
    for i, (f1, f2) in enumerate(suite):
        vals = lp_decay_values(f1, f2, ks)
        ctrl = lp_decay_values(f1, f2, ks, identity=True)
        slopes.append(fit_power_law([(2.0 ** k, v) for k, v in vals]).slope)
        controls.append(fit_power_law([(2.0 ** k, v) for k, v in ctrl]).slope)
        for (k, v), (_, c) in zip(vals, ctrl):
            rows.append(_row("lp-decay", f"pair{i}", 1, t, float(k), v, c))
    ok = max(slopes) <= -0.1 and all(-0.02 < c < 0.02 for c in controls)
    summary = (f"lp-decay: slopes {', '.join(f'{s:.4f}' for s in slopes)} (target <= -0.1); "
               f"control {max(abs(c) for c in controls):.2e} (target |.| < 0.02)")
    return rows, summary, ok


def run_sparse_check(values):
    from .experiments import SPARSE_N, sparse_check
    d = _int(values, "d")
    t = _triple(values)
    size = _suite_size(values)
    n = _int(values, "n") or SPARSE_N.get(d, 64)
    c0 = parse_number(values["c0"]) if values.get("c0") else None
    seed = _int(values, "seed")
    kw = {"seed": seed} if seed is not None else {}
    base = sparse_check(d, t, size=size, n=n, C0=c0, maximal_kind=values["maximal"], **kw)
    fine = sparse_check(d, t, size=size, n=2 * n, C0=c0, maximal_kind=values["maximal"], **kw)
    rows = []
    for a in base + fine:
        rows.append(_row("sparse-check", f"input{a.index}", d, t, float(a.n), a.ratio, a.eta))
    r0, r1 = max(a.ratio for a in base), max(a.ratio for a in fine)
    change = abs(r1 - r0) / r0 if r0 > 0 else math.inf
    eta = min(a.eta for a in base + fine)
    ok = (all(a.cz_ok and a.sparsity_ok for a in base + fine) and eta >= 2.0 ** (-d - 2) and change < 0.25)
    summary = (f"sparse-check d={d}: max ratio {r0:.4f} -> {r1:.4f} under doubling ({100 * change:.1f}% change), "
               f"min eta {eta:.4f} (target >= {2.0 ** (-d - 2):g})")
    return rows, summary, ok


def run_radius_perturbation(values):
    from .experiments import radius_perturbation_run
    t = _triple(values)
    d = _int(values, "d")
    gammas = parse_range(values["gammas"])
    epss = parse_range(values["epss"])
    gf, ef = parse_number(values["gamma_fixed"]), parse_number(values["eps_fixed"])
    if not any(abs(g - gf) < 1e-12 for g in gammas) or not any(abs(e - ef) < 1e-12 for e in epss):
        raise ConfigError("--gamma-fixed and --eps-fixed must appear in --gammas and --epss")
    gf = min(gammas, key=lambda g: abs(g - gf))
    ef = min(epss, key=lambda e: abs(e - ef))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = radius_perturbation_run(t.p, t.r, gammas, epss, d=d)
    target = 2 * float(recip(t.r)) - 2 * float(recip(t.p))
    es = res.eps_fits[float(gf)].slope
    gs = res.gamma_fits[float(ef)].slope
    ok = abs(es - target) <= 0.2 and gs > 0
    rows = [_row("radius-perturbation", f"gamma={g!r}", d, t, e, v, None, include_q=False)
            for (g, e), v in res.rows()]
    summary = (f"radius-perturbation: eps slope {es:.4f} at gamma={gf:g} (target {target:g} +/- 0.2), "
               f"gamma slope {gs:.4f} at eps={ef:g} (target > 0)")
    return rows, summary, ok


def run_pointwise(values):
    from .experiments import POINTWISE_N, pointwise_ratios
    size = _suite_size(values)
    n = _int(values, "n") or POINTWISE_N
    seed = _int(values, "seed")
    kw = {"seed": seed} if seed is not None else {}
    if _int(values, "d") != 2:
        raise ConfigError("the pointwise bound check runs in d = 2")
    ratios = pointwise_ratios(size=size, n=n, **kw)
    cmax = parse_number(values["c_max"])
    worst = max(ratios)
    rows = [{"experiment": "pointwise-bound", "kind": f"input{i}", "d": 2, "scale": float(n), "lower_value": r}
            for i, r in enumerate(ratios)]
    return rows, f"pointwise-bound: max ratio {worst:.4f} (target <= {cmax:g})", worst <= cmax


def _input_function(text, spec):
    from .fields import RegionSpec, make_indicator, read_csv
    if os.path.exists(text):
        f = read_csv(text)
        return f if f.spec == spec else f.resample(spec)
    parts = text.split(":")
    kind = parts[0]

    def vec(s):
        return tuple(parse_number(x) for x in s.split(","))
    try:
        if kind == "ball":
            return make_indicator(RegionSpec.ball(vec(parts[1]), parse_number(parts[2])), spec)
        if kind == "annulus":
            return make_indicator(RegionSpec.annulus(vec(parts[1]), parse_number(parts[2]),
                                                     parse_number(parts[3])), spec)
        if kind == "box":
            lo, hi = vec(parts[1]), vec(parts[2])
            return make_indicator(RegionSpec.box(lo, hi), spec)
    except IndexError:
        pass
    raise ConfigError(f"cannot read input {text!r}: expected a grid file or ball:/annulus:/box: region")


def run_average(values):
    from .averaging import bilinear_spherical_average
    from .experiments import EXPERIMENT_QUAD
    from .fields import GridSpec, write_csv
    from .maximal import UNIT_OCTAVE, localized_maximal
    d, n = _int(values, "d"), _int(values, "n")
    lo, hi = _box(values, d)
    spec = GridSpec(d, lo, hi, n)
    f, g = _input_function(values["f"], spec), _input_function(values["g"], spec)
    if values["maximal"] == "localized":
        out = localized_maximal(f, g, UNIT_OCTAVE, quad=EXPERIMENT_QUAD)
    elif values["maximal"] == "none":
        out = bilinear_spherical_average(f, g, parse_number(values["t"]), quad=EXPERIMENT_QUAD)
    else:
        raise ConfigError("--maximal must be none or localized")
    if values.get("out"):
        write_csv(out, values["out"])
    else:
        import tempfile
        with tempfile.NamedTemporaryFile("r+", suffix=".csv") as tmp:
            write_csv(out, tmp.name)
            sys.stdout.write(open(tmp.name).read())
    return None, f"average: max {float(out.values.max()):.6g}, integral {out.integral():.6g}", True


RUNNERS = {
    "sharpness": run_sharpness,
    "continuity": run_continuity,
    "lp-decay": run_lp_decay,
    "sparse-check": run_sparse_check,
    "radius-perturbation": run_radius_perturbation,
    "pointwise-bound": run_pointwise,
    "average": run_average,
}


def main(argv=None):
    from .experiments import write_rows
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = merge_config(args)
        _setup_threads(values)
        rows, summary, ok = RUNNERS[args.command](values)
    except (ConfigError, SparselabError) as exc:
        parser.print_usage(sys.stderr)
        print(f"sparselab {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if rows is not None:
        if values.get("out"):
            write_rows(rows, values["out"])
        else:
            write_rows(rows, sys.stdout)
    print(f"{summary} [{'PASS' if ok else 'FAIL'}]", file=sys.stderr if not values.get("out") and rows else sys.stdout)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
