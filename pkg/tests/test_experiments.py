import math
from fractions import Fraction

import numpy as np
import pytest

from sparselab.core import DomainError, ExponentTriple, InsufficientDataError, ResolutionError, in_region
from sparselab.experiments import (CONSTANTS, CSV_COLUMNS, EPS0, ExtremizerKind, calibrate_constants,
                                   continuity_values, delta2_position, eval_spec, expected_lower_slope,
                                   expected_upper_slope, make_extremizer, necessity_bounds, necessity_check,
                                   radius_perturbation_run, random_suite, read_rows, sharpness_point,
                                   sharpness_run, write_rows)
from sparselab.averaging import Quadrature

F = Fraction
QUICK = Quadrature(16, 32, 1.0)


def test_kind_parsing():
    assert ExtremizerKind.parse("knapp_boxes") is ExtremizerKind.KNAPP_BOXES
    with pytest.raises(DomainError, match="ball-annulus"):
        ExtremizerKind.parse("disk")


def test_ball_annulus_supports():
    delta = 1 / 16
    f, g, h = make_extremizer("ball-annulus", 2, delta, n=512)
    assert f.integral() == pytest.approx(math.pi * delta ** 2, rel=0.05)
    C = CONSTANTS[ExtremizerKind.BALL_ANNULUS]["C"]
    assert g.integral() == pytest.approx(math.pi * (C * delta) ** 2, rel=0.05)
    r0 = 1 / math.sqrt(2)
    assert h.integral() == pytest.approx(math.pi * ((r0 + EPS0) ** 2 - r0 ** 2), rel=0.02)


def test_annuli_ball_supports():
    f, g, h = make_extremizer("annuli-ball", 2, 1 / 16, n=512)
    assert h.at((0.0, 0.0)) == 1.0 and h.at((0.2, 0.0)) == 0.0
    assert f.at((1 / math.sqrt(2), 0.0)) == 1.0 and f.at((0.0, 0.0)) == 0.0
    assert f.integral() < g.integral()


def test_knapp_supports():
    delta = 1 / 16
    f, g, h = make_extremizer("knapp-boxes", 2, delta, n=512)
    assert f.integral() == pytest.approx(4 * 2 * math.sqrt(delta) * 2 * delta, rel=0.05)
    assert h.at((0.0, 1.0)) == 1.0 and h.at((0.0, 0.5)) == 0.0
    with pytest.raises(DomainError):
        make_extremizer("knapp-boxes", 1, delta, n=512)


def test_guard_names_required_n():
    with pytest.raises(ResolutionError, match="n_per_axis >= 4096"):
        make_extremizer("ball-annulus", 2, 2.0 ** -9, n=512)


def test_expected_slopes():
    t = ExponentTriple(2, 2, 2)
    assert expected_lower_slope("ball-annulus", 2) == 3
    assert expected_lower_slope("annuli-ball", 2) == 3
    assert expected_lower_slope("knapp-boxes", 2) == 2.5
    assert expected_upper_slope("ball-annulus", 2, t) == 2.0
    assert expected_upper_slope("annuli-ball", 2, t) == 2.0
    assert expected_upper_slope("knapp-boxes", 2, t) == pytest.approx(1.5 + 0.25)


def test_eval_spec_stride():
    f, _, _ = make_extremizer("ball-annulus", 2, 1 / 8, n=1024)
    es = eval_spec("ball-annulus", f.spec, 1 / 8)
    assert es.n < f.spec.n and f.spec.n % es.n == 0
    assert EPS0 / es.min_spacing >= 16


def test_sharpness_small_run():
    t = ExponentTriple(2, 2, 2)
    lower, upper = sharpness_run("ball-annulus", 2, [2.0 ** -3, 2.0 ** -4, 2.0 ** -5], t, n=256, quad=QUICK)
    assert lower.slope == pytest.approx(3.0, abs=0.4)
    assert upper.slope == pytest.approx(2.0, abs=0.05)
    with pytest.raises(InsufficientDataError):
        sharpness_run("ball-annulus", 2, [0.125, 0.0625], t, n=256)


def test_pairing_shrinks_with_delta():
    t = ExponentTriple(2, 2, 2)
    vals = [sharpness_point("annuli-ball", 2, dl, t, n=256, quad=QUICK).lower for dl in (1 / 8, 1 / 16, 1 / 32)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_calibration_returns_best():
    t = ExponentTriple(2, 2, 2)
    cands = [{"C": 1.0}, {"C": 3.0}]
    best, table = calibrate_constants("ball-annulus", 2, cands, [1 / 8, 1 / 16, 1 / 32], t, n=256, quad=QUICK)
    assert best == max(table, key=lambda r: r[1])[0]
    # a wider g ball only adds mass to the pairing
    assert table[1][1] >= table[0][1]


@pytest.mark.parametrize("triple, expected", [
    ((2, 2, 2), True),
    ((F(4, 3), F(4, 3), 2), True),
    ((F(5, 4), F(5, 4), 2), False),
])
def test_necessity_table(triple, expected):
    assert necessity_check(None, 2, ExponentTriple(*triple)) is expected


def test_necessity_bounds_values():
    b = necessity_bounds(2, ExponentTriple(2, 2, 2))
    assert b[ExtremizerKind.ANNULI_BALL] == 2
    assert b[ExtremizerKind.BALL_ANNULUS] == F(3, 2)
    assert b[ExtremizerKind.KNAPP_BOXES] == F(4, 3) + F(1, 6)


def test_region_inside_necessary_region():
    rng = np.random.default_rng(0)
    for d in (2, 3):
        for _ in range(300):
            ip, iq, ir = (F(int(v), 97) for v in rng.integers(1, 97, 3))
            t = ExponentTriple(1 / ip, 1 / iq, 1 / ir)
            if in_region(d, t):
                assert necessity_check(None, d, t)


def test_delta2_position():
    # centroid of the triangle, a vertex, and a point below the lower edge
    assert delta2_position(F(10, 3), F(30, 7)) == "interior"
    assert delta2_position(F(5, 2), 5) == "boundary"
    assert delta2_position(2, 2) == "boundary"
    assert delta2_position(2, 4) == "outside"


def test_radius_perturbation_small():
    with pytest.warns(UserWarning, match="outside"):
        res = radius_perturbation_run(2, 4, [0.1], [0.5, 0.35, 0.25], n=160, n_radii=41, quad=QUICK)
    assert res.eps_fits[0.1].slope == pytest.approx(-0.5, abs=0.3)
    with pytest.raises(DomainError):
        radius_perturbation_run(2, 4, [0.1], [0.5, 0.4, 0.3], d=3)


def test_radius_perturbation_monotone_in_gamma():
    res = radius_perturbation_run(F(10, 3), F(30, 7), [0.05, 0.1, 0.2], [0.5], n=160, n_radii=41, quad=QUICK)
    vals = [res.values[(g, 0.5)] for g in (0.05, 0.1, 0.2)]
    assert vals[0] <= vals[1] <= vals[2]


def test_continuity_snaps_with_warning():
    t = ExponentTriple(2, 2, 2)
    with pytest.warns(UserWarning, match="snapped"):
        continuity_values(2, t, [0.01], n=64, quad=QUICK)


def test_random_suite_frozen():
    a = random_suite(2, 5)
    assert a == random_suite(2, 5)
    assert a != random_suite(2, 5, seed=1)
    for regs in a:
        for box_list in regs:
            assert 1 <= len(box_list) <= 3


def test_rows_roundtrip(tmp_path):
    rows = [{"experiment": "x", "kind": "k", "d": 2, "p": "2", "q": "2", "r": "2", "scale": 0.1,
             "lower_value": 1 / 3, "upper_value": np.float64(2 / 3)}]
    text = write_rows(rows, tmp_path / "o.csv")
    assert text.splitlines()[1] == ",".join(CSV_COLUMNS)
    back = read_rows(tmp_path / "o.csv")
    assert float(back[0]["lower_value"]) == 1 / 3
    assert float(back[0]["upper_value"]) == 2 / 3
    (tmp_path / "bad.csv").write_text("x\n")
    with pytest.raises(DomainError):
        read_rows(tmp_path / "bad.csv")
