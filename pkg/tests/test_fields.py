import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparselab.core import DomainError, ShapeMismatchError
from sparselab.fields import (GridFunction, GridSpec, RegionSpec, lp_norm, make_indicator, pairing, read_binary,
                              read_csv, shift, write_binary, write_csv)


def line(n=400, half=2.0):
    return GridSpec.cube(1, half, n)


def test_indicator_membership():
    spec = GridSpec.cube(2, 1.0, 64)
    f = make_indicator(RegionSpec.ball((0, 0), 0.5), spec)
    assert f.at((0.0, 0.0)) == 1.0
    assert f.at((1.0, 0.0)) == 0.0


def test_indicator_area():
    spec = GridSpec.cube(2, 1.0, 512)
    f = make_indicator(RegionSpec.ball((0, 0), 0.5), spec)
    assert f.integral() == pytest.approx(math.pi * 0.5 ** 2, rel=0.02)


def test_annulus_area():
    spec = GridSpec.cube(2, 1.0, 1024)
    r0 = 1 / math.sqrt(2)
    reg = RegionSpec.annulus((0, 0), r0, r0 + 0.1)
    f = make_indicator(reg, spec)
    exact = math.pi * (0.1 ** 2 + 2 * 0.1 * r0)
    assert reg.measure(2) == pytest.approx(exact, rel=1e-12)
    assert f.integral() > 0
    assert f.integral() == pytest.approx(exact, rel=0.02)


def test_region_validation():
    with pytest.raises(DomainError):
        RegionSpec.annulus((0, 0), 0.5, 0.4)
    with pytest.raises(DomainError):
        RegionSpec.box((0, 0), (-1, 1))
    with pytest.raises(DomainError):
        RegionSpec("disk")


def test_grid_validation():
    with pytest.raises(DomainError):
        GridSpec(4, 0, 1, 8)
    with pytest.raises(DomainError):
        GridSpec(1, 1, 0, 8)
    with pytest.raises(ShapeMismatchError):
        GridFunction(line(8), np.zeros(7))
    with pytest.raises(DomainError):
        GridFunction(line(4), [0, np.nan, 0, 0])


def test_immutable():
    f = GridFunction.zeros(line(8))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_shift_zero_is_identity():
    f = make_indicator(RegionSpec.box(0, 1), line())
    assert np.array_equal(shift(f, 0.0).values, f.values)


def test_shift_inverse_pair():
    spec = line()
    f = GridFunction.from_callable(spec, lambda x: np.exp(-x * x))
    h = spec.spacing[0]
    back = shift(shift(f, h), -h)
    assert np.array_equal(back.values[1:-1], f.values[1:-1])


def test_shift_translates_indicator():
    spec = line()
    f = make_indicator(RegionSpec.box(0, 1), spec)
    g = shift(f, 0.5)
    want = make_indicator(RegionSpec.box(0.5, 1.5), spec)
    # closed boxes on a cell-centred grid; compare the half-open cell sets
    assert np.array_equal(g.values, want.values)


def test_shift_snaps_with_warning():
    spec = line(8)
    f = GridFunction.constant(spec, 1.0)
    with pytest.warns(UserWarning, match="snapped"):
        shift(f, 0.3)


def test_shift_preserves_norm_inside():
    spec = line()
    f = make_indicator(RegionSpec.box(-0.5, 0.5), spec)
    for p in (1, 2, 3.5):
        assert lp_norm(shift(f, 0.25), p) == pytest.approx(lp_norm(f, p), rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 0.5])
def test_lp_unit_indicator(p):
    f = make_indicator(RegionSpec.box(0, 1), line())
    assert lp_norm(f, p) == pytest.approx(1.0, rel=0.02)


def test_lp_constant_box():
    spec = GridSpec(2, (0, 0), (2, 3), 16)
    f = GridFunction.constant(spec, 1.5)
    for p in (1, 2, 4):
        assert lp_norm(f, p) == pytest.approx(1.5 * 6 ** (1 / p), rel=1e-12)


def test_lp_inf():
    f = make_indicator(RegionSpec.ball(0, 0.3), GridSpec.cube(2, 1, 32))
    assert lp_norm(f, "inf") == 1.0


@settings(max_examples=30, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)), st.sampled_from([1, 2, 3.3, "inf"]))
def test_lp_homogeneous(c, p):
    spec = line(64)
    f = GridFunction.from_callable(spec, lambda x: np.sin(3 * x) + 0.2)
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12, abs=1e-300)


def test_pairing_examples():
    spec = line()
    a = make_indicator(RegionSpec.box(0, 1), spec)
    b = make_indicator(RegionSpec.box(0.5, 1.5), spec)
    assert pairing(a, a) == pytest.approx(1.0, rel=0.02)
    assert pairing(a, GridFunction.zeros(spec)) == 0.0
    assert pairing(a, b) == pytest.approx(0.5, rel=0.03)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3))
def test_pairing_bilinear_symmetric(seed, c):
    rng = np.random.default_rng(seed)
    spec = GridSpec.cube(2, 1, 8)
    u, v, w = (GridFunction(spec, rng.standard_normal(spec.shape)) for _ in range(3))
    assert pairing(u, v) == pytest.approx(pairing(v, u), rel=1e-12)
    assert pairing(u * c + w, v) == pytest.approx(c * pairing(u, v) + pairing(w, v), rel=1e-9, abs=1e-12)


def test_pairing_grid_mismatch():
    with pytest.raises(ShapeMismatchError):
        pairing(GridFunction.zeros(line(8)), GridFunction.zeros(line(16)))


def test_csv_and_binary_roundtrip(tmp_path):
    spec = GridSpec(2, (-1, 0), (1, 3), 12)
    f = GridFunction.from_callable(spec, lambda x, y: np.cos(x) * y)
    write_csv(f, tmp_path / "f.csv")
    g = read_csv(tmp_path / "f.csv")
    assert g.spec == spec and np.array_equal(g.values, f.values)
    write_binary(f, tmp_path / "f.bin")
    assert np.array_equal(read_binary(tmp_path / "f.bin", spec).values, f.values)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# sparselab-grid v1" and lines[2] == "index,value"
    # row-major: index 1 is the second point along the last axis
    assert float(lines[4].split(",")[1]) == f.values[0, 1]


def test_at_outside_is_zero():
    f = GridFunction.constant(line(8), 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert f.at(np.array([[5.0], [0.1]])).tolist() == [0.0, 2.0]
