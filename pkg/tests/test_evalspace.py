import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somapulse.evalspace import (
    OutOfBounds,
    ParameterSpace,
    RadiusExceedsBox,
    UnknownAxis,
    axis_sweep,
    denormalize,
    normalize,
    r_max,
    radial_sweep,
    sample_uniform,
    sphere_points,
    write_sweep_csv,
)

TABLE1 = ParameterSpace(("delta", "alpha", "T"), [0.0, -0.34, 10.0], [-0.04, -0.44, 5.0], [0.04, -0.24, 20.0])
PARTLY_FROZEN = ParameterSpace(("delta", "alpha", "T"), [0.0, -0.34, 10.0], [-0.04, -0.34, 5.0], [0.04, -0.34, 20.0])


def test_space_validation():
    with pytest.raises(ValueError):
        ParameterSpace(("a",), [0.0], [1.0], [2.0])
    with pytest.raises(ValueError):
        ParameterSpace(("a", "b"), [0.0], [0.0], [0.0])
    s = ParameterSpace.from_dict({"a": {"center": 1.0, "lo": 0.0, "hi": 2.0}, "b": 3.0})
    assert s.names == ("a", "b") and list(s.frozen_mask) == [False, True]


def test_samples_inside_box_and_reproducible():
    a = sample_uniform(TABLE1, 500, 7)
    assert np.all(a >= TABLE1.lo) and np.all(a <= TABLE1.hi)
    assert np.array_equal(a, sample_uniform(TABLE1, 500, 7))
    assert not np.array_equal(a, sample_uniform(TABLE1, 500, 8))
    with pytest.raises(ValueError):
        sample_uniform(TABLE1, 0, 0)


def test_frozen_column_constant():
    a = sample_uniform(PARTLY_FROZEN, 100, 0)
    assert np.all(a[:, 1] == -0.34)


def test_normalize_examples():
    # delta = 20 MHz in [-40, 40] MHz
    z = normalize(TABLE1, [0.02, -0.34, 10.0])
    assert z[0] == pytest.approx(0.75, abs=1e-15)
    assert np.array_equal(normalize(TABLE1, TABLE1.lo), np.zeros(3))
    assert np.array_equal(normalize(TABLE1, TABLE1.hi), np.ones(3))
    assert normalize(PARTLY_FROZEN, PARTLY_FROZEN.center)[1] == 0.5
    with pytest.raises(OutOfBounds):
        normalize(TABLE1, [0.05, -0.34, 10.0])
    with pytest.raises(OutOfBounds):
        denormalize(TABLE1, [1.5, 0.5, 0.5])


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_denormalize_roundtrip(z):
    lam = denormalize(TABLE1, z)
    np.testing.assert_allclose(denormalize(TABLE1, normalize(TABLE1, lam)), lam, atol=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_normalize_affine_monotone(a, b):
    lo, hi = sorted((a, b))
    la, lb = denormalize(TABLE1, [lo] * 3), denormalize(TABLE1, [hi] * 3)
    za, zb = normalize(TABLE1, la), normalize(TABLE1, lb)
    assert np.all(za <= zb)
    mid = normalize(TABLE1, (la + lb) / 2)
    np.testing.assert_allclose(mid, (za + zb) / 2, atol=1e-12)


def test_r_max_inscribed():
    off = ParameterSpace(("a", "b"), [0.2, 0.0], [0.0, -1.0], [1.0, 1.0])
    assert r_max(off) == pytest.approx(0.2)
    assert r_max(TABLE1) == pytest.approx(min(0.5, 0.5, 1 / 3))


def test_sphere_radius_exact():
    zc = normalize(PARTLY_FROZEN, PARTLY_FROZEN.center)
    r = 0.9 * r_max(PARTLY_FROZEN)
    pts = sphere_points(PARTLY_FROZEN, r, 200, 0)
    d = np.linalg.norm((pts - zc)[:, PARTLY_FROZEN.active], axis=1)
    np.testing.assert_allclose(d, r, atol=1e-12)
    assert np.all(pts[:, 1] == zc[1])
    assert np.array_equal(sphere_points(PARTLY_FROZEN, 0.0, 5, 0), np.tile(zc, (5, 1)))
    with pytest.raises(RadiusExceedsBox):
        sphere_points(PARTLY_FROZEN, 1.01 * r_max(PARTLY_FROZEN) + 1e-9, 5, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(50, 2000))
def test_sphere_isotropy(seed, n):
    space = ParameterSpace(("a", "b", "c"), [0.5] * 3, [0.0] * 3, [1.0] * 3)
    r = 0.3
    dirs = (sphere_points(space, r, n, seed) - 0.5) / r
    assert np.linalg.norm(dirs.mean(axis=0)) <= 5 / np.sqrt(n)


def _dist_eval(space):
    # infidelity-like: grows away from the centre, in [0, 1]
    zc = normalize(space, space.center)
    return lambda lams: np.array([min(1.0, np.sum((normalize(space, l) - zc) ** 2)) for l in lams])


def test_radial_sweep_zero_radius_and_bound():
    rep = radial_sweep(_dist_eval(TABLE1), TABLE1, [0.0, 0.1, 0.2, r_max(TABLE1)], n_per_radius=1000, seed=0)
    assert rep.mean_infidelity[0] == 0.0 and rep.std_infidelity[0] == 0.0
    assert rep.n_per_radius == 1000
    np.testing.assert_allclose(rep.radii_rel, [0, 0.3, 0.6, 1.0], atol=1e-12)
    assert np.all(rep.std_infidelity**2 <= 1 - (1 - rep.mean_infidelity) ** 2)
    np.testing.assert_allclose(rep.mean_infidelity[1:], np.array([0.1, 0.2, r_max(TABLE1)]) ** 2, rtol=1e-12)


def test_axis_sweep_constant_for_dummy_model():
    sw = axis_sweep(lambda lams: np.full(len(lams), 0.25), TABLE1, "T", 11)
    assert np.all(sw.infidelity == 0.25)
    assert sw.values[0] == 5.0 and sw.values[-1] == 20.0


def test_axis_sweep_endpoints_and_errors():
    ev = _dist_eval(TABLE1)
    sw = axis_sweep(ev, TABLE1, "delta", 9)
    lo = TABLE1.center.copy()
    lo[0] = TABLE1.lo[0]
    assert sw.infidelity[0] == ev(lo[None])[0]
    assert sw.infidelity[4] == min(sw.infidelity)
    with pytest.raises(UnknownAxis):
        axis_sweep(ev, TABLE1, "beta", 3)
    with pytest.raises(UnknownAxis):
        axis_sweep(ev, PARTLY_FROZEN, "alpha", 3)


def test_sweep_csv(tmp_path):
    write_sweep_csv(tmp_path / "s.csv", [0.1, 0.2], [1 / 3, 0.5], [0.0, 0.1], 1000, ["config_hash: x"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "# config_hash: x"
    assert lines[1] == "radius_or_value,mean_infidelity,std_infidelity,n"
    assert float(lines[2].split(",")[1]) == 1 / 3
