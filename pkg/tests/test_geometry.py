import numpy as np
import pytest

from subpflow.geometry import (
    CylinderSpec,
    DimensionError,
    HeisenbergPoint,
    cylinder_contains,
    dilate,
    gauge_distance,
    group_inv,
    group_mul,
    homogeneous_dimension,
    koranyi_gauge,
)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.abs(b))


def test_group_law_closed_form():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(group_mul(a, b), [1.0, 1.0, 0.5])
    np.testing.assert_array_equal(group_mul(b, a), [1.0, 1.0, -0.5])


def test_group_law_h2_pairs_coordinates():
    # only the (x_i, x_{n+i}) pairs interact
    a = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    assert group_mul(a, b)[-1] == 0.0
    c = np.array([0.0, 0.0, 2.0, 0.0, 0.0])
    assert group_mul(a, c)[-1] == 1.0


def test_identity_and_inverse():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(50, 3))
    e = np.zeros(3)
    np.testing.assert_allclose(group_mul(a, e), a, rtol=0, atol=0)
    np.testing.assert_allclose(group_mul(a, group_inv(a)), 0.0, atol=1e-15)
    np.testing.assert_allclose(group_mul(group_inv(a), a), 0.0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2])
def test_associativity(n):
    rng = np.random.default_rng(n)
    a, b, c = (rng.uniform(-2, 2, size=(1000, 2 * n + 1)) for _ in range(3))
    lhs = group_mul(group_mul(a, b), c)
    rhs = group_mul(a, group_mul(b, c))
    assert np.max(_rel(lhs, rhs)) <= 1e-12


def test_gauge_closed_form():
    assert koranyi_gauge([1.0, 0.0, 0.0]) == 1.0
    assert koranyi_gauge([0.0, 0.0, 0.25]) == 1.0
    assert koranyi_gauge([1.0, 1.0, 0.0]) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert koranyi_gauge([0.0, 0.0, 0.0]) == 0.0


def test_left_invariance_of_distance():
    rng = np.random.default_rng(2)
    g, x, y = (rng.uniform(-2, 2, size=(1000, 3)) for _ in range(3))
    d1 = gauge_distance(group_mul(g, x), group_mul(g, y))
    d0 = gauge_distance(x, y)
    assert np.max(_rel(d1, d0)) <= 1e-12


def test_distance_symmetric():
    rng = np.random.default_rng(3)
    x, y = (rng.uniform(-2, 2, size=(200, 3)) for _ in range(2))
    np.testing.assert_allclose(gauge_distance(x, y), gauge_distance(y, x), rtol=1e-13)


def test_dilation_homogeneity():
    rng = np.random.default_rng(4)
    a = rng.uniform(-2, 2, size=(1000, 3))
    lam = rng.uniform(0.1, 10.0, size=(1000, 1))
    da = np.array([dilate(a[k], lam[k, 0]) for k in range(1000)])
    assert np.max(_rel(koranyi_gauge(da), lam[:, 0] * koranyi_gauge(a))) <= 1e-12
    np.testing.assert_array_equal(dilate([1.0, 2.0, 3.0], 2.0), [2.0, 4.0, 12.0])


def test_dilation_is_automorphism():
    rng = np.random.default_rng(5)
    a, b = (rng.uniform(-1, 1, size=3) for _ in range(2))
    lhs = dilate(group_mul(a, b), 3.0)
    rhs = group_mul(dilate(a, 3.0), dilate(b, 3.0))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-14)


def test_ball_volume_scales_with_homogeneous_dimension():
    # Inside B(0,1), the fraction of B(0,1/2) is 2^-N exactly; binomial 3 sigma test
    N = homogeneous_dimension(1)
    assert N == 4
    rng = np.random.default_rng(6)
    pts = rng.uniform([-1, -1, -0.25], [1, 1, 0.25], size=(100_000, 3))
    g = koranyi_gauge(pts)
    n_full = int(np.sum(g < 1.0))
    n_half = int(np.sum(g < 0.5))
    q = 2.0 ** -N
    sigma = np.sqrt(n_full * q * (1 - q))
    assert abs(n_half - n_full * q) <= 3 * sigma


def test_point_type_roundtrip():
    p = HeisenbergPoint.from_array([1.0, 2.0, 3.0])
    assert p.n == 1 and p.z == 3.0
    np.testing.assert_array_equal(p.horizontal, [1.0, 2.0])
    q = group_mul(p, HeisenbergPoint.identity(1))
    assert isinstance(q, HeisenbergPoint) and q == p
    assert isinstance(group_inv(p), HeisenbergPoint)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        HeisenbergPoint((1.0, 2.0), 1)
    with pytest.raises(DimensionError):
        HeisenbergPoint.from_array([1.0, 2.0])
    with pytest.raises(DimensionError):
        group_mul(np.zeros(3), np.zeros(5))
    with pytest.raises(DimensionError):
        gauge_distance(np.zeros(3), np.zeros(5))
    with pytest.raises(ValueError):
        homogeneous_dimension(0)


def test_cylinder_membership():
    c = CylinderSpec(HeisenbergPoint.identity(1), t0=1.0, r=0.5, mu=2.0)
    assert c.duration == pytest.approx(0.5)
    assert c.t_start == pytest.approx(0.5)
    assert c.nominal_volume_scale() == pytest.approx(2.0 * 0.5 ** 6)
    assert cylinder_contains(c, [0.0, 0.0, 0.0], 1.0)
    assert not cylinder_contains(c, [0.0, 0.0, 0.0], 0.5)  # open at the bottom
    assert not cylinder_contains(c, [0.0, 0.0, 0.0], 1.01)
    assert not cylinder_contains(c, [0.5, 0.0, 0.0], 0.9)
    assert cylinder_contains(c, [0.0, 0.0, 0.06], 0.9)  # gauge (16 z^2)^(1/4) < 0.5
    assert not cylinder_contains(c, [0.0, 0.0, 0.07], 0.9)


def test_cylinder_validation():
    with pytest.raises(ValueError):
        CylinderSpec(HeisenbergPoint.identity(1), 0.0, 0.0)
    with pytest.raises(ValueError):
        CylinderSpec(HeisenbergPoint.identity(1), 0.0, 1.0, mu=-1.0)
    c = CylinderSpec([1.0, 0.0, 0.0], 0.0, 1.0)
    assert isinstance(c.center, HeisenbergPoint)
    assert c.with_radius(2.0).r == 2.0
