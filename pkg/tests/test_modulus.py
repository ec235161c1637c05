import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miranda_layers import _accel
from miranda_layers.errors import DomainError
from miranda_layers.modulus import (
    OMEGA_1,
    Modulus,
    PowerModulus,
    SampledFunction,
    _omega_array_nb,
    _omega_array_np,
    check_large_separation_bound,
    check_subholder,
    eval_modulus,
    om_certificate,
    seminorm_estimate,
    subsample_pairs,
)

nonneg = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
thetas = st.floats(min_value=0.05, max_value=1.0)


def test_omega1_reference_values():
    assert eval_modulus(OMEGA_1, 0.0) == 0.0
    assert eval_modulus(OMEGA_1, math.exp(-1)) == pytest.approx(math.exp(-1), abs=1e-15)
    assert eval_modulus(OMEGA_1, 5.0) == pytest.approx(math.exp(-1), abs=1e-15)
    exact = float(mpmath.mpf("0.1") * mpmath.log(10))
    assert eval_modulus(OMEGA_1, 0.1) == pytest.approx(exact, rel=1e-15)


def test_rejects_bad_arguments():
    with pytest.raises(DomainError):
        eval_modulus(OMEGA_1, -1e-3)
    with pytest.raises(DomainError):
        eval_modulus(OMEGA_1, float("nan"))
    with pytest.raises(DomainError):
        eval_modulus(OMEGA_1, np.array([0.1, np.inf]))
    with pytest.raises(DomainError):
        Modulus(0.0)
    with pytest.raises(DomainError):
        PowerModulus(1.5)


@given(thetas, st.floats(min_value=1e-12, max_value=1.0))
def test_log_branch_matches_formula(theta, frac):
    m = Modulus(theta)
    r = frac * m.r_theta
    assert eval_modulus(m, r) == pytest.approx(r**theta * abs(math.log(r)), rel=1e-13)


@given(thetas, st.floats(min_value=1.0, max_value=1e6))
def test_constant_beyond_breakpoint(theta, mult):
    m = Modulus(theta)
    assert eval_modulus(m, m.r_theta * mult) == eval_modulus(m, m.r_theta)


@given(thetas, nonneg, nonneg)
def test_monotone(theta, a, b):
    m = Modulus(theta)
    lo, hi = min(a, b), max(a, b)
    assert eval_modulus(m, lo) <= eval_modulus(m, hi) + 1e-15


@given(thetas, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_concave(theta, u, v):
    m = Modulus(theta)
    r1, r2 = sorted((u * 2 * m.r_theta, v * 2 * m.r_theta))
    mid = eval_modulus(m, 0.5 * (r1 + r2))
    assert mid >= 0.5 * (eval_modulus(m, r1) + eval_modulus(m, r2)) - 1e-12


def test_strictly_increasing_below_breakpoint():
    for theta in (0.25, 0.5, 1.0):
        m = Modulus(theta)
        r = np.linspace(0.0, m.r_theta, 2001)
        assert np.all(np.diff(eval_modulus(m, r)) > 0)


def test_continuous_at_breakpoint():
    m = Modulus(0.5)
    below = eval_modulus(m, m.r_theta * (1 - 1e-12))
    assert abs(below - eval_modulus(m, m.r_theta)) < 1e-10


def test_om_condition_is_finite():
    for theta in (0.3, 1.0):
        val = om_certificate(Modulus(theta))
        assert math.isfinite(val)
        assert val >= 1.0 - 1e-12  # a = 1 gives ratio 1


def test_embedding_order():
    # omega_theta(r) >= r**theta wherever |ln r| >= 1
    for theta in (0.3, 0.7, 1.0):
        r = np.logspace(-12, -1.0 / theta - 1e-9, 400)
        r = r[r <= math.exp(-1)]
        assert np.all(eval_modulus(Modulus(theta), r) >= r**theta)


def test_subholder_reference_values():
    assert check_subholder(0.0, math.exp(-1)) == pytest.approx(0.0, abs=1e-15)
    assert check_subholder(1.0, 2.0) == pytest.approx(math.exp(-1), abs=1e-15)
    w = lambda t: mpmath.mpf(t) * abs(mpmath.log(t))
    exact = w(mpmath.mpf("0.05")) - abs(w(mpmath.mpf("0.10")) - w(mpmath.mpf("0.05")))
    m = check_subholder(0.05, 0.10)
    assert m >= 0
    assert m == pytest.approx(float(exact), abs=1e-15)


@given(nonneg, nonneg)
def test_subholder_property(a, b):
    assert check_subholder(a, b) >= -1e-12


def test_backends_agree():
    r = np.concatenate([[0.0], np.logspace(-14, 2, 5000)])
    for m in (OMEGA_1, PowerModulus(1.0)):
        assert np.array_equal(_omega_array_nb(m.kind, m.param, r), _omega_array_np(m.kind, m.param, r))
    # fractional powers may differ in the last bit between libm and numpy
    for m in (Modulus(0.4), PowerModulus(0.3)):
        np.testing.assert_allclose(_omega_array_nb(m.kind, m.param, r), _omega_array_np(m.kind, m.param, r),
                                   rtol=1e-15, atol=0)


def brute_seminorm(points, values, m):
    best = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            d = math.sqrt((points[i][0] - points[j][0]) ** 2 + (points[i][1] - points[j][1]) ** 2)
            best = max(best, abs(values[i] - values[j]) / eval_modulus(m, d))
    return best


def test_constant_function_has_zero_seminorm(rng):
    pts = rng.uniform(0, 1, (100, 2))
    est = seminorm_estimate(SampledFunction(pts, np.full(100, 3.0)), OMEGA_1)
    assert est.value == 0.0 and est.exact


def test_omega1_is_omega1_holder():
    p0 = np.array([0.3, -0.2])
    d = np.linspace(-2.0, 2.0, 801)
    pts = p0 + d[:, None] * np.array([0.6, 0.8])
    vals = eval_modulus(OMEGA_1, np.abs(d))
    assert seminorm_estimate(SampledFunction(pts, vals), OMEGA_1, max_pairs=10**6).value <= 1 + 1e-9


def test_coordinate_on_grid_matches_brute_force():
    g = np.arange(6.0)
    pts = np.array([(x, y) for x in g for y in g])
    est = seminorm_estimate(SampledFunction(pts, pts[:, 0]), OMEGA_1)
    assert est.value == brute_seminorm(pts, pts[:, 0], OMEGA_1)
    i, j = est.argmax_pair
    assert abs(pts[i, 0] - pts[j, 0]) / eval_modulus(OMEGA_1, np.linalg.norm(pts[i] - pts[j])) == est.value


@given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=2**31))
def test_full_evaluation_is_bit_exact(n, seed):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(n, 2))
    vals = r.normal(size=n)
    for m in (OMEGA_1, PowerModulus(1.0)):
        est = seminorm_estimate(SampledFunction(pts, vals), m)
        assert est.exact
        assert est.value == brute_seminorm(pts, vals, m)


def test_coincident_points_overflow():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    est = seminorm_estimate(SampledFunction(pts, [0.0, 1.0, 0.0]), OMEGA_1)
    assert est.overflow and est.value == math.inf
    ok = seminorm_estimate(SampledFunction(pts, [2.0, 2.0, 0.0]), OMEGA_1)
    assert not ok.overflow and math.isfinite(ok.value)


def test_subsampled_estimate_is_lower_bound(rng):
    pts = rng.uniform(0, 1, (600, 2))
    vals = np.sin(5 * pts[:, 0]) + np.abs(pts[:, 1] - 0.5)
    f = SampledFunction(pts, vals)
    full = seminorm_estimate(f, OMEGA_1, max_pairs=10**6)
    sub = seminorm_estimate(f, OMEGA_1, max_pairs=20_000, seed=3)
    assert full.exact and not sub.exact and sub.lower_bound_only
    assert sub.value <= full.value
    again = seminorm_estimate(f, OMEGA_1, max_pairs=20_000, seed=3)
    assert again.value == sub.value and again.argmax_pair == sub.argmax_pair


def test_subsample_contains_nearest_neighbours(rng):
    pts = rng.uniform(0, 1, (200, 2))
    ii, jj = subsample_pairs(pts, 5000, k_neighbors=8, seed=0)
    pairs = set(zip(ii.tolist(), jj.tolist()))
    from scipy.spatial import cKDTree

    _, nbr = cKDTree(pts).query(pts, k=9)
    for i in range(200):
        for j in nbr[i, 1:]:
            assert (min(i, j), max(i, j)) in pairs


def test_sampled_function_validation():
    with pytest.raises(DomainError):
        SampledFunction(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DomainError):
        SampledFunction(np.array([[0.0, np.nan], [1.0, 1.0]]), np.zeros(2))
    with pytest.raises(DomainError):
        seminorm_estimate(SampledFunction(np.zeros((1, 2)), [1.0]), OMEGA_1)


def test_large_separation_bound(rng):
    pts = rng.uniform(-1, 1, (300, 2))
    f = SampledFunction(pts, np.cos(3 * pts[:, 0]) * pts[:, 1])
    for a in (0.05, 0.3, 1.0):
        assert check_large_separation_bound(f, OMEGA_1, a) >= -1e-12
    with pytest.raises(DomainError):
        check_large_separation_bound(f, OMEGA_1, 0.0)


def test_numpy_path_matches_numba_path(rng, monkeypatch):
    pts = rng.normal(size=(300, 2))
    f = SampledFunction(pts, rng.normal(size=300))
    a = seminorm_estimate(f, OMEGA_1, max_pairs=10**6)
    b = seminorm_estimate(f, OMEGA_1, max_pairs=5000)
    monkeypatch.setattr(_accel, "USE_NUMBA", False)
    assert seminorm_estimate(f, OMEGA_1, max_pairs=10**6).value == a.value
    assert seminorm_estimate(f, OMEGA_1, max_pairs=5000).value == b.value
