import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miranda_layers.errors import ConfigError, SingularityError
from miranda_layers.kernels import (
    HomogeneousKernel,
    check_odd,
    eval_kernel,
    eval_kernel_grad,
    fourier,
    fourier_odd,
    from_samples,
    kernel_from_config,
    odd_harmonic,
    partial,
    require_odd,
    riesz,
    sphere_norm,
    trace_norm,
)

BUILTINS = [riesz(1), riesz(2)] + [odd_harmonic(m, p) for m in range(4) for p in ("cos", "sin")]
coeff = st.floats(-3, 3, allow_nan=False)
vec = st.tuples(st.floats(-5, 5), st.floats(-5, 5)).filter(lambda z: math.hypot(*z) > 1e-3)


def test_riesz_reference_values():
    k = riesz(1, normalized=False)
    assert eval_kernel(k, [2.0, 0.0]) == pytest.approx(0.5, abs=1e-15)
    assert eval_kernel(k, [0.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(eval_kernel_grad(k, [1.0, 0.0]), [-1.0, 0.0], atol=1e-15)
    assert eval_kernel(riesz(2), [0.0, 3.0]) == pytest.approx(1 / (6 * math.pi), rel=1e-15)


def test_riesz_matches_closed_form(rng):
    z = rng.normal(size=(1000, 2))
    r2 = (z**2).sum(axis=1)
    for j in (1, 2):
        np.testing.assert_allclose(eval_kernel(riesz(j), z), z[:, j - 1] / (2 * math.pi * r2), rtol=1e-13)


def test_gradient_closed_form(rng):
    z = rng.normal(size=(500, 2))
    r2 = (z**2).sum(axis=1)
    g = eval_kernel_grad(riesz(1, normalized=False), z)
    np.testing.assert_allclose(g[:, 0], (r2 - 2 * z[:, 0] ** 2) / r2**2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(g[:, 1], -2 * z[:, 0] * z[:, 1] / r2**2, rtol=1e-12, atol=1e-14)


def test_origin_is_singular():
    with pytest.raises(SingularityError):
        eval_kernel(riesz(1), [0.0, 0.0])
    with pytest.raises(SingularityError):
        eval_kernel_grad(riesz(1), [[1.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("k", BUILTINS, ids=lambda k: k.name)
def test_builtins_are_odd(k):
    assert k.odd_flag
    assert check_odd(k) <= 1e-12
    assert require_odd(k) <= 1e-12


def test_even_kernel_refused():
    even = fourier([0.0, 0.0, 1.0], [], name="cos2")
    assert not even.odd_flag
    assert check_odd(even) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        require_odd(even)


@given(vec, st.floats(0.01, 100))
def test_homogeneity(z, lam):
    k = odd_harmonic(2, "sin") + riesz(1)
    z = np.array(z)
    assert eval_kernel(k, lam * z) == pytest.approx(eval_kernel(k, z) / lam, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(eval_kernel_grad(k, lam * z), eval_kernel_grad(k, z) / lam**2, rtol=1e-12,
                               atol=1e-13 * np.abs(eval_kernel_grad(k, z)).max() / lam**2)


@given(st.lists(coeff, min_size=1, max_size=4), st.lists(coeff, min_size=1, max_size=4), coeff, coeff, vec)
def test_linear_structure(c1, c2, a, b, z):
    k1, k2 = fourier_odd(c1), fourier_odd([], c2)
    combo = a * k1 + b * k2
    z = np.array(z)
    lhs = eval_kernel(combo, z)
    rhs = a * eval_kernel(k1, z) + b * eval_kernel(k2, z)
    scale = (abs(a) * np.abs(k1.cos_coeffs).sum() + abs(b) * np.abs(k2.sin_coeffs).sum()) / np.hypot(*z)
    assert abs(lhs - rhs) <= 1e-14 * max(scale, 1e-300) * 4


def test_sphere_norm_of_unnormalized_riesz():
    n = sphere_norm(riesz(1, normalized=False))
    assert n.c0 == pytest.approx(1.0, abs=1e-12)
    assert n.c1 == pytest.approx(1.0, abs=1e-12)
    assert n.lip1 == pytest.approx(1.0, rel=1e-4)
    assert n.total >= max(n.c0, n.c1, n.lip1)


def test_sphere_norm_scaling_and_zero():
    base = sphere_norm(riesz(2)).total
    assert sphere_norm(5 * riesz(2)).total == pytest.approx(5 * base, rel=1e-12)
    z = sphere_norm(HomogeneousKernel([0.0], [0.0]))
    assert (z.c0, z.c1, z.lip1) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        sphere_norm(riesz(1), M=64)


@pytest.mark.parametrize("k", BUILTINS[:4], ids=lambda k: k.name)
def test_sphere_norm_stable_under_doubling(k):
    assert abs(sphere_norm(k, 2048).total / sphere_norm(k, 1024).total - 1) < 0.01


@given(st.sampled_from(BUILTINS), st.sampled_from([1, 2]), vec)
def test_partial_kernel_is_the_gradient(k, j, z):
    z = np.array(z)
    assert partial(k, j).degree == k.degree - 1
    g = eval_kernel_grad(k, z)[j - 1]
    scale = np.abs(eval_kernel_grad(k, z)).max() + sphere_norm(k).c1 / np.dot(z, z)
    assert abs(eval_kernel(partial(k, j), z) - g) <= 1e-13 * scale


def test_trace_norm_of_partial():
    # d1 (z1/|z|^2) has trace cos(2 phi) * (-1): sup 1, Lipschitz 2
    tn = trace_norm(partial(riesz(1, normalized=False), 1))
    assert tn.c0 == pytest.approx(1.0, abs=1e-12)
    assert tn.lip0 == pytest.approx(2.0, rel=1e-4)


def test_from_samples_recovers_series():
    k = from_samples(lambda u: u[:, 0] ** 3, M=64)
    # cos^3 = (3 cos + cos 3)/4
    assert k.cos_coeffs[1] == pytest.approx(0.75, abs=1e-14)
    assert k.cos_coeffs[3] == pytest.approx(0.25, abs=1e-14)
    assert k.odd_flag or check_odd(k) < 1e-14


def test_from_samples_warns_on_rough_trace():
    with pytest.warns(RuntimeWarning):
        from_samples(lambda u: np.sign(u[:, 0]), M=256)


def test_kernel_config():
    assert kernel_from_config({"kernel": "riesz", "component": 2}).name == "riesz2"
    assert kernel_from_config({"kernel": "odd_harmonic", "mode": 3, "phase": "sin"}).name == "sin7"
    with pytest.raises(ConfigError):
        kernel_from_config({"kernel": "odd_harmonic", "mode": 4})
    with pytest.raises(ConfigError):
        kernel_from_config({"kernel": "gauss"})
    with pytest.raises(ConfigError):
        riesz(3)
