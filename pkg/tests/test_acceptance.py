"""Acceptance criteria 1-10, each at its stated tolerance.

Every criterion prints exactly one PASS/FAIL line.  Parts that cannot hold
for the stated experiment are strict xfails that still print FAIL; the parts
of the same criterion that do hold are asserted separately.
"""
import math
import os
import time

import numpy as np
import pytest

from miranda_layers import harness
from miranda_layers.boundary import TWO_PI, circle
from miranda_layers.geoconst import c_iv_table, compute_c_prime, compute_c_tprime, stability
from miranda_layers.kernels import (
    eval_kernel,
    eval_kernel_grad,
    odd_harmonic,
    riesz,
    sphere_norm,
)
from miranda_layers.modulus import check_subholder
from miranda_layers.potential import eval_K, eval_K_many, gradient_scan, make_density
from miranda_layers.tubular import (
    condition_margins,
    injectivity_sampling,
    side_agreement,
    vector_inequality_slack,
)
from oracles import c_iv_ratio_circle, c_tprime2_circle, trapezoid_oracle

SEED = 20240601
ELLIPSE = {"boundary": {"shape": "ellipse", "params": {"a": 1.0, "b": 0.5}}}
UNIT = circle(1.0)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# ------------------------------------------------------------------ 1


def test_criterion_1_subholder(verdict):
    rng = np.random.default_rng(SEED)
    with Timer() as tm:
        t1, t2 = rng.uniform(0.0, 10.0, size=(2, 10**6))
        worst = float(check_subholder(t1, t2).min())
    ok = worst >= -1e-12
    verdict(1, ok, f"min subholder margin {worst:.3e} >= -1e-12 over 1e6 pairs ({tm.elapsed:.2f}s)")
    assert ok


# ------------------------------------------------------------------ 2


def _premise_samples(rng, n):
    theta = rng.uniform(0.0, 1.0, n)
    a = rng.uniform(0.0, TWO_PI, n)
    cos_phi = theta * rng.uniform(-1.0, 1.0, n)
    phi = np.arccos(cos_phi) * np.where(rng.random(n) < 0.5, -1.0, 1.0)
    r1, r2 = rng.uniform(0.0, 3.0, size=(2, n))
    v = r1[:, None] * np.column_stack([np.cos(a), np.sin(a)])
    w = r2[:, None] * np.column_stack([np.cos(a + phi), np.sin(a + phi)])
    # keep only samples whose rounded coordinates still satisfy the premise
    keep = np.abs(np.sum(v * w, axis=1)) <= theta * np.linalg.norm(v, axis=1) * np.linalg.norm(w, axis=1)
    keep &= theta > 0
    return v[keep], w[keep], theta[keep]


def test_criterion_2_vector_inequality(verdict):
    rng = np.random.default_rng(SEED + 1)
    with Timer() as tm:
        v, w, theta = _premise_samples(rng, 10**6)
        worst = float(vector_inequality_slack(v, w, theta).min())
    ok = worst >= -1e-12 and v.shape[0] > 0.99 * 10**6
    verdict(2, ok, f"min slack {worst:.3e} >= -1e-12 over {v.shape[0]} premise samples ({tm.elapsed:.2f}s)")
    assert ok


# ------------------------------------------------------------------ 3

BUILTINS = [riesz(1), riesz(2)] + [odd_harmonic(m, p) for m in range(4) for p in ("cos", "sin")]


def _kernel_errors(k, rng, n=10**4):
    """Scale-free errors: each difference is divided by the natural size of
    the quantity at that radius (trace sup times |z|^degree)."""
    norm = sphere_norm(k)
    c0, g0 = norm.c0, norm.c0 + norm.c1
    ang = rng.uniform(0.0, TWO_PI, n)
    r = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), n))
    z = r[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    lam = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), n))
    kz = eval_kernel(k, z)
    gz = eval_kernel_grad(k, z)
    odd = np.max(np.abs(kz + eval_kernel(k, -z)) * r / c0)
    hom = np.max(np.abs(eval_kernel(k, lam[:, None] * z) - kz / lam) * lam * r / c0)
    ghom = np.max(np.linalg.norm(eval_kernel_grad(k, lam[:, None] * z) - gz / lam[:, None] ** 2, axis=1)
                  * (lam * r) ** 2 / g0)
    h = 1e-5 * r
    fd = np.column_stack([
        (eval_kernel(k, z + h[:, None] * [1.0, 0.0]) - eval_kernel(k, z - h[:, None] * [1.0, 0.0])) / (2 * h),
        (eval_kernel(k, z + h[:, None] * [0.0, 1.0]) - eval_kernel(k, z - h[:, None] * [0.0, 1.0])) / (2 * h),
    ])
    fdiff = np.max(np.linalg.norm(fd - gz, axis=1) * r**2 / g0)
    return odd, hom, ghom, fdiff


def test_criterion_3_kernel_algebra(verdict):
    rng = np.random.default_rng(SEED + 3)
    worst = np.zeros(4)
    with Timer() as tm:
        for k in BUILTINS:
            worst = np.maximum(worst, _kernel_errors(k, rng))
    limits = np.array([1e-12, 1e-12, 1e-12, 1e-6])
    ok = bool(np.all(worst <= limits))
    verdict(3, ok, f"{len(BUILTINS)} kernels x 1e4 points: odd {worst[0]:.1e}, degree -1 {worst[1]:.1e}, "
                   f"gradient degree -2 {worst[2]:.1e} (<= 1e-12); central FD {worst[3]:.1e} (<= 1e-6) "
                   f"({tm.elapsed:.2f}s)")
    assert ok


# ------------------------------------------------------------------ 4


def test_criterion_4_quadrature(verdict, riesz1):
    one = make_density("const 1", UNIT)
    rng = np.random.default_rng(SEED + 4)
    with Timer() as tm:
        centre = abs(eval_K(UNIT, riesz1, one, [0.0, 0.0]).value)
        d = np.exp(rng.uniform(math.log(1e-3), 0.0, 20))
        ang = rng.uniform(0.0, TWO_PI, 20)
        xs = (1.0 + d)[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
        got = np.array([p.value for p in eval_K_many(UNIT, riesz1, one, xs)])
        ref = np.array([trapezoid_oracle(UNIT, np.ones_like, x) for x in xs])
        rel = float(np.max(np.abs(got - ref) / np.abs(ref)))
    ok = centre <= 1e-12 and rel <= 1e-9
    verdict(4, ok, f"|K(0)| = {centre:.1e} (<= 1e-12); 20 points at dist [1e-3, 1] vs 1e7-node trapezoid: "
                   f"max rel {rel:.1e} (<= 1e-9) ({tm.elapsed:.1f}s)")
    assert ok


# ------------------------------------------------------------------ 5


@pytest.fixture(scope="module")
def circle_constants():
    with Timer() as tm:
        out = {
            "c_prime0": compute_c_prime(UNIT, 0.0, n_x=64),
            "c_iv_1e-6": float(c_iv_table(UNIT, [1e-6], n_x=64).max()),
            "c_tprime2": compute_c_tprime(UNIT, 2.0, n_x=64),
            "stability": stability(UNIT, n_x=128, n_s=12)[0].stability,
        }
    out["elapsed"] = tm.elapsed
    return out


@pytest.mark.xfail(strict=True, reason="the closed-form ratio at s = 1e-6 is 2.2007; the band [1.95, 2.05] "
                                       "is entered only below s = 1e-24")
def test_criterion_5_geometric_constants(verdict, circle_constants):
    c = circle_constants
    p0 = abs(c["c_prime0"] - TWO_PI) <= 1e-8
    iv = 1.95 <= c["c_iv_1e-6"] <= 2.05
    tp = 1.9 <= c["c_tprime2"] <= 2.6
    worst = max(c["stability"].values())
    st = worst <= 0.02
    ok = p0 and iv and tp and st
    verdict(5, ok, f"c'(0) - 2pi = {c['c_prime0'] - TWO_PI:.1e} [{'ok' if p0 else 'no'}]; c_iv ratio at 1e-6 = "
                   f"{c['c_iv_1e-6']:.4f} in [1.95, 2.05] [{'ok' if iv else 'no'}]; c'''(2) = {c['c_tprime2']:.6f} "
                   f"in [1.9, 2.6] [{'ok' if tp else 'no'}]; doubling change {worst:.1e} <= 0.02 "
                   f"[{'ok' if st else 'no'}] ({c['elapsed']:.1f}s)")
    assert ok


def test_criterion_5_attainable_parts(circle_constants):
    c = circle_constants
    assert abs(c["c_prime0"] - TWO_PI) <= 1e-8
    assert 1.9 <= c["c_tprime2"] <= 2.6
    assert c["c_tprime2"] == pytest.approx(c_tprime2_circle(1e-6), rel=1e-9)
    assert max(c["stability"].values()) <= 0.02
    # the computed ratio is the closed form, and the closed form tends to 2
    assert c["c_iv_1e-6"] == pytest.approx(c_iv_ratio_circle(1e-6), rel=1e-9)
    assert abs(c_iv_ratio_circle(1e-300) - 2.0) < 0.01


# ------------------------------------------------------------------ 6


def test_criterion_6_tubular_field(verdict, circle_field, ellipse_field):
    parts, ok = [], True
    with Timer() as tm:
        for shape, f in (("circle", circle_field), ("ellipse", ellipse_field)):
            margins = condition_margins(f.boundary, f)
            collisions = injectivity_sampling(f, n=10_000, seed=SEED)
            agree, n = side_agreement(f, n=10_000, seed=SEED + 6)
            ok &= all(m > 0 for m in margins.values()) and collisions == 0 and agree == n
            ms = ", ".join(f"{k} {v:.2e}" for k, v in margins.items())
            parts.append(f"{shape}: margins {ms}; {collisions} collisions; sides {agree}/{n}")
    verdict(6, ok, "; ".join(parts) + f" ({tm.elapsed:.1f}s)")
    assert ok


# ------------------------------------------------------------------ 7


@pytest.fixture(scope="module")
def circle_scans(riesz1, circle_field):
    scans = {}
    for spec in ("coord 1", "abs_coord 1", "trig 2"):
        mu = make_density(spec, UNIT)
        scans[spec] = gradient_scan(UNIT, riesz1, mu, circle_field, (-5.0, -2.0), 4, 64, 1e-11)
    return scans


def _variation(scan):
    s = scan.sup_grad_per_t
    return float((s.max() - s.min()) / s.max())


def _abs_parts(scan):
    r = scan.ratio_per_t
    return float(r.max() / r.min()), float(scan.sup_grad_per_t[0] / scan.sup_grad_per_t[-1])


@pytest.mark.xfail(strict=True, reason="on the unit circle K[Riesz_1, y_1] is constant inside, so sup_grad "
                                       "is rounding noise and its relative variation is ~1")
def test_criterion_7_gradient_log_bound(verdict, circle_scans):
    var = _variation(circle_scans["coord 1"])
    spread, growth = _abs_parts(circle_scans["abs_coord 1"])
    smooth_ok = var < 0.2
    abs_ok = spread <= 2.0 and growth >= 1.5
    ok = smooth_ok and abs_ok
    verdict(7, ok, f"y1: sup_grad variation {var:.3f} < 0.2 [{'ok' if smooth_ok else 'no'}]; |y1|: "
                   f"log-ratio spread {spread:.3f} <= 2 and growth {growth:.2f} >= 1.5 [{'ok' if abs_ok else 'no'}]")
    assert ok


def test_criterion_7_attainable_parts(circle_scans):
    spread, growth = _abs_parts(circle_scans["abs_coord 1"])
    assert spread <= 2.0 and growth >= 1.5
    # smooth control with a nonzero gradient: cos 2s
    assert _variation(circle_scans["trig 2"]) < 0.2
    # the y1 gradient sits at the rounding floor
    assert harness.numerically_zero(circle_scans["coord 1"])


# ------------------------------------------------------------------ 8


def test_criterion_8_split_bounds(verdict):
    cfg = harness.merge_config({**ELLIPSE, "split": {"n_s": 16, "n_t": 8}})
    with Timer() as tm:
        rep = harness.cmd_split(harness.Context(cfg))
    checks = {c.name: c for c in rep.checks}
    ok = rep.passed and len(rep.csv_rows) == 4 * 16 * 8 * 2
    slack = ", ".join(f"{n} {checks['slack_' + n].value:.1e}" for n in ("far", "near_far_t", "near_near_t", "mu_term"))
    verdict(8, ok, f"ellipse 16x8 grid, 4 densities: worst slack excess {slack} (<= 0); identity excess "
                   f"{checks['decomposition_identity'].value:.1e} (<= 0); C'' spread "
                   f"{checks['C2_stability'].value:.3f} (<= 2) ({tm.elapsed:.1f}s)")
    assert ok


# ------------------------------------------------------------------ 9


@pytest.fixture(scope="module")
def ellipse_holder():
    cfg = harness.merge_config(ELLIPSE)
    with Timer() as tm:
        rep = harness.cmd_holder(harness.Context(cfg))
    return rep, tm.elapsed


def _holder_parts(rep):
    finite = all(c.passed for c in rep.checks if c.name.startswith("finite_seminorm"))
    stab = {c.name: c.value for c in rep.checks if c.name.startswith("fitted_B_stability")}
    bil = next(c for c in rep.checks if c.name == "bilinearity")
    ident = next(c for c in rep.checks if c.name == "zero_extension_identity")
    return finite, stab, bil, ident


@pytest.mark.xfail(strict=True, reason="the omega_1 seminorm is set by pairs beyond 1/e where omega_1 is "
                                       "capped, so fitted_B tracks the oscillation of K and varies >2x")
def test_criterion_9_holder_estimate(verdict, ellipse_holder):
    rep, elapsed = ellipse_holder
    finite, stab, bil, ident = _holder_parts(rep)
    stab_ok = all(v <= 2.0 for v in stab.values())
    ok = finite and stab_ok and bil.passed and ident.passed
    ss = ", ".join(f"{k[len('fitted_B_stability['):-1]} {v:.2f}" for k, v in stab.items())
    verdict(9, ok, f"ellipse: seminorms finite [{'ok' if finite else 'no'}]; fitted_B spread {ss} (<= 2) "
                   f"[{'ok' if stab_ok else 'no'}]; bilinearity {bil.value:.1e} (<= 1e-12); "
                   f"exterior identity {ident.value:.1e} (<= 1e-12) ({elapsed:.1f}s)")
    assert ok


def test_criterion_9_attainable_parts(ellipse_holder):
    rep, _ = ellipse_holder
    finite, _, bil, ident = _holder_parts(rep)
    assert finite
    assert bil.passed and bil.value <= 1e-12
    assert ident.passed and ident.value <= 1e-12
    assert rep.data["bilinearity"]["points"] == 100
    assert rep.data["sides"]["exterior"]["zero_extension"]["points"] == 100


# ------------------------------------------------------------------ 10


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_criterion_10_determinism(verdict, tmp_path, small_overrides):
    cfg = harness.merge_config(small_overrides)
    with Timer() as tm:
        harness.run("all", cfg, str(tmp_path / "a"))
        harness.run("all", cfg, str(tmp_path / "b"))
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    same = sorted(k for k in a if b.get(k) == a[k])
    ok = bool(a) and a.keys() == b.keys() and len(same) == len(a)
    verdict(10, ok, f"two seeded runs of all: {len(same)}/{len(a)} CSV/JSON files byte-identical "
                    f"({tm.elapsed:.1f}s)")
    assert ok
