"""Off-boundary evaluation of K[k, mu](x) = int k(x - y) mu(y) dsigma_y and of
its gradient, the gradient scan along the collar, and the four-part split
of a gradient component used to bound it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .boundary import TWO_PI, Boundary, chord_crossings, circle, closest_point_batch, diameter, inside, perimeter
from .errors import ConfigError, DomainError, QuadratureConvergenceError, SingularityError
from .kernels import partial, sphere_norm, trace_norm
from .modulus import PowerModulus, SampledFunction, seminorm_estimate
from .quadrature import integrate

MIN_DIST = 1e-12


# ---------------------------------------------------------------------------
# densities


@dataclass(eq=False)
class Density:
    mu_at: Callable[[np.ndarray], np.ndarray]
    lip_const: float
    sup_abs: float
    label: str = "density"
    kinks: tuple = ()

    def __call__(self, s):
        return self.mu_at(np.atleast_1d(np.asarray(s, dtype=float)))

    @property
    def norm(self):
        """sup |mu| + Lip(mu)."""
        return self.sup_abs + self.lip_const

    def scaled(self, beta):
        beta = float(beta)
        fn = self.mu_at
        return Density(lambda s: beta * fn(s), abs(beta) * self.lip_const, abs(beta) * self.sup_abs,
                       f"{beta:g}*{self.label}", self.kinks)


def measured_lipschitz(b, mu_at, n_exact=1024, n_adjacent=16384):
    """Grid Lipschitz quotient w.r.t. ambient distance: all pairs on a coarse
    grid plus adjacent pairs on a fine one."""
    s = np.arange(n_exact) * (TWO_PI / n_exact)
    est = seminorm_estimate(SampledFunction(b.param(s), mu_at(s)), PowerModulus(1.0), max_pairs=n_exact**2)
    sf = np.arange(n_adjacent) * (TWO_PI / n_adjacent)
    p, v = b.param(sf), mu_at(sf)
    adj = np.abs(np.roll(v, -1) - v) / np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    return max(est.value, float(adj.max()))


def measured_sup(mu_at, n=16384):
    s = np.arange(n) * (TWO_PI / n)
    v = np.abs(mu_at(s))
    i = int(np.argmax(v))
    h = TWO_PI / n
    res = minimize_scalar(lambda u: -abs(mu_at(np.array([u]))[0]), bounds=(s[i] - h, s[i] + h),
                          method="bounded", options={"xatol": 1e-13})
    return max(float(v[i]), -float(res.fun))


def tangential_derivative_sup(b, dmu, n=16384):
    """sup |d mu / d sigma|, grid maximum refined by a bounded 1-D search."""
    g = lambda u: np.abs(dmu(u)) / b.speed(u)
    s = np.arange(n) * (TWO_PI / n)
    v = g(s)
    i = int(np.argmax(v))
    h = TWO_PI / n
    res = minimize_scalar(lambda u: -g(np.array([u]))[0], bounds=(s[i] - h, s[i] + h),
                          method="bounded", options={"xatol": 1e-13})
    return max(float(v[i]), -float(res.fun))


def _coordinate_zeros(b, j, n=4096):
    s = np.arange(n + 1) * (TWO_PI / n)
    c = b.param(s)[:, j]
    out = []
    for i in range(n):
        if c[i] == 0.0:
            out.append(s[i])
        elif c[i] * c[i + 1] < 0.0:
            out.append(brentq(lambda u: b.param(np.array([u]))[0, j], s[i], s[i + 1], xtol=1e-15))
    return tuple(sorted(set(np.mod(out, TWO_PI).tolist())))


def make_density(spec, b):
    """Built-in densities: "const c", "coord j", "abs_coord j", "trig m" (cos m s)."""
    parts = str(spec).split()
    if len(parts) != 2:
        raise ConfigError(f"density spec must be '<name> <arg>', got {spec!r}")
    name, arg = parts
    try:
        val = float(arg)
    except ValueError:
        raise ConfigError(f"bad density argument in {spec!r}") from None
    if name == "const":
        return Density(lambda s: np.full(np.shape(s), val), 0.0, abs(val), spec)
    if name in ("coord", "abs_coord", "trig") and val != int(val):
        raise ConfigError(f"density index must be an integer in {spec!r}")
    m = int(val)
    if name in ("coord", "abs_coord"):
        if m not in (1, 2):
            raise ConfigError("coordinate index must be 1 or 2")
        j = m - 1
        if name == "coord":
            fn = lambda s: b.param(s)[:, j]
            kinks = ()
        else:
            fn = lambda s: np.abs(b.param(s)[:, j])
            kinks = _coordinate_zeros(b, j)
        # |y_j - y'_j| <= |y - y'|, with equality approached where the tangent is parallel to e_j
        return Density(fn, 1.0, measured_sup(fn), spec, kinks)
    if name == "trig":
        if m < 0:
            raise ConfigError("trig mode must be nonnegative")
        fn = lambda s: np.cos(m * np.asarray(s))
        dfn = lambda s: -m * np.sin(m * np.asarray(s))
        lip = max(measured_lipschitz(b, fn), tangential_derivative_sup(b, dfn))
        return Density(fn, lip, 1.0, spec)
    raise ConfigError(f"unknown density {name!r}")


# ---------------------------------------------------------------------------
# point evaluation


@dataclass
class PotentialValue:
    value: float
    grad: np.ndarray
    err_est: float
    levels_used: int
    grad_err: np.ndarray = field(default_factory=lambda: np.zeros(2))
    roundoff: np.ndarray = field(default_factory=lambda: np.zeros(3))
    converged: bool = True
    bound_margin: Optional[float] = None


def _targets(b, xs):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    s_star, dist = closest_point_batch(b, xs)
    if np.any(dist <= MIN_DIST):
        raise SingularityError("evaluation point lies on the boundary")
    return xs, s_star, dist


def potential_batch(b, k, mu, xs, tol=1e-12, s_star=None, dist=None):
    """Raw integration result for many targets (no convergence check)."""
    if tol < 1e-13:
        raise DomainError("tol must be >= 1e-13")
    if s_star is None:
        xs, s_star, dist = _targets(b, xs)
    kinks = np.asarray(mu.kinks, dtype=float)
    extra = [kinks] * len(s_star) if kinks.size else None
    cols = lambda s, y, t: mu.mu_at(s)[:, None]
    return integrate(b, k, xs, s_star, dist, cols, extra_breaks=extra, tol=tol)


def _to_values(res):
    out = []
    for i in range(res.values.shape[0]):
        v = res.values[i, 0]
        e = res.err_est[i, 0]
        out.append(PotentialValue(float(v[0]), v[1:].copy(), float(e[0]), int(res.levels[i]),
                                  e[1:].copy(), res.roundoff[i, 0].copy(), bool(res.converged[i])))
    return out


def eval_K_many(b, k, mu, xs, tol=1e-12):
    """PotentialValue per target; unconverged targets are flagged, not raised."""
    return _to_values(potential_batch(b, k, mu, xs, tol))


def eval_K(b, k, mu, x, tol=1e-12):
    (pv,) = eval_K_many(b, k, mu, np.asarray(x, dtype=float).reshape(1, 2), tol)
    if not pv.converged:
        raise QuadratureConvergenceError("refinement cap reached before tolerance", best=pv)
    return pv


def far_field_bound(b, k, mu, dist):
    return sphere_norm(k).c0 * mu.sup_abs * perimeter(b) / dist


def eval_K_exterior(b, k, mu, x, tol=1e-12):
    """As :func:`eval_K` for x outside the closed domain; records the margin of
    |K| <= sup|k| sup|mu| perimeter / dist(x, boundary)."""
    x = np.asarray(x, dtype=float).reshape(1, 2)
    if inside(b, x)[0]:
        raise DomainError("point is inside the domain")
    pv = eval_K(b, k, mu, x, tol)
    _, dist = closest_point_batch(b, x)
    pv.bound_margin = float(far_field_bound(b, k, mu, dist[0]) - abs(pv.value))
    return pv


def circumradius(b, n=4096):
    return float(np.max(np.linalg.norm(b.param(np.arange(n) * (TWO_PI / n)), axis=1)))


def reversed_boundary(b):
    """The same curve traversed backwards, s -> -s (opposite orientation)."""
    d2 = None if b.d2param is None else (lambda s: b.d2param(-s))
    return Boundary(lambda s: b.param(-s), lambda s: -b.dparam(-s), b.lip_dparam,
                    f"{b.name}-reversed", d2, b.interior_point)


def reversed_density(mu):
    fn = mu.mu_at
    kinks = tuple(sorted(float(np.mod(-k, TWO_PI)) for k in mu.kinks))
    return Density(lambda s: fn(-s), mu.lip_const, mu.sup_abs, f"{mu.label}-reversed", kinks)


def eval_K_zero_extended(b, k, mu, xs, r, tol=1e-12):
    """K[k, mu~] on the annular domain B(0, r) minus the closed domain.

    The annulus boundary is the inner curve run backwards (it bounds the
    annulus from inside) plus the circle of radius r; mu~ is mu pulled back
    to the reversed curve and 0 on the circle.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    outer = circle(r)
    if np.any(np.linalg.norm(xs, axis=1) >= r) or np.any(inside(b, xs)):
        raise DomainError("points must lie between the boundary and the outer circle")
    inner = potential_batch(reversed_boundary(b), k, reversed_density(mu), xs, tol)
    zero = Density(lambda s: np.zeros(np.shape(s)), 0.0, 0.0, "zero")
    xs2, s2, d2 = _targets(outer, xs)
    outer_res = potential_batch(outer, k, zero, xs2, tol, s2, d2)
    return inner.values[:, 0, 0] + outer_res.values[:, 0, 0]


# ---------------------------------------------------------------------------
# gradient scan


@dataclass
class GradientScan:
    t_grid: np.ndarray
    s_grid: np.ndarray
    grad_norm: np.ndarray
    sup_grad_per_t: np.ndarray
    M_est: float
    flags: np.ndarray
    err_est: np.ndarray
    noise: np.ndarray

    @property
    def ratio_per_t(self):
        return self.sup_grad_per_t / np.abs(np.log(np.abs(self.t_grid)))


def scan_grid(field_, t_decades=(-5.0, -2.0), n_t=4, n_s=64):
    lo, hi = t_decades
    t_grid = -np.logspace(lo, hi, n_t)
    if np.any(np.abs(t_grid) >= field_.t1_cert):
        raise DomainError(f"scan reaches |t| >= t1 = {field_.t1_cert:.6g}")
    s_grid = np.arange(n_s) * (TWO_PI / n_s)
    return t_grid, s_grid


def gradient_scan(b, k, mu, field_, t_decades=(-5.0, -2.0), n_t=4, n_s=64, tol=1e-11):
    """|grad K| at Psi(s_i, t_j) on an (n_t, n_s) grid, its per-t sup and
    M_est = max |grad K| / |log|t||."""
    t_grid, s_grid = scan_grid(field_, t_decades, n_t, n_s)
    S, Tt = np.meshgrid(s_grid, t_grid)
    pts = field_.psi(S.ravel(), Tt.ravel())
    res = potential_batch(b, k, mu, pts, tol)
    g = res.values[:, 0, 1:]
    gn = np.hypot(g[:, 0], g[:, 1]).reshape(n_t, n_s)
    err = np.max(res.err_est[:, 0, 1:], axis=1).reshape(n_t, n_s)
    flags = ~res.converged.reshape(n_t, n_s)
    noise = np.hypot(res.roundoff[:, 0, 1], res.roundoff[:, 0, 2]).reshape(n_t, n_s).max(axis=1)
    sup = gn.max(axis=1)
    logt = np.abs(np.log(np.abs(t_grid)))
    m_est = float(np.max(gn / logt[:, None]))
    return GradientScan(t_grid, s_grid, gn, sup, m_est, flags, err, noise)


# ---------------------------------------------------------------------------
# split of one gradient component


@dataclass
class SplitDiagnostics:
    s: float
    t: float
    j: int
    far_part: float
    near_far_t: float
    near_near_t: float
    mu_term: float
    bound_far: float
    bound_near_far_t: float
    bound_near_near_t: float
    bound_mu_term: float
    total: float
    err_parts: np.ndarray
    err_total: float
    roundoff: float = 0.0

    def parts(self):
        return np.array([self.far_part, self.near_far_t, self.near_near_t, self.mu_term])

    def bounds(self):
        return np.array([self.bound_far, self.bound_near_far_t, self.bound_near_near_t, self.bound_mu_term])

    def slacks(self):
        return self.bounds() - np.abs(self.parts())

    @property
    def identity_gap(self):
        return abs(self.parts().sum() - self.total)


@dataclass
class SplitContext:
    """Per (boundary, kernel, field) constants entering the split bounds."""

    boundary: object
    kernel: object
    field: object
    perimeter: float
    diameter: float
    c_iv: float
    c_dprime_m1: float
    dk_c0: tuple
    dk_lip: tuple
    c2_fit: float = math.nan


def make_split_context(b, k, field_, c_iv=None, c_dprime_m1=None, s_samples=256):
    from . import geoconst

    if c_iv is None:
        c_iv = geoconst.compute_c_iv(b, n_x=s_samples)
    if c_dprime_m1 is None:
        c_dprime_m1 = geoconst.compute_c_dprime(b, -1.0, n_x=s_samples)
    norms = [trace_norm(partial(k, j)) for j in (1, 2)]
    return SplitContext(b, k, field_, perimeter(b), diameter(b), float(c_iv), float(c_dprime_m1),
                        tuple(n.c0 for n in norms), tuple(n.total for n in norms))


def _split_raw(ctx, mu, s_pts, t_pts, tol=1e-12):
    """Integrate the four pieces for both gradient components at once."""
    b, f = ctx.boundary, ctx.field
    s_pts = np.asarray(s_pts, dtype=float)
    t_pts = np.asarray(t_pts, dtype=float)
    if np.any(t_pts >= 0) or np.any(-t_pts >= min(f.t1_cert, 0.5 * f.tau_cert)):
        raise DomainError("t must lie in (-min(t1, tau/2), 0)")
    xs = f.psi(s_pts, t_pts)
    xbar = b.param(s_pts)
    mu_bar = mu(s_pts)
    tau = f.tau_cert
    s_star, dist = closest_point_batch(b, xs)
    kinks = np.asarray(mu.kinks, dtype=float)
    extra = []
    for i, s0 in enumerate(s_pts):
        cr = chord_crossings(b, s0, [tau, abs(t_pts[i])])
        extra.append(np.concatenate([s0 + cr[0], s0 + cr[1], kinks]))
    r_tau = tau
    r_t = np.abs(t_pts)

    def cols(s, y, tid):
        chord = np.linalg.norm(y - xbar[tid], axis=1)
        diff = mu.mu_at(s) - mu_bar[tid]
        far = chord >= r_tau
        nn = chord < r_t[tid]
        nf = ~far & ~nn
        return np.column_stack([diff * far, diff * nf, diff * nn, np.ones(s.shape), mu.mu_at(s)])

    res = integrate(b, ctx.kernel, xs, s_star, dist, cols, extra_breaks=extra, tol=tol)
    return res, mu_bar


def fit_c2(ctx, s_pts, t_pts, tol=1e-12):
    """Max over the grid and both components of |int d_j k| / (||d_j k||_{C^{0,1}} |log|t||)."""
    one = Density(lambda s: np.ones(np.shape(s)), 0.0, 1.0, "const 1")
    res, _ = _split_raw(ctx, one, s_pts, t_pts, tol)
    logt = np.abs(np.log(np.abs(np.asarray(t_pts, dtype=float))))
    best = 0.0
    for j in (1, 2):
        ratio = np.abs(res.values[:, 3, j]) / (ctx.dk_lip[j - 1] * logt)
        best = max(best, float(ratio.max()))
    ctx.c2_fit = best
    return best


def split_batch(ctx, mu, s_pts, t_pts, tol=1e-12):
    """SplitDiagnostics for every (s, t) pair and both components."""
    if not math.isfinite(ctx.c2_fit):
        raise DomainError("fit_c2 must run before split diagnostics")
    res, mu_bar = _split_raw(ctx, mu, s_pts, t_pts, tol)
    f = ctx.field
    theta = f.theta_cert
    lip = mu.lip_const
    out = []
    for i, (s0, t) in enumerate(zip(np.asarray(s_pts, float), np.asarray(t_pts, float))):
        logt = abs(math.log(abs(t)))
        for j in (1, 2):
            v = res.values[i, :, j]
            e = res.err_est[i, :, j]
            c0 = ctx.dk_c0[j - 1]
            out.append(SplitDiagnostics(
                s=float(s0), t=float(t), j=j,
                far_part=float(v[0]), near_far_t=float(v[1]), near_near_t=float(v[2]),
                mu_term=float(mu_bar[i] * v[3]),
                bound_far=c0 * lip * ctx.perimeter * ctx.diameter * (0.5 * f.tau_cert) ** -2,
                bound_near_far_t=c0 * lip * ctx.c_iv * logt / (1.0 - theta),
                bound_near_near_t=c0 * lip * ctx.c_dprime_m1 / (1.0 - theta),
                bound_mu_term=abs(mu_bar[i]) * ctx.c2_fit * ctx.dk_lip[j - 1] * logt,
                total=float(v[4]),
                err_parts=np.array([e[0], e[1], e[2], abs(mu_bar[i]) * e[3]]),
                err_total=float(e[4]),
                roundoff=float(res.roundoff[i, :, j].sum()),
            ))
    return out


def split_diagnostics(b, k, mu, field_, s, t, j, ctx=None, tol=1e-12):
    """Single-point split; builds (and fits) the context when not supplied."""
    if ctx is None:
        ctx = make_split_context(b, k, field_)
        t_grid, s_grid = scan_grid(field_, (-5.0, math.log10(0.5 * min(field_.t1_cert, 0.5 * field_.tau_cert))), 8, 16)
        S, Tt = np.meshgrid(s_grid, t_grid)
        fit_c2(ctx, S.ravel(), Tt.ravel(), tol)
    if j not in (1, 2):
        raise DomainError("component j must be 1 or 2")
    diags = split_batch(ctx, mu, [s], [t], tol)
    return diags[j - 1]
