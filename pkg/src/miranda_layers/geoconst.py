"""Sup-type boundary integrals of |x' - y|^(-lambda):

    c_prime(lam)   = sup_x'  int_{boundary} |x'-y|^-lam dsigma                 (lam < 1)
    c_dprime(lam)  = sup_x',s s^(lam-1) int_{|x'-y| < s} |x'-y|^-lam dsigma    (lam < 1)
    c_tprime(lam)  = sup_x',s s^(lam-1) int_{|x'-y| >= s} |x'-y|^-lam dsigma   (lam > 1)
    c_iv           = sup_x',s |ln s|^-1 int_{|x'-y| >= s} |x'-y|^-1 dsigma    (s < 1/e)

The grid sup over (x', s) is polished by bounded 1-D maximizations around
the grid argmax.  For each x' the parameter offset u in [-pi, pi] is cut at dyadic points
toward u = 0 and at every chord crossing |p(s'+u) - x'| = s of the s-grid,
so each panel lies entirely inside or outside every ball and all s are
served by one set of panel integrals.  The panel touching u = 0 uses
Gauss-Jacobi with weight u^(-lam).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import roots_jacobi

from .boundary import TWO_PI, chord_crossings, diameter
from .errors import DomainError
from .quadrature import GL_W, GL_X

DYADIC_LEVELS = 44
N_X = 512
N_REFINE = 3
N_BRACKET = 65
N_PATCH_X = 17
N_POLISH = 3


# below this offset the chord is formed from the midpoint derivative, which
# avoids the cancellation in p(s0 + v) - p(s0)
SECANT_CUTOFF = 2e-5


def chord_from_offset(b, s0, x0, v, sign):
    """|p(s0 + sign v) - x0| with x0 = p(s0), accurate for tiny v."""
    v = np.asarray(v, dtype=float)
    out = np.linalg.norm(b.param(s0 + sign * v) - x0, axis=1)
    small = v < SECANT_CUTOFF
    if np.any(small):
        vs = v[small]
        out[small] = vs * b.speed(s0 + sign * 0.5 * vs)
    return out


def _dyadic():
    return math.pi * 2.0 ** -np.arange(DYADIC_LEVELS, 0, -1)


def _panel_integrals(b, s0, lam, crossings_side, sign):
    """Integrals over consecutive panels in v in [0, pi] of
    |p(s0 + sign v) - p(s0)|^-lam |p'| and the chord at each panel midpoint."""
    x0 = b.points([s0])[0]
    br = np.unique(np.concatenate([[0.0], _dyadic(), crossings_side, [math.pi]]))
    br = br[(br >= 0.0) & (br <= math.pi)]
    a, c = br[:-1], br[1:]
    half = 0.5 * (c - a)
    mid = a + half
    v = (mid[:, None] + half[:, None] * GL_X[None, :])
    w = half[:, None] * GL_W[None, :]
    sv = s0 + sign * v.ravel()
    chord = chord_from_offset(b, s0, x0, v.ravel(), sign).reshape(v.shape)
    speed = b.speed(sv).reshape(v.shape)
    with np.errstate(divide="ignore"):
        P = np.sum(w * chord ** (-lam) * speed, axis=1)
    # first panel: weak singularity at v = 0
    v1 = c[0]
    if lam >= 1.0:
        P[0] = math.inf
    elif lam > 0.0:
        xj, wj = roots_jacobi(16, 0.0, -lam)
        vj = 0.5 * v1 * (1.0 + xj)
        sj = s0 + sign * vj
        ratio = b.speed(s0 + sign * 0.5 * vj)
        g = ratio ** (-lam) * b.speed(sj)
        P[0] = (0.5 * v1) ** (1.0 - lam) * np.sum(wj * g)
    pm = chord_from_offset(b, s0, x0, mid, sign)
    return P, pm


def ball_profiles(b, s0, lam, radii):
    """(total, inside(r), outside(r)) of int |x'-y|^-lam dsigma at x' = p(s0)."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    cr = chord_crossings(b, s0, radii) if radii.size else []
    allc = np.concatenate(cr) if len(cr) else np.empty(0)
    P_parts, m_parts = [], []
    for sign in (1.0, -1.0):
        side = allc[allc * sign > 0] * sign
        P, m = _panel_integrals(b, s0, lam, side, sign)
        P_parts.append(P)
        m_parts.append(m)
    P = np.concatenate(P_parts)
    m = np.concatenate(m_parts)
    order = np.argsort(m, kind="stable")
    ms, Ps = m[order], P[order]
    idx = np.searchsorted(ms, radii, side="left")
    cin = np.concatenate([[0.0], np.cumsum(Ps)])
    cout = np.concatenate([np.cumsum(Ps[::-1])[::-1], [0.0]])
    return float(np.sum(P)), cin[idx], cout[idx]


def _x_grid(n_x):
    return np.arange(n_x) * (TWO_PI / n_x)


def default_s_grid(b, n_s=48, lo=1e-6):
    """Log-spaced below diam/10, linear above: the sup of the inside profile
    usually sits at a macroscopic radius just past a far-side contact."""
    d = diameter(b)
    small = np.logspace(math.log10(lo), math.log10(0.1 * d), n_s, endpoint=False)
    return np.concatenate([small, np.linspace(0.1 * d, d, n_s)])


def _refined_sup(b, lam, side, weight, table, s_grid, n_x):
    """Polish the grid sup of weight(s) * profile(x', s): bounded maximization
    in s over the cells next to the grid argmax, then in x'."""
    xg = _x_grid(n_x)
    s_grid = np.asarray(s_grid, dtype=float)
    best = float(table.max())
    if s_grid.size < 2:
        return best
    h = TWO_PI / n_x

    pick = 1 if side == "in" else 2

    def value(s0, s):
        return weight(s) * ball_profiles(b, s0, lam, [s])[pick][0]

    # the sup of each s-column, best few columns first.  The peak is a narrow
    # ridge just past the radius where the ball first touches a far arc, so a
    # dense local (x', s) patch is sampled before alternating 1-D polishes.
    col_best = table.max(axis=0)
    for k in np.argsort(col_best)[::-1][:N_REFINE]:
        i = int(np.argmax(table[:, k]))
        ls = np.linspace(math.log(s_grid[max(k - 1, 0)]), math.log(s_grid[min(k + 1, s_grid.size - 1)]),
                         N_BRACKET)
        ss = np.exp(ls)
        wts = np.array([weight(x) for x in ss])
        xs = xg[i] + np.linspace(-2.0 * h, 2.0 * h, N_PATCH_X)
        patch = np.array([wts * ball_profiles(b, x0, lam, ss)[pick] for x0 in xs])
        ix, js = np.unravel_index(int(np.argmax(patch)), patch.shape)
        cand, x_best, u_best = float(patch[ix, js]), xs[ix], ls[js]
        du, dx = ls[1] - ls[0], xs[1] - xs[0]
        for _ in range(N_POLISH):
            r = minimize_scalar(lambda u: -value(x_best, math.exp(u)), bounds=(max(u_best - du, ls[0]), min(u_best + du, ls[-1])),
                                method="bounded", options={"xatol": 1e-12})
            if -r.fun > cand:
                cand, u_best = -r.fun, r.x
            r = minimize_scalar(lambda x: -value(x, math.exp(u_best)), bounds=(x_best - dx, x_best + dx),
                                method="bounded", options={"xatol": 1e-12})
            if -r.fun > cand:
                cand, x_best = -r.fun, r.x
        best = max(best, cand)
    return best


def compute_c_prime(b, lam, n_x=N_X):
    if lam >= 1.0:
        raise DomainError("c_prime needs lambda < 1 (integrability of |x-y|^-lambda on a curve)")
    vals = np.array([ball_profiles(b, s0, lam, [])[0] for s0 in _x_grid(n_x)])
    return float(vals.max())


def c_dprime_table(b, lam, s_grid, n_x=N_X):
    if lam >= 1.0:
        raise DomainError("c_dprime needs lambda < 1")
    s_grid = np.asarray(s_grid, dtype=float)
    rows = [ball_profiles(b, s0, lam, s_grid)[1] for s0 in _x_grid(n_x)]
    return np.asarray(rows) * s_grid[None, :] ** (lam - 1.0)


def compute_c_dprime(b, lam, s_grid=None, n_x=N_X):
    if s_grid is None:
        s_grid = default_s_grid(b)
    table = c_dprime_table(b, lam, s_grid, n_x)
    return _refined_sup(b, lam, "in", lambda s: s ** (lam - 1.0), table, s_grid, n_x)


def c_tprime_table(b, lam, s_grid, n_x=N_X):
    if lam <= 1.0:
        raise DomainError("c_tprime needs lambda > 1")
    s_grid = np.asarray(s_grid, dtype=float)
    rows = [ball_profiles(b, s0, lam, s_grid)[2] for s0 in _x_grid(n_x)]
    return np.asarray(rows) * s_grid[None, :] ** (lam - 1.0)


def compute_c_tprime(b, lam, s_grid=None, n_x=N_X):
    if s_grid is None:
        s_grid = np.logspace(-6, -2, 24)
    table = c_tprime_table(b, lam, s_grid, n_x)
    return _refined_sup(b, lam, "out", lambda s: s ** (lam - 1.0), table, s_grid, n_x)


def c_iv_table(b, s_grid, n_x=N_X):
    """Ratio |ln s|^-1 int_{|x'-y| >= s} |x'-y|^-1 dsigma per (x', s)."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 0) or np.any(s_grid >= math.exp(-1.0)):
        raise DomainError("c_iv needs every s in (0, 1/e)")
    rows = [ball_profiles(b, s0, 1.0, s_grid)[2] for s0 in _x_grid(n_x)]
    return np.asarray(rows) / np.abs(np.log(s_grid))[None, :]


def default_c_iv_grid(n_s=32):
    return np.logspace(-6.0, math.log10(0.99 * math.exp(-1.0)), n_s)


def compute_c_iv(b, s_grid=None, n_x=N_X):
    if s_grid is None:
        s_grid = default_c_iv_grid()
    table = c_iv_table(b, s_grid, n_x)
    return _refined_sup(b, 1.0, "out", lambda s: 1.0 / abs(math.log(s)), table, s_grid, n_x)


@dataclass
class GeometricConstants:
    c_prime: dict
    c_dprime: dict
    c_tprime: dict
    c_iv: float
    n_x: int
    n_s: int
    stability: dict = field(default_factory=dict)


def compute_all(b, lam_prime=(0.0, 0.5), lam_dprime=(-1.0, 0.0, 0.5), lam_tprime=(2.0,), n_x=N_X, n_s=24):
    sg_d = default_s_grid(b, n_s)
    sg_t = np.logspace(-6, -2, n_s)
    sg_iv = default_c_iv_grid(n_s)
    return GeometricConstants(
        {lam: compute_c_prime(b, lam, n_x) for lam in lam_prime},
        {lam: compute_c_dprime(b, lam, sg_d, n_x) for lam in lam_dprime},
        {lam: compute_c_tprime(b, lam, sg_t, n_x) for lam in lam_tprime},
        compute_c_iv(b, sg_iv, n_x),
        n_x,
        n_s,
    )


def stability(b, n_x=N_X, n_s=24, **kw):
    """Constants at (n_x, n_s) and (2 n_x, 2 n_s) with relative changes."""
    g1 = compute_all(b, n_x=n_x, n_s=n_s, **kw)
    g2 = compute_all(b, n_x=2 * n_x, n_s=2 * n_s, **kw)
    rel = {}
    for name in ("c_prime", "c_dprime", "c_tprime"):
        for lam, v in getattr(g1, name).items():
            v2 = getattr(g2, name)[lam]
            rel[f"{name}({lam:g})"] = abs(v2 - v) / max(abs(v), 1e-300)
    rel["c_iv"] = abs(g2.c_iv - g1.c_iv) / g1.c_iv
    g1.stability = rel
    return g1, g2
