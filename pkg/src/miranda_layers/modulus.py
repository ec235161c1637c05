"""Moduli of continuity and discrete Hölder seminorms.

Two families are supported: the logarithmic moduli

    omega_theta(r) = r**theta * |ln r|   for 0 < r <= r_theta = exp(-1/theta),

frozen at their value for r > r_theta (and 0 at r = 0), and plain powers
r**alpha.  ``omega_1`` is the limiting modulus between every C^{0,alpha},
alpha < 1, and the Lipschitz class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _accel
from ._accel import njit
from .errors import DomainError

KIND_LOG = 0
KIND_POWER = 1


@dataclass(frozen=True)
class Modulus:
    """The concave modulus omega_theta with breakpoint r_theta."""

    theta: float = 1.0
    r_theta: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise DomainError(f"theta must lie in (0, 1], got {self.theta}")
        object.__setattr__(self, "r_theta", math.exp(-1.0 / self.theta))

    kind = KIND_LOG

    @property
    def param(self):
        return float(self.theta)

    def __call__(self, r):
        return eval_modulus(self, r)


@dataclass(frozen=True)
class PowerModulus:
    """r -> r**alpha; alpha = 1 gives the Lipschitz seminorm."""

    alpha: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")

    kind = KIND_POWER

    @property
    def param(self):
        return float(self.alpha)

    def __call__(self, r):
        return eval_modulus(self, r)


OMEGA_1 = Modulus(1.0)


@njit
def _omega_scalar(kind, param, r):
    if r <= 0.0:
        return 0.0
    if kind == KIND_POWER:
        if param == 1.0:
            return r
        return r**param
    rt = math.exp(-1.0 / param)
    if r > rt:
        r = rt
    if param == 1.0:
        return r * (-math.log(r))
    return r**param * (-math.log(r))


@njit
def _omega_array_nb(kind, param, r):
    out = np.empty(r.shape[0])
    for i in range(r.shape[0]):
        out[i] = _omega_scalar(kind, param, r[i])
    return out


def _omega_array_np(kind, param, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0.0
    if kind == KIND_POWER:
        out[pos] = r[pos] if param == 1.0 else np.power(r[pos], param)
        return out
    rt = math.exp(-1.0 / param)
    rr = np.minimum(r[pos], rt)
    if param == 1.0:
        out[pos] = rr * (-np.log(rr))
    else:
        out[pos] = np.power(rr, param) * (-np.log(rr))
    return out


def eval_modulus(m, r):
    """Evaluate a modulus at ``r >= 0`` (scalar or array)."""
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("modulus argument must be finite and nonnegative")
    flat = np.ascontiguousarray(arr.reshape(-1))
    if _accel.USE_NUMBA:
        out = _omega_array_nb(m.kind, m.param, flat)
    else:
        out = _omega_array_np(m.kind, m.param, flat)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def check_subholder(t1, t2):
    """omega_1(|t2 - t1|) - |omega_1(t2) - omega_1(t1)|; nonnegative up to rounding."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    w = eval_modulus(OMEGA_1, np.abs(t2 - t1))
    return w - np.abs(eval_modulus(OMEGA_1, t2) - eval_modulus(OMEGA_1, t1))


def om_certificate(m, a_grid=None, t_grid=None):
    """Grid value of sup omega(a t) / (a omega(t)) over a >= 1, t > 0.

    Only a grid certificate: finiteness over the continuum is not proved here.
    """
    if a_grid is None:
        a_grid = np.logspace(0.0, 8.0, 161)
    if t_grid is None:
        t_grid = np.logspace(-12.0, 4.0, 321)
    a = np.asarray(a_grid, dtype=float)[:, None]
    t = np.asarray(t_grid, dtype=float)[None, :]
    if np.any(a < 1.0) or np.any(t <= 0.0):
        raise DomainError("need a >= 1 and t > 0")
    num = eval_modulus(m, a * t)
    den = a * eval_modulus(m, np.broadcast_to(t, num.shape))
    return float(np.max(num / den))


# ---------------------------------------------------------------------------
# discrete seminorms


@dataclass
class SampledFunction:
    points: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = np.column_stack([pts, np.zeros_like(pts)])
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if pts.shape[0] != vals.shape[0]:
            raise DomainError("points and values must have equal length")
        if not np.all(np.isfinite(pts)):
            raise DomainError("all points must be finite")
        self.points = np.ascontiguousarray(pts)
        self.values = np.ascontiguousarray(vals)

    def __len__(self):
        return self.values.shape[0]


@dataclass
class SeminormEstimate:
    value: float
    argmax_pair: tuple
    pair_count: int
    exact: bool = True
    overflow: bool = False

    @property
    def lower_bound_only(self):
        return not self.exact


@njit
def _pairs_all_nb(pts, vals, kind, param, dmin):
    n = pts.shape[0]
    best = 0.0
    bi = -1
    bj = -1
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < dmin:
                continue
            df = abs(vals[i] - vals[j])
            if d == 0.0:
                if df != 0.0:
                    return math.inf, i, j, True
                continue
            q = df / _omega_scalar(kind, param, d)
            if q > best or bi < 0:
                best = q
                bi = i
                bj = j
    return best, bi, bj, False


@njit
def _pairs_listed_nb(pts, vals, kind, param, ii, jj, dmin):
    best = 0.0
    bi = -1
    bj = -1
    for p in range(ii.shape[0]):
        i = ii[p]
        j = jj[p]
        dx = pts[i, 0] - pts[j, 0]
        dy = pts[i, 1] - pts[j, 1]
        d = math.sqrt(dx * dx + dy * dy)
        if d < dmin:
            continue
        df = abs(vals[i] - vals[j])
        if d == 0.0:
            if df != 0.0:
                return math.inf, i, j, True
            continue
        q = df / _omega_scalar(kind, param, d)
        if q > best or bi < 0:
            best = q
            bi = i
            bj = j
    return best, bi, bj, False


def _reduce_chunk(pts, vals, kind, param, ii, jj, dmin, state):
    dx = pts[ii, 0] - pts[jj, 0]
    dy = pts[ii, 1] - pts[jj, 1]
    d = np.sqrt(dx * dx + dy * dy)
    df = np.abs(vals[ii] - vals[jj])
    keep = d >= dmin
    zero = keep & (d == 0.0)
    bad = zero & (df != 0.0)
    if np.any(bad):
        k = int(np.argmax(bad))
        return (math.inf, int(ii[k]), int(jj[k]), True), True
    keep &= d != 0.0
    if not np.any(keep):
        return state, False
    q = np.full(d.shape, -1.0)
    q[keep] = df[keep] / _omega_array_np(kind, param, d[keep])
    k = int(np.argmax(q))
    if q[k] > state[0] or state[1] < 0:
        state = (float(q[k]), int(ii[k]), int(jj[k]), False)
    return state, False


def _pairs_all_np(pts, vals, kind, param, dmin):
    n = pts.shape[0]
    state = (0.0, -1, -1, False)
    for i in range(n - 1):
        jj = np.arange(i + 1, n)
        ii = np.full(jj.shape, i)
        state, stop = _reduce_chunk(pts, vals, kind, param, ii, jj, dmin, state)
        if stop:
            return state
    return state


def _pairs_listed_np(pts, vals, kind, param, ii, jj, dmin, chunk=1 << 20):
    state = (0.0, -1, -1, False)
    for start in range(0, ii.shape[0], chunk):
        sl = slice(start, start + chunk)
        state, stop = _reduce_chunk(pts, vals, kind, param, ii[sl], jj[sl], dmin, state)
        if stop:
            return state
    return state


def subsample_pairs(points, max_pairs, k_neighbors=8, seed=0):
    """All k-nearest-neighbour pairs plus seeded uniform pairs, sorted and unique."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    k = min(k_neighbors, n - 1)
    _, nbr = cKDTree(pts).query(pts, k=k + 1)
    ii = np.repeat(np.arange(n), k)
    jj = nbr[:, 1:].reshape(-1)
    n_uniform = max(int(max_pairs) - ii.shape[0], 0)
    rng = np.random.default_rng(seed)
    ui = rng.integers(0, n, size=n_uniform)
    uj = rng.integers(0, n, size=n_uniform)
    ii = np.concatenate([ii, ui])
    jj = np.concatenate([jj, uj])
    lo = np.minimum(ii, jj)
    hi = np.maximum(ii, jj)
    keep = lo != hi
    packed = np.unique(lo[keep].astype(np.int64) * n + hi[keep])
    return packed // n, packed % n


def seminorm_estimate(f, m, max_pairs=200_000, seed=0, k_neighbors=8, min_separation=0.0):
    """Discrete omega-Hölder seminorm max |f(p)-f(q)| / omega(|p-q|).

    Exact over all pairs when their number fits in ``max_pairs``; otherwise a
    deterministic subsample is used and the result is a lower bound.
    """
    if not isinstance(f, SampledFunction):
        raise TypeError("f must be a SampledFunction")
    n = len(f)
    if n < 2:
        raise DomainError("need at least two points")
    if max_pairs < 1:
        raise DomainError("max_pairs must be >= 1")
    total = n * (n - 1) // 2
    dmin = float(min_separation)
    if total <= max_pairs:
        if _accel.USE_NUMBA:
            res = _pairs_all_nb(f.points, f.values, m.kind, m.param, dmin)
        else:
            res = _pairs_all_np(f.points, f.values, m.kind, m.param, dmin)
        exact, count = True, total
    else:
        ii, jj = subsample_pairs(f.points, max_pairs, k_neighbors, seed)
        if _accel.USE_NUMBA:
            res = _pairs_listed_nb(f.points, f.values, m.kind, m.param, ii, jj, dmin)
        else:
            res = _pairs_listed_np(f.points, f.values, m.kind, m.param, ii, jj, dmin)
        exact, count = False, int(ii.shape[0])
    value, bi, bj, overflow = res
    return SeminormEstimate(float(value), (int(bi), int(bj)), count, exact, bool(overflow))


def check_large_separation_bound(f, m, a, max_pairs=2_000_000, seed=0):
    """(2/omega(a)) sup|f| minus the discrete sup over pairs with |p-q| >= a."""
    if not a > 0:
        raise DomainError("a must be positive")
    est = seminorm_estimate(f, m, max_pairs=max_pairs, seed=seed, min_separation=a)
    bound = 2.0 / eval_modulus(m, a) * float(np.max(np.abs(f.values)))
    return bound - est.value
