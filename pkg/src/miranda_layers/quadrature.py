"""Composite Gauss-Legendre integration over the boundary parameter with
dyadic grading toward the nearly singular point.

The hot part is :func:`kernel_sums`, which for many targets x_t sums

    sum_i  k(x_t - y_i) w_i rho_i[d]      and     sum_i grad k(x_t - y_i) w_i rho_i[d]

over per-target node ranges (CSR layout).  It exists as a parallel numba
kernel and as a chunked numpy reduction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .boundary import TWO_PI
from .errors import QuadratureConvergenceError
from .kernels import trace_arrays, trace_at

N_GAUSS = 16
GL_X, GL_W = np.polynomial.legendre.leggauss(N_GAUSS)
EPS = np.finfo(float).eps
# rounding allowance, in units of eps times the absolute integral
ROUNDOFF_FACTOR = 128.0


def graded_breaks(s_center, level, n_base=32):
    """Panel breakpoints over one period starting at s_center - H/2.

    The panel of width H = 2 pi / n_base centred on ``s_center`` is replaced
    by a central panel of width H / 2**level flanked on each side by panels
    of widths H/2**(level+1), ..., H/4, each as long as its distance to the
    centre.
    """
    H = TWO_PI / n_base
    side = 0.5 * H * 2.0 ** np.arange(-level, 1)
    right = s_center + side
    left = s_center - side[::-1]
    outer = s_center + 0.5 * H + H * np.arange(1, n_base)
    return np.concatenate([left, right, outer])


def insert_breaks(breaks, extra, rel=1e-13):
    """Insert extra (periodic) breakpoints into a one-period breakpoint array."""
    if extra is None or len(extra) == 0:
        return breaks
    start = breaks[0]
    e = start + np.mod(np.asarray(extra, dtype=float) - start, TWO_PI)
    allb = np.concatenate([breaks, e])
    allb.sort()
    keep = np.ones(allb.size, dtype=bool)
    keep[1:] = np.diff(allb) > rel * TWO_PI
    out = allb[keep]
    # the period end must stay exact
    if out[-1] != breaks[-1]:
        out = out[out < breaks[-1] - rel * TWO_PI]
        out = np.append(out, breaks[-1])
    return out


def panel_nodes(breaks):
    """Gauss nodes and parameter weights for consecutive breakpoints."""
    a = breaks[:-1]
    half = 0.5 * (breaks[1:] - a)
    mid = a + half
    s = (mid[:, None] + half[:, None] * GL_X[None, :]).reshape(-1)
    w = (half[:, None] * GL_W[None, :]).reshape(-1)
    return s, w


def start_level(b, s_star, dist, n_base=32):
    """Smallest level whose central panel has arc length <= dist."""
    H = TWO_PI / n_base
    probe = s_star[:, None] + H * np.linspace(-0.5, 0.5, 9)[None, :]
    vmax = b.speed(probe.reshape(-1)).reshape(probe.shape).max(axis=1)
    ratio = H * vmax / np.maximum(dist, 1e-300)
    lvl = np.ceil(np.log2(np.maximum(ratio, 1.0))).astype(int)
    return np.maximum(lvl, 0)


# ---------------------------------------------------------------------------
# hot kernel


@njit(parallel=True)
def _kernel_sums_nb(tx, ty, offsets, yx, yy, wq, dens, cc, sc, h, out, absout, condout):
    T = tx.shape[0]
    D = dens.shape[1]
    for t in prange(T):
        x = tx[t]
        y = ty[t]
        for i in range(offsets[t], offsets[t + 1]):
            zx = x - yx[i]
            zy = y - yy[i]
            r = math.sqrt(zx * zx + zy * zy)
            ux = zx / r
            uy = zy / r
            f, df = trace_at(cc, sc, ux, uy)
            if h == -1.0:
                rh = 1.0 / r
            else:
                rh = r**h
            kv = f * rh
            sc2 = rh / r
            gx = (h * f * ux - df * uy) * sc2
            gy = (h * f * uy + df * ux) * sc2
            amp = (abs(x) + abs(y) + abs(yx[i]) + abs(yy[i])) / r
            for d in range(D):
                wd = wq[i] * dens[i, d]
                out[t, d, 0] += kv * wd
                out[t, d, 1] += gx * wd
                out[t, d, 2] += gy * wd
                awd = abs(wd)
                a0 = abs(kv) * awd
                a1 = abs(gx) * awd
                a2 = abs(gy) * awd
                absout[t, d, 0] += a0
                absout[t, d, 1] += a1
                absout[t, d, 2] += a2
                condout[t, d, 0] += (a0 * amp) ** 2
                condout[t, d, 1] += (a1 * amp) ** 2
                condout[t, d, 2] += (a2 * amp) ** 2


def _kernel_sums_np(tx, ty, offsets, yx, yy, wq, dens, cc, sc, h, out, absout, condout, chunk_nodes=1 << 18):
    T = tx.shape[0]
    counts = np.diff(offsets)
    t0 = 0
    while t0 < T:
        t1 = t0 + 1
        while t1 < T and offsets[t1 + 1] - offsets[t0] <= chunk_nodes:
            t1 += 1
        lo, hi = offsets[t0], offsets[t1]
        tidx = np.repeat(np.arange(t0, t1), counts[t0:t1])
        zx = tx[tidx] - yx[lo:hi]
        zy = ty[tidx] - yy[lo:hi]
        r = np.sqrt(zx * zx + zy * zy)
        ux = zx / r
        uy = zy / r
        f, df = trace_arrays(cc, sc, ux, uy)
        rh = 1.0 / r if h == -1.0 else r**h
        kv = f * rh
        sc2 = rh / r
        g = np.stack([kv, (h * f * ux - df * uy) * sc2, (h * f * uy + df * ux) * sc2], axis=1)
        wd = wq[lo:hi, None] * dens[lo:hi]
        contrib = g[:, None, :] * wd[:, :, None]
        acontrib = np.abs(g)[:, None, :] * np.abs(wd)[:, :, None]
        amp = (np.abs(tx[tidx]) + np.abs(ty[tidx]) + np.abs(yx[lo:hi]) + np.abs(yy[lo:hi])) / r
        seg = offsets[t0:t1] - lo
        out[t0:t1] += np.add.reduceat(contrib, seg, axis=0)
        absout[t0:t1] += np.add.reduceat(acontrib, seg, axis=0)
        condout[t0:t1] += np.add.reduceat((acontrib * amp[:, None, None]) ** 2, seg, axis=0)
        t0 = t1


def kernel_sums(targets, offsets, ynodes, wq, dens, kernel, use_numba=None):
    """Per-target kernel and gradient sums.

    Returns ``(sums, abs_sums, cond)``, each of shape (T, D, 3).  ``cond`` is
    the root-sum-square of the per-node terms scaled by coordinate size over
    distance, a proxy for the rounding error of forming x - y near the
    singularity.
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    targets = np.ascontiguousarray(targets, dtype=float)
    dens = np.ascontiguousarray(dens, dtype=float)
    if dens.ndim == 1:
        dens = dens[:, None]
    T, D = targets.shape[0], dens.shape[1]
    out = np.zeros((T, D, 3))
    absout = np.zeros((T, D, 3))
    condout = np.zeros((T, D, 3))
    args = (
        np.ascontiguousarray(targets[:, 0]),
        np.ascontiguousarray(targets[:, 1]),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(ynodes[:, 0]),
        np.ascontiguousarray(ynodes[:, 1]),
        np.ascontiguousarray(wq, dtype=float),
        dens,
        kernel.cos_coeffs,
        kernel.sin_coeffs,
        float(kernel.degree),
        out,
        absout,
        condout,
    )
    if use_numba:
        _kernel_sums_nb(*args)
    else:
        _kernel_sums_np(*args)
    return out, absout, np.sqrt(condout)


# ---------------------------------------------------------------------------
# refinement driver


def rounding_floor(abs_sums, cond):
    """Attainable accuracy in double precision: summation error plus the
    amplified error of the differences x - y."""
    return ROUNDOFF_FACTOR * EPS * abs_sums + EPS * cond


@dataclass
class IntegrationResult:
    """Columns d of ``values[t, d]`` hold (integral, d/dx1, d/dx2)."""

    values: np.ndarray
    err_est: np.ndarray
    roundoff: np.ndarray
    levels: np.ndarray
    converged: np.ndarray


def _evaluate_level(b, kernel, targets, s_star, levels, columns_fn, extra, n_base, use_numba):
    s_parts, w_parts, offs = [], [], [0]
    for i in range(targets.shape[0]):
        br = graded_breaks(s_star[i], int(levels[i]), n_base)
        if extra is not None:
            br = insert_breaks(br, extra[i])
        s, w = panel_nodes(br)
        s_parts.append(s)
        w_parts.append(w)
        offs.append(offs[-1] + s.size)
    s = np.concatenate(s_parts)
    w = np.concatenate(w_parts)
    offsets = np.asarray(offs, dtype=np.int64)
    tidx = np.repeat(np.arange(targets.shape[0]), np.diff(offsets))
    y = b.param(s)
    dp = b.dparam(s)
    wq = w * np.hypot(dp[:, 0], dp[:, 1])
    dens = columns_fn(s, y, tidx)
    return kernel_sums(targets, offsets, y, wq, dens, kernel, use_numba)


def integrate(
    b,
    kernel,
    targets,
    s_star,
    dist,
    columns_fn,
    extra_breaks=None,
    tol=1e-12,
    n_base=32,
    max_level=24,
    use_numba=None,
    history=False,
):
    """Refine each target until its central panel is no longer than its
    distance to the boundary and two successive levels agree.

    Agreement means |V_L - V_{L-1}| <= max(tol |V_L|, R) for every column,
    where R is the rounding floor from :func:`rounding_floor`.  Targets that hit ``max_level`` are returned unconverged.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    T = targets.shape[0]
    s_star = np.asarray(s_star, dtype=float)
    dist = np.asarray(dist, dtype=float)
    l0 = start_level(b, s_star, dist, n_base)
    lev = np.minimum(np.maximum(l0 - 1, 0), max_level - 1)
    hist = [[] for _ in range(T)] if history else None

    def run(idx, levels):
        ex = None if extra_breaks is None else [extra_breaks[i] for i in idx]
        return _evaluate_level(
            b, kernel, targets[idx], s_star[idx], levels, columns_fn_sub(idx), ex, n_base, use_numba
        )

    def columns_fn_sub(idx):
        return lambda s, y, tidx: columns_fn(s, y, idx[tidx])

    all_idx = np.arange(T)
    prev, _, _ = run(all_idx, lev)
    if history:
        for i in range(T):
            hist[i].append((int(lev[i]), prev[i].copy()))
    lev = lev + 1
    cur, cur_abs, cur_cond = run(all_idx, lev)
    if history:
        for i in range(T):
            hist[i].append((int(lev[i]), cur[i].copy()))
    values = cur.copy()
    floor = rounding_floor(cur_abs, cur_cond)
    err = np.abs(cur - prev)
    converged = np.zeros(T, dtype=bool)
    active = all_idx

    while True:
        a_vals = values[active]
        a_err = err[active]
        ok = np.all(a_err <= np.maximum(tol * np.abs(a_vals), floor[active]), axis=(1, 2))
        ok &= lev[active] >= l0[active]
        converged[active[ok]] = True
        active = active[~ok]
        if active.size == 0:
            break
        stuck = lev[active] >= max_level
        active = active[~stuck]
        if active.size == 0:
            break
        lev[active] += 1
        new, new_abs, new_cond = run(active, lev[active])
        if history:
            for n_i, i in enumerate(active):
                hist[i].append((int(lev[i]), new[n_i].copy()))
        err[active] = np.abs(new - values[active])
        values[active] = new
        floor[active] = rounding_floor(new_abs, new_cond)

    res = IntegrationResult(values, err, floor, lev.copy(), converged)
    if history:
        res.history = hist
    return res


def require_converged(res, what="integral"):
    if not np.all(res.converged):
        bad = int(np.count_nonzero(~res.converged))
        raise QuadratureConvergenceError(
            f"{what}: {bad} target(s) reached the refinement cap before tolerance", best=res
        )
    return res
