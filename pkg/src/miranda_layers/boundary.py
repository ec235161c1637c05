"""Closed C^{1,1} planar curves: parametrizations, grids, closest points and
point-in-domain tests.

A boundary is a 2*pi-periodic map ``param(s)`` with derivative ``dparam(s)``;
both accept an array of parameters and return an ``(n, 2)`` array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import ConfigError, DomainError, GeometryError

TWO_PI = 2.0 * math.pi


@dataclass(eq=False)
class Boundary:
    param: Callable[[np.ndarray], np.ndarray]
    dparam: Callable[[np.ndarray], np.ndarray]
    lip_dparam: float
    name: str = "boundary"
    d2param: Optional[Callable[[np.ndarray], np.ndarray]] = None
    interior_point: Optional[np.ndarray] = None
    orientation: int = field(default=0)

    def __post_init__(self):
        if self.orientation == 0:
            s = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
            p = self.param(s)
            dp = self.dparam(s)
            area2 = np.sum(p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0])
            if area2 == 0.0:
                raise GeometryError("boundary encloses zero area")
            self.orientation = 1 if area2 > 0 else -1

    def points(self, s):
        return self.param(np.atleast_1d(np.asarray(s, dtype=float)))

    def speed(self, s):
        d = self.dparam(np.atleast_1d(np.asarray(s, dtype=float)))
        return np.hypot(d[:, 0], d[:, 1])

    def tangents(self, s):
        d = self.dparam(np.atleast_1d(np.asarray(s, dtype=float)))
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    def normals(self, s):
        """Outward unit normals."""
        t = self.tangents(s)
        return self.orientation * np.column_stack([t[:, 1], -t[:, 0]])


# ---------------------------------------------------------------------------
# built-in shapes


def _lip_from_second_derivative(d2param, n=8192):
    s = np.linspace(0.0, TWO_PI, n, endpoint=False)
    d2 = d2param(s)
    # small safety factor: the grid max underestimates the true sup
    return float(np.max(np.hypot(d2[:, 0], d2[:, 1]))) * (1.0 + 1e-3)


def circle(R=1.0, center=(0.0, 0.0)):
    R = float(R)
    if R <= 0:
        raise ConfigError("circle radius must be positive")
    c = np.asarray(center, dtype=float)

    def param(s):
        return np.column_stack([c[0] + R * np.cos(s), c[1] + R * np.sin(s)])

    def dparam(s):
        return np.column_stack([-R * np.sin(s), R * np.cos(s)])

    def d2param(s):
        return np.column_stack([-R * np.cos(s), -R * np.sin(s)])

    return Boundary(param, dparam, R, f"circle(R={R:g})", d2param, c.copy())


def ellipse(a=1.0, b=0.5):
    a, b = float(a), float(b)
    if a <= 0 or b <= 0:
        raise ConfigError("ellipse semi-axes must be positive")

    def param(s):
        return np.column_stack([a * np.cos(s), b * np.sin(s)])

    def dparam(s):
        return np.column_stack([-a * np.sin(s), b * np.cos(s)])

    def d2param(s):
        return np.column_stack([-a * np.cos(s), -b * np.sin(s)])

    return Boundary(param, dparam, max(a, b), f"ellipse(a={a:g},b={b:g})", d2param, np.zeros(2))


def star(eps=0.1, m=3, R=1.0):
    """r(phi) = R (1 + eps cos(m phi)); requires eps * m**2 < 1."""
    eps, m, R = float(eps), int(m), float(R)
    if not (0 <= eps and eps * m * m < 1 and R > 0):
        raise ConfigError("star shape needs eps >= 0, eps*m^2 < 1 and R > 0")

    def radial(s):
        r = R * (1 + eps * np.cos(m * s))
        r1 = -R * eps * m * np.sin(m * s)
        r2 = -R * eps * m * m * np.cos(m * s)
        return r, r1, r2

    def param(s):
        r, _, _ = radial(s)
        return np.column_stack([r * np.cos(s), r * np.sin(s)])

    def dparam(s):
        r, r1, _ = radial(s)
        c, sn = np.cos(s), np.sin(s)
        return np.column_stack([r1 * c - r * sn, r1 * sn + r * c])

    def d2param(s):
        r, r1, r2 = radial(s)
        c, sn = np.cos(s), np.sin(s)
        return np.column_stack([(r2 - r) * c - 2 * r1 * sn, (r2 - r) * sn + 2 * r1 * c])

    lip = _lip_from_second_derivative(d2param)
    return Boundary(param, dparam, lip, f"star(eps={eps:g},m={m},R={R:g})", d2param, np.zeros(2))


def fourier_curve(x_cos, x_sin=(), y_cos=(), y_sin=()):
    """x(s) = sum_k x_cos[k] cos(ks) + x_sin[k] sin(ks), likewise y (k from 0)."""
    n = max(len(x_cos), len(x_sin), len(y_cos), len(y_sin))
    if n < 2:
        raise ConfigError("fourier curve needs at least one nonconstant mode")
    coef = np.zeros((4, n))
    for row, seq in enumerate((x_cos, x_sin, y_cos, y_sin)):
        coef[row, : len(seq)] = np.asarray(seq, dtype=float)
    kk = np.arange(n, dtype=float)

    def _eval(s, order):
        s = np.asarray(s, dtype=float)
        ks = np.outer(s, kk)
        c, sn = np.cos(ks), np.sin(ks)
        f = kk**order
        if order % 4 == 0:
            bc, bs = c, sn
        elif order % 4 == 1:
            bc, bs = -sn, c
        else:
            bc, bs = -c, -sn
        x = (bc * (coef[0] * f)).sum(axis=1) + (bs * (coef[1] * f)).sum(axis=1)
        y = (bc * (coef[2] * f)).sum(axis=1) + (bs * (coef[3] * f)).sum(axis=1)
        return np.column_stack([x, y])

    def param(s):
        return _eval(s, 0)

    def dparam(s):
        return _eval(s, 1)

    def d2param(s):
        return _eval(s, 2)

    lip = _lip_from_second_derivative(d2param)
    return Boundary(param, dparam, lip, "fourier", d2param, None)


def boundary_from_config(cfg):
    """Build a boundary from ``{"shape": name, "params": {...}}``."""
    if not isinstance(cfg, dict) or "shape" not in cfg:
        raise ConfigError('boundary config must be an object with a "shape" key')
    shape = cfg["shape"]
    params = dict(cfg.get("params", {}))
    try:
        if shape == "circle":
            b = circle(params.pop("R", 1.0), params.pop("center", (0.0, 0.0)))
        elif shape == "ellipse":
            b = ellipse(params.pop("a", 1.0), params.pop("b", 0.5))
        elif shape == "star":
            b = star(params.pop("eps", 0.1), params.pop("m", 3), params.pop("R", 1.0))
        elif shape == "fourier":
            b = fourier_curve(
                params.pop("x_cos", ()),
                params.pop("x_sin", ()),
                params.pop("y_cos", ()),
                params.pop("y_sin", ()),
            )
        else:
            raise ConfigError(f"unknown boundary shape {shape!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad parameters for shape {shape!r}: {exc}") from exc
    if params:
        raise ConfigError(f"unknown parameters for shape {shape!r}: {sorted(params)}")
    validate_boundary(b)
    return b


def validate_boundary(b, n=2048):
    """Check regularity, injectivity and closedness on a grid; raise GeometryError."""
    s = np.linspace(0.0, TWO_PI, n, endpoint=False)
    if np.min(b.speed(s)) <= 1e-12:
        raise GeometryError(f"{b.name}: parametrization is not regular")
    gap = np.linalg.norm(b.points([0.0])[0] - b.points([TWO_PI])[0])
    if gap > 1e-12:
        raise GeometryError(f"{b.name}: curve is not closed (gap {gap:.3g})")
    p = b.param(s)
    idx = np.arange(n)
    worst = np.inf
    for i in range(0, n, 256):
        blk = slice(i, i + 256)
        d = np.linalg.norm(p[blk, None, :] - p[None, :, :], axis=2)
        k = np.abs(idx[blk, None] - idx[None, :])
        k = np.minimum(k, n - k)
        ratio = d / np.where(k == 0, 1, k * (TWO_PI / n))
        ratio[k == 0] = np.inf
        worst = min(worst, float(ratio.min()))
    if worst <= 1e-9:
        raise GeometryError(f"{b.name}: parametrization is not injective")
    return worst


# ---------------------------------------------------------------------------
# grids


@dataclass
class BoundaryGrid:
    nodes: np.ndarray
    params: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    speed: np.ndarray

    @property
    def perimeter(self):
        return float(self.weights.sum())


def build_grid(b, N):
    """Equispaced trapezoid grid with arc weights and outward normals."""
    N = int(N)
    if N < 16 or N & (N - 1):
        raise DomainError("grid size must be a power of two >= 16")
    s = np.arange(N) * (TWO_PI / N)
    speed = b.speed(s)
    if np.min(speed) < 1e-12:
        raise GeometryError(f"{b.name}: degenerate derivative on the grid")
    return BoundaryGrid(b.param(s), s, speed * (TWO_PI / N), b.normals(s), speed)


def perimeter(b, N=4096):
    return build_grid(b, N).perimeter


def diameter(b, N=2048):
    p = b.param(np.arange(N) * (TWO_PI / N))
    best = 0.0
    for i in range(0, N, 512):
        d = np.linalg.norm(p[i : i + 512, None, :] - p[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


# ---------------------------------------------------------------------------
# closest points


def _wrap(s):
    return np.mod(s, TWO_PI)


def closest_point_batch(b, xs, n_scan=4096):
    """Global closest boundary parameters for an ``(m, 2)`` array of points.

    Coarse scan followed by bisection on the stationarity condition
    (p(s) - x) . p'(s) = 0 inside the bracketing grid cell.  Returns
    ``(s_star, dist)``; exact ties keep the smallest grid parameter.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if not np.all(np.isfinite(xs)):
        raise DomainError("points must be finite")
    h = TWO_PI / n_scan
    sg = np.arange(n_scan) * h
    P = b.param(sg)
    m = xs.shape[0]
    idx = np.empty(m, dtype=np.int64)
    dgrid = np.empty(m)
    chunk = max(1, (1 << 22) // n_scan)
    for i in range(0, m, chunk):
        d2 = ((xs[i : i + chunk, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        dmin = d2.min(axis=1, keepdims=True)
        # near-ties (within rounding) go to the smallest parameter
        k = np.argmax(d2 <= dmin * (1.0 + 1e-12), axis=1)
        idx[i : i + chunk] = k
        dgrid[i : i + chunk] = np.sqrt(d2[np.arange(k.size), k])
    s0 = sg[idx]

    def g(s):
        return ((b.param(s) - xs) * b.dparam(s)).sum(axis=1)

    lo, hi = s0 - h, s0 + h
    glo, ghi = g(lo), g(hi)
    scale = np.maximum(dgrid, 1.0) * b.speed(s0)
    flat = (np.abs(glo) <= 1e-14 * scale) & (np.abs(ghi) <= 1e-14 * scale)
    # grid point already stationary to rounding
    flat |= np.abs(g(s0)) <= 1e-15 * scale
    ok = (glo <= 0) & (ghi >= 0) & ~flat
    a, c = lo.copy(), hi.copy()
    for _ in range(64):
        mid = 0.5 * (a + c)
        gm = g(mid)
        left = gm > 0
        c = np.where(left, mid, c)
        a = np.where(left, a, mid)
    s_ref = 0.5 * (a + c)
    d_ref = np.linalg.norm(b.param(s_ref) - xs, axis=1)
    use = ok & (d_ref <= dgrid)
    s_star = np.where(use, s_ref, s0)
    dist = np.where(use, d_ref, dgrid)
    return _wrap(s_star), dist


def closest_point(b, x, n_scan=4096):
    s, d = closest_point_batch(b, np.asarray(x, dtype=float).reshape(1, 2), n_scan)
    return float(s[0]), float(d[0])


# ---------------------------------------------------------------------------
# point-in-domain by winding number


@njit(parallel=True)
def _winding_nb(px, py, vx, vy):
    m = px.shape[0]
    n = vx.shape[0] - 1
    out = np.zeros(m, dtype=np.int64)
    for i in prange(m):
        x = px[i]
        y = py[i]
        wn = 0
        for e in range(n):
            x0 = vx[e]
            y0 = vy[e]
            x1 = vx[e + 1]
            y1 = vy[e + 1]
            cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
            if y0 <= y:
                if y1 > y and cross > 0:
                    wn += 1
            elif y1 <= y and cross < 0:
                wn -= 1
        out[i] = wn
    return out


def _winding_np(px, py, vx, vy, chunk=256):
    out = np.zeros(px.shape[0], dtype=np.int64)
    x0, y0, x1, y1 = vx[:-1], vy[:-1], vx[1:], vy[1:]
    for i in range(0, px.shape[0], chunk):
        x = px[i : i + chunk, None]
        y = py[i : i + chunk, None]
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        up = (y0 <= y) & (y1 > y) & (cross > 0)
        down = (y0 > y) & (y1 <= y) & (cross < 0)
        out[i : i + chunk] = up.sum(axis=1) - down.sum(axis=1)
    return out


def winding_numbers(vertices, points):
    """Winding number of a closed polygon (first vertex repeated or not) about points."""
    v = np.asarray(vertices, dtype=float)
    if not np.array_equal(v[0], v[-1]):
        v = np.vstack([v, v[:1]])
    p = np.atleast_2d(np.asarray(points, dtype=float))
    args = (
        np.ascontiguousarray(p[:, 0]),
        np.ascontiguousarray(p[:, 1]),
        np.ascontiguousarray(v[:, 0]),
        np.ascontiguousarray(v[:, 1]),
    )
    return _winding_nb(*args) if _accel.USE_NUMBA else _winding_np(*args)


def polygon(b, n=1 << 14):
    return b.param(np.arange(n) * (TWO_PI / n))


def inside(b, points, n=1 << 14):
    """True where points lie in the bounded domain enclosed by the curve."""
    return winding_numbers(polygon(b, n), points) != 0


# ---------------------------------------------------------------------------
# chord-level crossings


def _offset_samples(n_uniform=4096, n_dyadic=60):
    dy = math.pi * 2.0 ** -np.arange(1, n_dyadic + 1)
    u = np.concatenate([np.linspace(-math.pi, math.pi, n_uniform + 1), dy, -dy])
    u = np.unique(u)
    return u[u != 0.0]


_OFFSETS = _offset_samples()


def chord_crossings(b, s0, radii, iters=64):
    """Parameter offsets u in [-pi, pi] where |param(s0+u) - param(s0)| = r.

    Returns a list (one entry per radius) of sorted offset arrays.  Sign
    changes are located on a fixed grid (uniform plus dyadic toward 0) and
    refined by vectorized bisection.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    x0 = b.points([s0])[0]
    u = _OFFSETS
    c = np.linalg.norm(b.param(s0 + u) - x0, axis=1)
    neg = u < 0
    lo_list, hi_list, rid = [], [], []
    for side in (neg, ~neg):
        us, cs = u[side], c[side]
        if side is neg:
            us, cs = us[::-1], cs[::-1]  # walk outward from 0
        for j, r in enumerate(radii):
            f = cs - r
            sgn = np.nonzero(np.signbit(f[:-1]) != np.signbit(f[1:]))[0]
            start = 0.0 - r  # chord at u = 0 is 0
            extra = []
            if f.size and np.signbit(start) != np.signbit(f[0]):
                extra.append((0.0, us[0]))
            for a_, c_ in extra:
                lo_list.append(a_)
                hi_list.append(c_)
                rid.append(j)
            lo_list.extend(us[sgn])
            hi_list.extend(us[sgn + 1])
            rid.extend([j] * sgn.size)
    out = [np.empty(0) for _ in radii]
    if not rid:
        return out
    lo = np.asarray(lo_list, dtype=float)
    hi = np.asarray(hi_list, dtype=float)
    rid = np.asarray(rid)
    r = radii[rid]
    flo = np.linalg.norm(b.param(s0 + lo) - x0, axis=1) - r
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = np.linalg.norm(b.param(s0 + mid) - x0, axis=1) - r
        same = np.signbit(fm) == np.signbit(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    root = 0.5 * (lo + hi)
    for j in range(radii.size):
        out[j] = np.sort(root[rid == j])
    return out
