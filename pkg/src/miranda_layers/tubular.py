"""Smoothed transversal unit field, its grid certificates, the collar map
Psi(s, t) = p(s) + t a(s), and coordinate cylinders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .boundary import TWO_PI, closest_point_batch, diameter, inside
from .errors import ConstructionError, DomainError, GeometryError

N_FIELD = 1024
WIDTH_MAX = 1.0
WIDTH_MIN = 1e-8
# fraction of theta the smoothing may use, the rest is kept as margin
SAFETY = 0.5


@dataclass(eq=False)
class TubularField:
    """Unit field a on the boundary, given by truncated Fourier series of the
    smoothed normal components, renormalized pointwise."""

    boundary: object
    theta_cert: float
    tau_cert: float
    t1_cert: float
    lip_a: float
    smoothing_width: float
    modes: np.ndarray
    coef_x: np.ndarray
    coef_y: np.ndarray
    injectivity_radius: float = math.inf
    margins: dict = field(default_factory=dict)

    def raw(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ph = np.exp(1j * np.outer(s, self.modes))
        vx = (ph @ self.coef_x).real
        vy = (ph @ self.coef_y).real
        return np.column_stack([vx, vy])

    def a_at(self, s):
        v = self.raw(s)
        return v / np.hypot(v[:, 0], v[:, 1])[:, None]

    def psi(self, s, t):
        """Collar map; raises DomainError outside |t| < t1."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), s.shape)
        if np.any(np.abs(t) >= self.t1_cert):
            raise DomainError(f"|t| must be below t1 = {self.t1_cert:.6g}")
        return self.boundary.param(s) + t[:, None] * self.a_at(s)

    def extension_at(self, x):
        """Collar extension a(x) := a(closest boundary parameter)."""
        s, _ = closest_point_batch(self.boundary, np.atleast_2d(x))
        return self.a_at(s)


def tubular_map(f, b, s, t):
    if f.boundary is not b:
        raise DomainError("field was built for a different boundary")
    out = f.psi(np.atleast_1d(s), np.atleast_1d(t))
    return out[0] if np.ndim(s) == 0 else out


def _smoothed_series(nu, width):
    n = nu.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    damp = np.exp(-0.5 * (width * k) ** 2)
    cx = np.fft.fft(nu[:, 0]) / n * damp
    cy = np.fft.fft(nu[:, 1]) / n * damp
    keep = (np.abs(cx) + np.abs(cy)) > 1e-18
    keep[0] = True
    return k[keep], cx[keep], cy[keep]


def _field_from_width(b, width, n=N_FIELD):
    s = np.arange(n) * (TWO_PI / n)
    modes, cx, cy = _smoothed_series(b.normals(s), width)
    return modes, cx, cy


def _eval_series(modes, cx, cy, s):
    ph = np.exp(1j * np.outer(s, modes))
    v = np.column_stack([(ph @ cx).real, (ph @ cy).real])
    return v / np.hypot(v[:, 0], v[:, 1])[:, None]


def _normal_deviation(b, modes, cx, cy, n):
    s = np.arange(n) * (TWO_PI / n)
    a = _eval_series(modes, cx, cy, s)
    nu = b.normals(s)
    return float(np.max(np.linalg.norm(a - nu, axis=1)))


def _pair_ratio(p, a, i0, i1):
    """|a_i . (p_j - p_i)| / |p_j - p_i| for rows i0:i1 against all j."""
    d = p[None, :, :] - p[i0:i1, None, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    dot = np.abs(d[..., 0] * a[i0:i1, None, 0] + d[..., 1] * a[i0:i1, None, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(dist > 0, dot / np.where(dist > 0, dist, 1.0), 0.0)
    return dist, ratio


def _first_violation_radius(b, f_modes, cx, cy, theta, n):
    """Smallest chord length at which |a(x).(y-x)| > theta |y-x| on the grid,
    refined by bisection in the parameter of y."""
    s = np.arange(n) * (TWO_PI / n)
    p = b.param(s)
    a = _eval_series(f_modes, cx, cy, s)
    best = math.inf
    for i0 in range(0, n, 128):
        i1 = min(n, i0 + 128)
        dist, ratio = _pair_ratio(p, a, i0, i1)
        viol = ratio > theta
        for r in range(i1 - i0):
            if not viol[r].any():
                continue
            i = i0 + r
            js = np.nonzero(viol[r])[0]
            j = js[np.argmin(dist[r, js])]
            # walk toward i in parameter until the ratio drops below theta
            step = 1 if ((j - i) % n) > n // 2 else -1
            jn = (j + step) % n
            if viol[r, jn] and jn != i:
                best = min(best, float(dist[r, j]))
                continue

            def g(u):
                q = b.param(np.array([u]))[0] - p[i]
                return abs(q @ a[i]) - theta * math.hypot(q[0], q[1])

            hi = s[j]
            if jn == i:
                # violated already at the neighbour: the root lies between s_i and s_j
                gap = (s[j] - s[i] + math.pi) % TWO_PI - math.pi
                hi = s[i] + gap
                lo = s[i] + 1e-3 * gap
                while g(lo) >= 0 and abs(lo - s[i]) > 1e-14:
                    lo = s[i] + 1e-3 * (lo - s[i])
            else:
                lo = s[jn]
                if step == 1 and hi > lo:
                    hi -= TWO_PI
                if step == -1 and hi < lo:
                    hi += TWO_PI
            u = brentq(g, lo, hi, xtol=1e-16) if g(lo) < 0 < g(hi) else lo
            q = b.param(np.array([u]))[0] - p[i]
            best = min(best, math.hypot(q[0], q[1]))
    return best


def condition_margins(b, f, n=4 * N_FIELD, tau=None):
    """Grid margins of the four field conditions (positive means satisfied).

    unit:       1e-12 - max ||a| - 1|
    deviation:  theta - sup |a - nu|
    alignment:  inf a.nu - (1 - theta^2 / 2)
    transversal: theta - max |a(x).(y-x)| / |x-y| over pairs with |x-y| < tau
    """
    tau = f.tau_cert if tau is None else tau
    s = np.arange(n) * (TWO_PI / n)
    v = f.raw(s)
    a = v / np.hypot(v[:, 0], v[:, 1])[:, None]
    nu = b.normals(s)
    p = b.param(s)
    unit = 1e-12 - float(np.max(np.abs(np.hypot(a[:, 0], a[:, 1]) - 1.0)))
    deviation = f.theta_cert - float(np.max(np.linalg.norm(a - nu, axis=1)))
    alignment = float(np.min(np.sum(a * nu, axis=1))) - (1.0 - 0.5 * f.theta_cert**2)
    worst = 0.0
    for i0 in range(0, n, 256):
        dist, ratio = _pair_ratio(p, a, i0, min(n, i0 + 256))
        near = (dist < tau) & (dist > 0)
        if near.any():
            worst = max(worst, float(ratio[near].max()))
    return {
        "unit": unit,
        "deviation": deviation,
        "alignment": alignment,
        "transversal": f.theta_cert - worst,
    }


def fiber_crossing_radius(b, f, n=512):
    """min over pairs of fibres of max(|t|, |u|) at their line intersection.

    Below this radius distinct fibres s -> p(s) + t a(s) cannot meet, which
    makes Psi injective on the sampled fibres.
    """
    s = np.arange(n) * (TWO_PI / n)
    p = b.param(s)
    a = f.a_at(s)
    best = math.inf
    for i0 in range(0, n, 128):
        i1 = min(n, i0 + 128)
        ax, ay = a[i0:i1, None, 0], a[i0:i1, None, 1]
        bx, by = a[None, :, 0], a[None, :, 1]
        dx = p[None, :, 0] - p[i0:i1, None, 0]
        dy = p[None, :, 1] - p[i0:i1, None, 1]
        # p_i + t a_i = p_j + u a_j
        det = -ax * by + ay * bx
        ok = np.abs(det) > 1e-14
        sd = np.where(ok, det, 1.0)
        t = (-dx * by + dy * bx) / sd
        u = (ax * dy - ay * dx) / sd
        r = np.where(ok, np.maximum(np.abs(t), np.abs(u)), np.inf)
        best = min(best, float(r.min()))
    return best


def boundary_field_lipschitz(b, f, n=8192):
    """Lipschitz constant of a along the boundary w.r.t. ambient distance."""
    s = np.arange(n) * (TWO_PI / n)
    p = b.param(s)
    a = f.a_at(s)
    best = 0.0
    for k in (1, 2, 4, 8, 16, 64, 256):
        da = np.linalg.norm(np.roll(a, -k, axis=0) - a, axis=1)
        dp = np.linalg.norm(np.roll(p, -k, axis=0) - p, axis=1)
        best = max(best, float(np.max(da / dp)))
    return best


def collar_lipschitz(b, f, t1, n=2048):
    """Lipschitz constant of the extension a(closest parameter) on the collar."""
    s = np.arange(n) * (TWO_PI / n)
    base = b.param(s)
    a0 = f.a_at(s)
    layers = []
    for t in (-0.999 * t1, 0.0, 0.999 * t1):
        q = base + t * a0
        sc, _ = closest_point_batch(b, q)
        layers.append((q, f.a_at(sc)))
    best = 0.0
    for q, av in layers:
        for k in (1, 4, 16):
            dq = np.linalg.norm(np.roll(q, -k, axis=0) - q, axis=1)
            da = np.linalg.norm(np.roll(av, -k, axis=0) - av, axis=1)
            best = max(best, float(np.max(da / dq)))
    for (q0, a0_), (q1, a1_) in zip(layers[:-1], layers[1:]):
        dq = np.linalg.norm(q1 - q0, axis=1)
        da = np.linalg.norm(a1_ - a0_, axis=1)
        best = max(best, float(np.max(da / dq)))
    return best


def t1_formula(theta, lip_a, inj_radius):
    return min(1.0 / (2.0 * math.e), math.sqrt(1.0 - theta) / (4.0 * (lip_a + 1.0)), 0.5 * inj_radius)


def build_tubular_field(b, theta, n=N_FIELD, width_max=WIDTH_MAX, bisect_steps=40):
    """Largest smoothing width keeping sup |a - nu| <= SAFETY * theta, then
    tau, the injectivity radius, lip_a and t1 from that field."""
    if not (0.0 < theta < 1.0):
        raise DomainError("theta must lie in (0, 1)")
    limit = SAFETY * theta
    n_check = 2 * n

    def dev(w):
        modes, cx, cy = _field_from_width(b, w, n)
        return _normal_deviation(b, modes, cx, cy, n_check)

    if dev(width_max) <= limit:
        width = width_max
    else:
        lo, hi = WIDTH_MIN, width_max
        if dev(lo) > limit:
            raise ConstructionError(
                f"no smoothing width satisfies the field conditions at theta={theta}; try a larger theta"
            )
        for _ in range(bisect_steps):
            mid = math.sqrt(lo * hi)
            if dev(mid) <= limit:
                lo = mid
            else:
                hi = mid
        width = lo
    modes, cx, cy = _field_from_width(b, width, n)
    tau = _first_violation_radius(b, modes, cx, cy, theta, n)
    if not math.isfinite(tau):
        tau = diameter(b)
    f = TubularField(b, theta, tau, 0.0, 0.0, width, modes, cx, cy)
    f.injectivity_radius = fiber_crossing_radius(b, f)
    lip_b = boundary_field_lipschitz(b, f)
    t1 = t1_formula(theta, lip_b, f.injectivity_radius)
    lip = max(lip_b, collar_lipschitz(b, f, t1))
    f.lip_a = lip
    f.t1_cert = t1_formula(theta, lip, f.injectivity_radius)
    f.margins = condition_margins(b, f, n=n)
    if min(f.margins.values()) <= 0.0:
        raise ConstructionError(f"field certificate failed at theta={theta}: {f.margins}")
    return f


# ---------------------------------------------------------------------------
# sampled checks


def injectivity_sampling(f, n=10_000, seed=0, threshold=1e-9):
    """Seeded (s, t) samples; returns the number of image collisions
    between distinct samples closer than ``threshold``."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, TWO_PI, n)
    t = rng.uniform(-1.0, 1.0, n) * f.t1_cert * (1.0 - 1e-12)
    q = f.psi(s, t)
    pairs = cKDTree(q).query_pairs(threshold, output_type="ndarray")
    if pairs.size == 0:
        return 0
    same = (s[pairs[:, 0]] == s[pairs[:, 1]]) & (t[pairs[:, 0]] == t[pairs[:, 1]])
    return int(np.count_nonzero(~same))


def side_agreement(f, n=10_000, seed=1, t_min=1e-6):
    """Fraction of seeded samples whose side of the boundary matches sign(t)."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, TWO_PI, n)
    mag = np.exp(rng.uniform(math.log(t_min), math.log(f.t1_cert), n)) * (1.0 - 1e-12)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    q = f.psi(s, sign * mag)
    ins = inside(f.boundary, q)
    agree = ins == (sign < 0)
    return int(np.count_nonzero(agree)), n


def lower_bound_slack(f, n=256, t_grid=None):
    """min of |x-y+t a(x)| - sqrt(1-theta) (|x-y|^2+t^2)^(1/2) over grid pairs
    with |x-y| < tau and t on a negative log grid."""
    b = f.boundary
    if t_grid is None:
        t_grid = -np.logspace(-8, math.log10(f.t1_cert * (1 - 1e-9)), 12)
    s = np.arange(n) * (TWO_PI / n)
    p = b.param(s)
    a = f.a_at(s)
    c = math.sqrt(1.0 - f.theta_cert)
    worst = math.inf
    d = p[:, None, :] - p[None, :, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    near = dist < f.tau_cert
    for t in t_grid:
        v = d + t * a[:, None, :]
        lhs = np.hypot(v[..., 0], v[..., 1])
        rhs = c * np.sqrt(dist**2 + t * t)
        worst = min(worst, float((lhs - rhs)[near].min()))
    return worst


def vector_inequality_slack(v, w, theta):
    """|v+w|^2 - (1-theta)(|v|^2+|w|^2) - theta(|v|-|w|)^2, row-wise."""
    v = np.atleast_2d(v)
    w = np.atleast_2d(w)
    nv = np.linalg.norm(v, axis=1)
    nw = np.linalg.norm(w, axis=1)
    lhs = np.sum((v + w) ** 2, axis=1)
    return lhs - (1.0 - theta) * (nv**2 + nw**2) - theta * (nv - nw) ** 2


# ---------------------------------------------------------------------------
# coordinate cylinders


@dataclass
class CoordinateCylinder:
    p: np.ndarray
    R_p: np.ndarray
    r: float
    delta: float
    eta: np.ndarray
    gamma_samples: np.ndarray
    sup_dgamma: float
    uniform_bound_ok: bool
    residual: float
    s_range: tuple


def extract_cylinder(b, p_param, r, delta, n_eta=401):
    """Local graph of the boundary over its tangent line at p.

    R_p has rows (T, T_perp) with T the unit tangent and T_perp its positive
    rotation, so R_p is a proper rotation and eta = T.(y-p).
    """
    if not (0.0 < r < delta):
        raise DomainError("need 0 < r < delta")
    s0 = float(p_param)
    p = b.points([s0])[0]
    T = b.tangents([s0])[0]
    R = np.array([[T[0], T[1]], [-T[1], T[0]]])

    def local(s):
        return (b.param(np.atleast_1d(s)) - p) @ R.T

    # monotone arc through s0 on which eta covers [-r, r]
    h = TWO_PI / 16384
    u = np.arange(1, 8193) * h
    eta_f = local(s0 + u)[:, 0]
    eta_b = local(s0 - u)[:, 0]
    try:
        kf = int(np.nonzero(eta_f >= r)[0][0])
        kb = int(np.nonzero(eta_b <= -r)[0][0])
    except IndexError:
        raise GeometryError("boundary does not reach eta = +-r; use a smaller r") from None
    if np.any(np.diff(eta_f[: kf + 1]) <= 0) or np.any(np.diff(eta_b[: kb + 1]) >= 0):
        raise GeometryError("local boundary is not a graph at this scale; use a smaller r")
    s_lo, s_hi = s0 - u[kb], s0 + u[kf]

    # no other piece of the boundary may enter the box |eta| < r, |zeta| < delta
    s_all = s0 + np.arange(16384) * h
    loc = local(s_all)
    inbox = (np.abs(loc[:, 0]) < r) & (np.abs(loc[:, 1]) < delta)
    off = np.mod(s_all - s_lo, TWO_PI) > (s_hi - s_lo)
    if np.any(inbox & off):
        raise GeometryError("another boundary arc enters the cylinder; use a smaller r")

    eta = np.linspace(-r, r, n_eta)
    eta[n_eta // 2] = 0.0
    s_eta = np.empty(n_eta)
    for i, e in enumerate(eta):
        if e == 0.0:
            s_eta[i] = s0
            continue
        lo, hi = (s0, s_hi) if e > 0 else (s_lo, s0)
        s_eta[i] = brentq(lambda s: local(s)[0, 0] - e, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    loc = local(s_eta)
    gamma = loc[:, 1]
    gamma[n_eta // 2] = 0.0
    if np.max(np.abs(gamma)) >= 0.5 * delta:
        raise GeometryError("|gamma| reaches delta/2; use a smaller r or a larger delta")
    dp = b.dparam(s_eta) @ R.T
    dgamma = dp[:, 1] / dp[:, 0]
    back = p + np.column_stack([eta, gamma]) @ R
    _, resid = closest_point_batch(b, back)
    sup_dg = float(np.max(np.abs(dgamma)))
    return CoordinateCylinder(
        p, R, float(r), float(delta), eta, gamma, sup_dg, sup_dg <= 1.0 / 3.0, float(resid.max()), (s_lo, s_hi)
    )
