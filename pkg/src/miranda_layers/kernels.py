"""Positively homogeneous planar kernels given by their restriction to the
unit circle.

A kernel of degree h is stored as a Fourier series of its circle trace,

    f(phi) = sum_k cos_coeffs[k] cos(k phi) + sin_coeffs[k] sin(k phi),

and evaluated as k(z) = f(z/|z|) |z|**h.  Odd kernels are exactly those
with vanishing even modes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .errors import ConfigError, SingularityError

_SQRT_EPS = 1.4901161193847656e-08


@dataclass(frozen=True, eq=False)
class HomogeneousKernel:
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    degree: int = -1
    name: str = "kernel"

    def __post_init__(self):
        c = np.asarray(self.cos_coeffs, dtype=float).reshape(-1)
        s = np.asarray(self.sin_coeffs, dtype=float).reshape(-1)
        n = max(c.size, s.size, 1)
        cc = np.zeros(n)
        ss = np.zeros(n)
        cc[: c.size] = c
        ss[: s.size] = s
        ss[0] = 0.0
        object.__setattr__(self, "cos_coeffs", cc)
        object.__setattr__(self, "sin_coeffs", ss)

    @property
    def n_modes(self):
        return self.cos_coeffs.size

    @property
    def odd_flag(self):
        return not (np.any(self.cos_coeffs[0::2]) or np.any(self.sin_coeffs[0::2]))

    def sphere_fn(self, u):
        """Circle trace at unit vector(s) ``u`` (shape (2,) or (n, 2))."""
        f, _ = _trace(self, u)
        return f

    def sphere_fn_grad(self, u):
        """Tangential derivative of the trace, per radian."""
        _, df = _trace(self, u)
        return df

    def __call__(self, z):
        return eval_kernel(self, z)

    # linear structure (kernels of equal degree form a vector space)
    def __add__(self, other):
        if not isinstance(other, HomogeneousKernel) or other.degree != self.degree:
            return NotImplemented
        n = max(self.n_modes, other.n_modes)
        c = _pad(self.cos_coeffs, n) + _pad(other.cos_coeffs, n)
        s = _pad(self.sin_coeffs, n) + _pad(other.sin_coeffs, n)
        return HomogeneousKernel(c, s, self.degree, f"({self.name}+{other.name})")

    def __mul__(self, alpha):
        alpha = float(alpha)
        return HomogeneousKernel(
            alpha * self.cos_coeffs, alpha * self.sin_coeffs, self.degree, f"{alpha:g}*{self.name}"
        )

    __rmul__ = __mul__


def _pad(a, n):
    out = np.zeros(n)
    out[: a.size] = a
    return out


def _trace(k, u):
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    phi = np.arctan2(u[:, 1], u[:, 0])
    m = np.arange(k.n_modes)
    c = np.cos(np.outer(phi, m))
    s = np.sin(np.outer(phi, m))
    f = c @ k.cos_coeffs + s @ k.sin_coeffs
    df = (-s * m) @ k.cos_coeffs + (c * m) @ k.sin_coeffs
    if single:
        return float(f[0]), float(df[0])
    return f, df


@njit
def trace_at(cc, sc, ux, uy):
    """Trace value and derivative at the unit vector (ux, uy) (mode recurrence)."""
    f = cc[0]
    df = 0.0
    ck = 1.0
    sk = 0.0
    for m in range(1, cc.shape[0]):
        ck, sk = ck * ux - sk * uy, sk * ux + ck * uy
        f += cc[m] * ck + sc[m] * sk
        df += m * (sc[m] * ck - cc[m] * sk)
    return f, df


def trace_arrays(cc, sc, ux, uy):
    """Vectorized counterpart of :func:`trace_at` (numpy path)."""
    f = np.full(ux.shape, cc[0])
    df = np.zeros(ux.shape)
    ck = np.ones(ux.shape)
    sk = np.zeros(ux.shape)
    for m in range(1, cc.shape[0]):
        ck, sk = ck * ux - sk * uy, sk * ux + ck * uy
        f += cc[m] * ck + sc[m] * sk
        df += m * (sc[m] * ck - cc[m] * sk)
    return f, df


def eval_kernel(k, z):
    """k(z) = f(z/|z|) |z|**degree for z != 0 (z of shape (2,) or (n, 2))."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    r = np.hypot(z[:, 0], z[:, 1])
    if np.any(r == 0):
        raise SingularityError("kernel evaluated at the origin")
    f, _ = trace_arrays(k.cos_coeffs, k.sin_coeffs, z[:, 0] / r, z[:, 1] / r)
    out = f * r ** float(k.degree)
    return float(out[0]) if single else out


def eval_kernel_grad(k, z):
    """Gradient |z|^(h-1) [h f(u) u + f'(u) u_perp], u = z/|z|, u_perp = (-u2, u1)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    r = np.hypot(z[:, 0], z[:, 1])
    if np.any(r == 0):
        raise SingularityError("kernel gradient evaluated at the origin")
    ux, uy = z[:, 0] / r, z[:, 1] / r
    f, df = trace_arrays(k.cos_coeffs, k.sin_coeffs, ux, uy)
    h = float(k.degree)
    scale = r ** (h - 1.0)
    g = np.column_stack([(h * f * ux - df * uy) * scale, (h * f * uy + df * ux) * scale])
    return g[0] if single else g


# ---------------------------------------------------------------------------
# constructors


def riesz(component, normalized=True):
    """z_j / (2 pi |z|^2); ``normalized=False`` drops the 1/(2 pi)."""
    if component not in (1, 2):
        raise ConfigError("riesz component must be 1 or 2")
    scale = 1.0 / (2 * math.pi) if normalized else 1.0
    if component == 1:
        return HomogeneousKernel([0.0, scale], [0.0, 0.0], -1, f"riesz{component}")
    return HomogeneousKernel([0.0, 0.0], [0.0, scale], -1, f"riesz{component}")


def odd_harmonic(mode, phase="cos"):
    """Trace cos((2m+1) phi) or sin((2m+1) phi)."""
    mode = int(mode)
    if mode < 0:
        raise ConfigError("harmonic mode must be >= 0")
    n = 2 * mode + 1
    c = np.zeros(n + 1)
    s = np.zeros(n + 1)
    if phase == "cos":
        c[n] = 1.0
    elif phase == "sin":
        s[n] = 1.0
    else:
        raise ConfigError('phase must be "cos" or "sin"')
    return HomogeneousKernel(c, s, -1, f"{phase}{n}")


def fourier_odd(cos_coeffs=(), sin_coeffs=()):
    """Entry i of each list is the coefficient of mode 2i+1."""
    n = 2 * max(len(cos_coeffs), len(sin_coeffs), 1) + 1
    c = np.zeros(n)
    s = np.zeros(n)
    for i, v in enumerate(cos_coeffs):
        c[2 * i + 1] = v
    for i, v in enumerate(sin_coeffs):
        s[2 * i + 1] = v
    return HomogeneousKernel(c, s, -1, "fourier_odd")


def fourier(cos_coeffs=(), sin_coeffs=(), degree=-1, name="fourier"):
    """General (not necessarily odd) trace; entry k is the coefficient of mode k."""
    return HomogeneousKernel(cos_coeffs, sin_coeffs, degree, name)


def from_samples(fn, M=256, degree=-1, name="sampled"):
    """Kernel from pointwise circle values via FFT (spectral differentiation).

    Warns when the trailing Fourier coefficients do not decay, which signals a
    trace that is not smooth enough for C^{1,1} certification.
    """
    M = int(M)
    phi = np.arange(M) * (2 * math.pi / M)
    vals = np.asarray(fn(np.column_stack([np.cos(phi), np.sin(phi)])), dtype=float)
    F = np.fft.rfft(vals) / M
    c = 2 * F.real
    s = -2 * F.imag
    c[0] /= 2
    if M % 2 == 0:
        c[-1] /= 2
        s[-1] = 0.0
        c, s = c[:-1], s[:-1]  # drop the unresolved Nyquist mode
    mag = np.hypot(c, s)
    tail = mag[-max(2, mag.size // 8) :].max() if mag.size else 0.0
    if mag.max() > 0 and tail > 1e-8 * mag.max():
        warnings.warn(
            f"{name}: Fourier coefficients of the trace do not decay "
            f"(tail/max = {tail / mag.max():.2e}); smoothness not certified",
            RuntimeWarning,
            stacklevel=2,
        )
    return HomogeneousKernel(c, s, degree, name)


def kernel_from_config(cfg):
    if not isinstance(cfg, dict) or "kernel" not in cfg:
        raise ConfigError('kernel config must be an object with a "kernel" key')
    kind = cfg["kernel"]
    if kind == "riesz":
        return riesz(int(cfg.get("component", 1)))
    if kind == "odd_harmonic":
        mode = int(cfg.get("mode", 0))
        if mode > 3:
            raise ConfigError("odd_harmonic built-ins go up to mode 3")
        return odd_harmonic(mode, cfg.get("phase", "cos"))
    if kind == "fourier_odd":
        return fourier_odd(cfg.get("cos_coeffs", ()), cfg.get("sin_coeffs", ()))
    if kind == "fourier":
        return fourier(cfg.get("cos_coeffs", ()), cfg.get("sin_coeffs", ()))
    raise ConfigError(f"unknown kernel {kind!r}")


def partial(k, j):
    """The derivative d/dz_j of k, homogeneous of degree ``k.degree - 1``.

    Its trace is h f(phi) u_j + f'(phi) u_perp_j; this is band-limited (one
    mode more than k) so sampling and an FFT recover it exactly.
    """
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    M = 4 * (k.n_modes + 2)
    phi = np.arange(M) * (2 * math.pi / M)
    ux, uy = np.cos(phi), np.sin(phi)
    f, df = trace_arrays(k.cos_coeffs, k.sin_coeffs, ux, uy)
    h = float(k.degree)
    vals = h * f * ux - df * uy if j == 1 else h * f * uy + df * ux
    F = np.fft.rfft(vals) / M
    c = 2 * F.real
    s = -2 * F.imag
    c[0] /= 2
    nm = k.n_modes + 1
    c, s = c[:nm], s[:nm]
    c[np.abs(c) < 1e-15 * max(1.0, np.abs(c).max())] = 0.0
    s[np.abs(s) < 1e-15 * max(1.0, np.abs(s).max())] = 0.0
    return HomogeneousKernel(c, s, k.degree - 1, f"d{j}{k.name}")


# ---------------------------------------------------------------------------
# norms


@dataclass
class KernelNorm:
    c0: float
    c1: float
    lip1: float

    @property
    def total(self):
        return self.c0 + self.c1 + self.lip1


@dataclass
class TraceNorm:
    """Sup norm and Lipschitz constant of a trace (the C^{0,1} norm)."""

    c0: float
    lip0: float

    @property
    def total(self):
        return self.c0 + self.lip0


def _skip_lip(values, h, M):
    best = 0.0
    k = 1
    while k <= M // 2:
        d = np.abs(values - np.roll(values, -k))
        best = max(best, float(d.max()) / (k * h))
        k = k + 1 if k < 4 else 2 * k
    return best


def sphere_norm(k, M=1024):
    """c0 = sup|f|, c1 = sup|f'|, lip1 = Lipschitz constant of f' (arc metric)."""
    M = int(M)
    if M < 256:
        raise ValueError("sphere_norm needs M >= 256")
    phi = np.arange(M) * (2 * math.pi / M)
    f, df = trace_arrays(k.cos_coeffs, k.sin_coeffs, np.cos(phi), np.sin(phi))
    return KernelNorm(float(np.abs(f).max()), float(np.abs(df).max()), _skip_lip(df, 2 * math.pi / M, M))


def trace_norm(k, M=1024):
    """C^0 and C^{0,1} norms of the trace (used for the derivative kernels)."""
    phi = np.arange(M) * (2 * math.pi / M)
    f, _ = trace_arrays(k.cos_coeffs, k.sin_coeffs, np.cos(phi), np.sin(phi))
    return TraceNorm(float(np.abs(f).max()), _skip_lip(f, 2 * math.pi / M, M))


def check_odd(k, M=1024):
    """max over M circle points of |f(u) + f(-u)|."""
    phi = np.arange(M) * (2 * math.pi / M)
    ux, uy = np.cos(phi), np.sin(phi)
    f1, _ = trace_arrays(k.cos_coeffs, k.sin_coeffs, ux, uy)
    f2, _ = trace_arrays(k.cos_coeffs, k.sin_coeffs, -ux, -uy)
    return float(np.abs(f1 + f2).max())


def require_odd(k, tol=1e-12):
    v = check_odd(k)
    if v > tol:
        raise ConfigError(f"kernel {k.name} is not odd (violation {v:.3g}); oddness is required here")
    return v
