"""Per-axis Gaussian integrals behind every kernel in the package.

The free resolvent of the two-body problem is written as a Laplace transform
of the heat semigroup,

    (H0 - z)^-1 = int_0^inf exp(z t) exp(-t H0) dt,

and the heat kernel factorizes into the free kernel h_t(x - x') of the neutron
times the Mehler kernel M_t(y, y') of the oscillator.  Both are Gaussians, the
basis functions are polynomials times Gaussians, so every per-axis integral
below is a polynomial moment of a Gaussian.  Those are evaluated *exactly*
(up to rounding) with Gauss-Hermite rules after completing the square.

Notation per axis: xi = sqrt(omega/2) y, phi_k(y) = (omega/2)**(1/4) hn_k(xi) exp(-xi**2/2),
rho = exp(-omega t), tau = omega t / 2, and (u, v) = ((y+y')/sqrt2, (y-y')/sqrt2).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .oscillator import hermite_functions


@lru_cache(maxsize=None)
def gauss_hermite(order: int):
    z, w = np.polynomial.hermite.hermgauss(order)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _coth(x):
    return 1.0 / np.tanh(x)


def mehler_pair(t, s: float, amax: int, omega: float) -> np.ndarray:
    """W[t, a, b] = int int phi_a(y) M_t(y, y') h_t(y + s - y') phi_b(y') dy dy'.

    ``t`` is an array of positive times.  Summed over all oscillator states,
    this is the diagonal (x = y + s) trace of the heat kernel against the pair
    of basis functions.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tau = 0.5 * omega * t
    a_u = 0.25 * omega * (1.0 + np.tanh(tau))
    a_v = 0.25 * omega * (1.0 + _coth(tau)) + 0.5 / t
    v0 = -math.sqrt(2.0) * s / (4.0 * t * a_v)
    # a_v v0**2 - s**2/(4t), arranged without cancellation
    two_t_av = 2.0 * t * a_v
    expo = -(s * s / (4.0 * t)) * (two_t_av - 1.0) / two_t_av
    one_m_rho2 = -np.expm1(-2.0 * omega * t)
    pref = (math.sqrt(omega / (2.0 * math.pi)) / np.sqrt(one_m_rho2)
            / np.sqrt(4.0 * math.pi * t) / np.sqrt(a_u * a_v) * np.exp(expo))

    z, w = gauss_hermite(amax + 2)
    u = z[None, :, None] / np.sqrt(a_u)[:, None, None]
    v = v0[:, None, None] + z[None, None, :] / np.sqrt(a_v)[:, None, None]
    c = math.sqrt(omega / 2.0) / math.sqrt(2.0)
    ha = hermite_functions(amax, c * (u + v))      # (A, T, G, G)
    hb = hermite_functions(amax, c * (u - v))
    ww = w[:, None] * w[None, :]
    out = np.einsum("atjk,btjk,jk->tab", ha, hb, ww, optimize=True)
    return out * (math.sqrt(omega / 2.0) * pref)[:, None, None]


def shell_pair(t, amax: int, kmax: int, omega: float) -> np.ndarray:
    """V[t, a, k, b] = int int phi_a phi_k(y) h_t(y - y') phi_k phi_b(y') dy dy'.

    Channel-resolved counterpart of :func:`mehler_pair` at zero offset:
    ``W[t,a,b] == sum_k exp(-omega k t) V[t,a,k,b]``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a_u = np.full_like(t, 0.5 * omega)
    a_v = 0.5 * omega + 0.5 / t
    pref = 1.0 / np.sqrt(4.0 * math.pi * t) / np.sqrt(a_u * a_v)
    z, w = gauss_hermite(amax + kmax + 2)
    u = z[None, :, None] / np.sqrt(a_u)[:, None, None]
    v = z[None, None, :] / np.sqrt(a_v)[:, None, None]
    c = math.sqrt(omega / 2.0) / math.sqrt(2.0)
    nmax = max(amax, kmax)
    h1 = hermite_functions(nmax, c * (u + v))
    h2 = hermite_functions(nmax, c * (u - v))
    ww = w[:, None] * w[None, :]
    out = np.einsum("atjl,ktjl,ktjl,btjl,jl->takb",
                    h1[:amax + 1], h1[:kmax + 1], h2[:kmax + 1], h2[:amax + 1], ww,
                    optimize=True)
    return out * (0.5 * omega * pref)[:, None, None, None]


def heat_conv(t, x: float, kmax: int, bmax: int, omega: float) -> np.ndarray:
    """P[t, k, b] = int h_t(x - y') phi_k(y') phi_b(y') dy' for real or complex t.

    For complex t the closed form is the analytic continuation of the
    convolution (principal square roots), which is what contour-rotated time
    integrals need.
    """
    t = np.atleast_1d(np.asarray(t, dtype=complex))
    A = 0.25 / t + 0.5 * omega
    m = x / (4.0 * t * A)
    one_p = 1.0 + 2.0 * omega * t
    pref = np.exp(-omega * x * x / (2.0 * one_p)) / np.sqrt(math.pi * one_p)
    z, w = gauss_hermite((kmax + bmax) // 2 + 2)
    yq = m[:, None] + z[None, :] / np.sqrt(A)[:, None]
    xi = math.sqrt(omega / 2.0) * yq
    nmax = max(kmax, bmax)
    h = hermite_functions(nmax, xi)
    out = np.einsum("ktj,btj,j->tkb", h[:kmax + 1], h[:bmax + 1], w, optimize=True)
    return out * (math.sqrt(omega / 2.0) * pref)[:, None, None]


def mehler_conv(t, x: float, y: float, bmax: int, omega: float) -> np.ndarray:
    """Q[t, b] = int h_t(x - y') M_t(y, y') phi_b(y') dy' for real t > 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    wt = omega * t
    coth = _coth(wt)
    csch = 1.0 / np.sinh(wt)
    A = 0.25 / t + 0.25 * omega * (coth + 1.0)
    B = x / (2.0 * t) + 0.5 * omega * y * csch
    # B**2/(4A) - x**2/(4t) - omega coth y**2/4, grouped to tame the 1/t terms
    expo = (B * B / (4.0 * A) - x * x / (4.0 * t) - 0.25 * omega * coth * y * y)
    one_m_rho2 = -np.expm1(-2.0 * wt)
    pref = (math.sqrt(omega / (2.0 * math.pi)) / np.sqrt(one_m_rho2)
            / np.sqrt(4.0 * math.pi * t) / np.sqrt(A) * np.exp(expo))
    z, w = gauss_hermite(bmax // 2 + 2)
    yq = (B / (2.0 * A))[:, None] + z[None, :] / np.sqrt(A)[:, None]
    h = hermite_functions(bmax, math.sqrt(omega / 2.0) * yq)
    out = np.einsum("btj,j->tb", h, w)
    return out * ((omega / 2.0) ** 0.25 * pref)[:, None]


def shell_convolve(per_axis: list[np.ndarray], nmin: int, nmax: int) -> np.ndarray:
    """Shell sums over 3D multi-indices from per-axis factors.

    ``per_axis[i]`` has shape (..., K) indexed by the axis quantum number; the
    result has shape (..., nmax - nmin + 1) with entry N equal to
    ``sum_{n1+n2+n3 = N} f1[n1] f2[n2] f3[n3]``.  Leading axes broadcast.
    """
    f1, f2, f3 = per_axis
    K = f1.shape[-1]
    if K > 12:
        # long series: one FFT convolution instead of O(K^2) slice updates
        L = 3 * K - 2
        n = 1 << (L - 1).bit_length()
        fft, ifft = (np.fft.rfft, np.fft.irfft) if not any(np.iscomplexobj(f) for f in per_axis) \
            else (np.fft.fft, np.fft.ifft)
        g = fft(f1, n) * fft(f2, n) * fft(f3, n)
        full = ifft(g, n)[..., :L]
        out = np.zeros(full.shape[:-1] + (nmax - nmin + 1,), dtype=full.dtype)
        hi = min(nmax, L - 1)
        if hi >= nmin:
            out[..., :hi - nmin + 1] = full[..., nmin:hi + 1]
        return out
    shape = np.broadcast_shapes(f1.shape[:-1], f2.shape[:-1], f3.shape[:-1])
    dtype = np.result_type(f1, f2, f3)
    g = np.zeros(shape + (2 * K - 1,), dtype=dtype)
    for k in range(K):
        g[..., k:k + K] += f1[..., k:k + 1] * f2
    out = np.zeros(shape + (nmax - nmin + 1,), dtype=dtype)
    for k in range(K):
        lo, hi = max(nmin - k, 0), min(nmax - k, 2 * K - 2)
        if lo > hi:
            continue
        out[..., lo + k - nmin:hi + k - nmin + 1] += f3[..., k:k + 1] * g[..., lo:hi + 1]
    return out


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def log_time_rule(t_lo: float, t_hi: float, per_unit: float = 1.0, order: int = 12,
                  breaks: tuple = ()):
    """Composite Gauss-Legendre rule in s = log t on [t_lo, t_hi].

    Returns nodes ``t`` and weights ``w`` for ``int f(t) dt`` (the Jacobian t is
    folded into ``w``).  Panel edges include ``breaks`` so that piecewise
    definitions of the integrand stay smooth inside each panel.
    """
    s_edges = [math.log(t_lo), math.log(t_hi)]
    s_edges += [math.log(b) for b in breaks if t_lo < b < t_hi]
    s_edges = sorted(s_edges)
    x, w = _gauss_legendre(order)
    ts, ws = [], []
    for s0, s1 in zip(s_edges[:-1], s_edges[1:]):
        n = max(1, math.ceil((s1 - s0) * per_unit))
        e = np.linspace(s0, s1, n + 1)
        half = 0.5 * np.diff(e)
        mid = 0.5 * (e[:-1] + e[1:])
        s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        ws.append((half[:, None] * w[None, :]).ravel() * np.exp(s))
        ts.append(np.exp(s))
    return np.concatenate(ts), np.concatenate(ws)
