"""Free Green's functions of the neutron-oscillator system.

The free resolvent acts channel by channel: on the oscillator state ``n`` the
neutron sees the Helmholtz/Yukawa kernel at energy ``mu - omega |n|``.  Channels
with ``|n| <= floor(mu/omega)`` are open (oscillatory), the rest decay.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _gauss
from .oscillator import Channel, HermiteBasis, ModelParams, eigenfunction_1d, eigenfunction_value

DEFAULT_THRESHOLD_WINDOW = 1e-3


class BoundarySide(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    OFF_AXIS = "off-axis"
    NEGATIVE_REAL = "negative-real"

    @classmethod
    def parse(cls, value) -> "BoundarySide":
        if isinstance(value, cls):
            return value
        if value in ("+", 1, "+1"):
            return cls.PLUS
        if value in ("-", -1, "-1"):
            return cls.MINUS
        return cls(value)


class ThresholdError(ValueError):
    """Energy too close to a threshold ``mu/omega in N_0``."""


class TailNotConverged(RuntimeError):
    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


@dataclass(frozen=True)
class ChannelSplit:
    """Low/high split of the oscillator channels at energy ``mu``."""

    mu: float
    omega: float

    @property
    def n0(self) -> int:
        return math.floor(self.mu / self.omega)

    def is_low(self, n) -> bool:
        return sum(n) <= self.n0

    def open_shells(self) -> range:
        return range(0, self.n0 + 1)

    def gap(self) -> float:
        """Distance from ``mu`` to the first closed shell."""
        return self.omega * (self.n0 + 1) - self.mu


def threshold_distance(mu: float, omega: float) -> float:
    x = mu / omega
    return abs(x - round(x)) if x > -0.5 else math.inf


def check_threshold(mu: float, omega: float, window: float = DEFAULT_THRESHOLD_WINDOW,
                    allow: bool = False) -> None:
    if not allow and threshold_distance(mu, omega) <= window:
        raise ThresholdError(
            f"mu/omega = {mu / omega:.6g} lies within {window:g} of a threshold")


def channel_momentum(z: complex) -> complex:
    """Principal root of ``z`` with nonnegative imaginary part."""
    k = np.sqrt(complex(z))
    return -k if k.imag < 0 else k


def helmholtz_kernel(side: BoundarySide, energy, r: float) -> complex:
    """Outgoing/incoming Helmholtz kernel ``exp(i sqrt(E) r) / (4 pi r)``.

    Below zero energy this is the Yukawa kernel on every side.  For the
    off-axis side ``energy`` is the complex spectral parameter.
    """
    side = BoundarySide.parse(side)
    if not r > 0:
        raise ValueError("r must be positive (the kernel is singular at r = 0)")
    if side is BoundarySide.OFF_AXIS:
        z = complex(energy)
        if z.imag == 0:
            raise ValueError("off-axis energy needs a nonzero imaginary part")
        return complex(np.exp(1j * channel_momentum(z) * r) / (4.0 * math.pi * r))
    nu = float(np.real(energy))
    if side is BoundarySide.NEGATIVE_REAL and nu > 0:
        raise ValueError("negative-real side needs a nonpositive energy")
    if nu < 0:
        return complex(math.exp(-math.sqrt(-nu) * r) / (4.0 * math.pi * r))
    val = np.exp(1j * math.sqrt(nu) * r) / (4.0 * math.pi * r)
    return complex(np.conj(val) if side is BoundarySide.MINUS else val)


def product_integral(a: float, b: float, d: float) -> complex:
    """Closed form of ``int exp(i a|x-y1|)/|x-y1| * exp(-b|x-y2|)/|x-y2| dx`` with ``|y1-y2| = d``."""
    if not (b > 0 and d > 0):
        raise ValueError("need b > 0 and d > 0")
    return complex(4.0 * math.pi / d * (np.exp(1j * a * d) - math.exp(-b * d)) / (a * a + b * b))


def trace_plane_source(channel: Channel, y, params: ModelParams) -> complex:
    """Plane wave times oscillator state, restricted to the hyperplane ``x = y``."""
    y = np.asarray(y, dtype=float)
    phase = np.exp(1j * (y @ channel.kvec))
    return (2.0 * math.pi) ** -1.5 * phase * eigenfunction_value(channel.n, y, params)


@dataclass(frozen=True)
class PotentialValue:
    value: complex
    tail_bound: float
    converged: bool


def _time_sign(side: BoundarySide, energy) -> int:
    if side is BoundarySide.OFF_AXIS:
        return 1 if complex(energy).imag > 0 else -1
    return -1 if side is BoundarySide.MINUS else 1


def potential_apply(side: BoundarySide, energy, xi, x, y, params: ModelParams,
                    tail_tol: float = 1e-8, shell_max: int | None = None,
                    allow_threshold: bool = False) -> PotentialValue:
    """Single-layer potential ``(G(E) xi)(x, y)`` of a charge given in the oscillator basis.

    ``xi`` is a :class:`~fermi_scatter.charge_kernel.ChargeVector` (or anything
    with ``coefficients`` and ``cutoff``).  Open channels are integrated on a
    rotated time contour, which is the analytic continuation to the upper
    (or lower) rim.  Closed channels use the Mehler kernel for short times and
    an explicit shell sum for long times, cut where the remainder bound drops
    below ``tail_tol``; ``shell_max`` overrides that cut.
    """
    side = BoundarySide.parse(side)
    omega = params.omega
    coeffs = np.asarray(xi.coefficients, dtype=complex)
    basis = HermiteBasis(xi.cutoff)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(coeffs):
        return PotentialValue(0j, 0.0, True)

    z = complex(energy)
    mu = z.real
    if side in (BoundarySide.PLUS, BoundarySide.MINUS):
        check_threshold(mu, omega, allow=allow_threshold)
    n0 = math.floor(mu / omega) if side is not BoundarySide.NEGATIVE_REAL else -1
    n0 = max(n0, -1)
    sgn = _time_sign(side, energy)
    idx = basis.index_array
    cut = basis.cutoff

    total = 0j
    # open channels: t = tau exp(+-3i pi/4) keeps exp(z t) decaying
    if n0 >= 0:
        rot = np.exp(sgn * 0.75j * math.pi)
        c_min = mu - omega * n0          # slowest decay: the last opened channel
        tau, wt = _gauss.log_time_rule(1e-12, 90.0 / c_min, per_unit=2.0)
        t = tau * rot
        P = [_gauss.heat_conv(t, x[i], n0, cut, omega) for i in range(3)]   # (T, k, b)
        phi_y = [eigenfunction_1d(n0, y[i], omega) for i in range(3)]
        wr = wt * rot
        for N in range(n0 + 1):
            for n in _shell(N):
                per_b = (P[0][:, n[0], idx[:, 0]] * P[1][:, n[1], idx[:, 1]]
                         * P[2][:, n[2], idx[:, 2]])
                amp = phi_y[0][n[0]] * phi_y[1][n[1]] * phi_y[2][n[2]]
                # one exponent: exp(z t) and exp(-omega N t) separately overflow at large tau
                total += amp * np.einsum("t,tb,b->", np.exp((z - omega * N) * t) * wr, per_b, coeffs)

    val, bound, ok = _closed_part(z, sgn, n0, coeffs, idx, cut, x, y, omega, tail_tol, shell_max)
    total += val
    return PotentialValue(complex(total), bound, ok)


@lru_cache(maxsize=None)
def _shell(N: int):
    from .oscillator import enumerate_shell
    return tuple(enumerate_shell(N))


def _closed_part(z, sgn, n0, coeffs, idx, cut, x, y, omega, tail_tol, shell_max):
    # closed channels |n| > n0 on the real time axis
    t0 = min(2.0, 8.0 / (n0 + 2)) / omega
    z = complex(z)
    gap = omega * (n0 + 1) - z.real
    t, w = _gauss.log_time_rule(1e-14, max(60.0 / gap, 2 * t0), per_unit=2.0, breaks=(t0,))
    small = t < t0
    total = 0j

    ts = t[small]
    if ts.size:
        Q = [_gauss.mehler_conv(ts, x[i], y[i], cut, omega) for i in range(3)]
        full = Q[0][:, idx[:, 0]] * Q[1][:, idx[:, 1]] * Q[2][:, idx[:, 2]]
        if n0 >= 0:
            S = _shell_terms(ts, x, y, idx, cut, omega, 0, n0)
            full = full - np.einsum("tbn,tn->tb", S, np.exp(-omega * np.outer(ts, np.arange(n0 + 1))))
        total += np.einsum("t,tb,b->", np.exp(z * ts) * w[small], full, coeffs)

    tl = t[~small]
    bound = 0.0
    if tl.size:
        need = n0 + 1 + math.ceil(-math.log(tail_tol * 1e-3) / (omega * t0))
        nmax = need if shell_max is None else shell_max
        S = _shell_terms(tl, x, y, idx, cut, omega, n0 + 1, nmax)
        # exp((z - omega N) t) stays bounded for closed shells
        expo = np.exp(np.outer(tl, z - omega * np.arange(n0 + 1, nmax + 1)))
        total += np.einsum("t,tbn,tn,b->", w[~small], S, expo, coeffs)
        bound = _shell_tail_bound(nmax, z.real, t0, omega, np.abs(coeffs).sum(), x, y)
    return total, bound, bound <= tail_tol


def _shell_terms(t, x, y, idx, cut, omega, nmin, nmax):
    """S[t, b, N - nmin] = sum_{|n| = N} phi_n(y) int h_t(x - y') phi_n phi_b dy' (no time decay).

    The decay factors are applied by the caller: an FFT convolution keeps
    absolute accuracy relative to the largest term, so mixing in
    ``exp(-omega k t)`` first would swamp the small high shells.
    """
    per_axis = []
    for i in range(3):
        P = _gauss.heat_conv(t, x[i], nmax, cut, omega).real                      # (T, k, b)
        ph = eigenfunction_1d(nmax, y[i], omega)                                     # (k,)
        f = (P * ph[None, :, None])[:, :, idx[:, i]]                                # (T, k, B)
        per_axis.append(np.moveaxis(f, 1, -1))                                      # (T, B, k)
    return _gauss.shell_convolve(per_axis, nmin, nmax)


def _shell_tail_bound(nmax, mu, t0, omega, coef_l1, x, y):
    # each of phi_n(y), phi_n(y'), phi_b(y') is at most (C pi^-1/4)^3 (omega/2)^(3/4),
    # and the heat kernel integrates to one, leaving int_t0^inf exp((mu - omega N) t) dt
    from .oscillator import CRAMER
    amp = (CRAMER * math.pi ** -0.25) ** 9 * (omega / 2.0) ** 2.25
    tot = 0.0
    N = nmax + 1
    while True:
        rate = omega * N - mu
        term = (N + 1) * (N + 2) / 2 * math.exp(-rate * t0) / rate
        tot += term
        if term < 1e-18 * max(tot, 1e-300) or N > nmax + 10000:
            break
        N += 1
    return amp * coef_l1 * tot


def free_resolvent_gaussian(side: BoundarySide, mu: float, beta: float):
    """Evaluator for ``(r0(mu) f)(R)`` with ``f = exp(-beta |x|^2)``.

    The free 3D resolvent ``(-Laplacian - mu -+ i0)^-1`` is applied by the
    radial reduction of the convolution with ``exp(+-i sqrt(mu) r)/(4 pi r)``:

        u(R) = 1/(2ikR) int_0^inf rho f(rho) (exp(ik(R+rho)) - exp(ik|R-rho|)) d rho.

    Below zero energy ``k = i kappa`` and the result is real on both sides.
    """
    side = BoundarySide.parse(side)
    if not beta > 0:
        raise ValueError("beta must be positive")
    if side not in (BoundarySide.PLUS, BoundarySide.MINUS, BoundarySide.NEGATIVE_REAL):
        raise ValueError("free_resolvent_gaussian needs a real energy")
    if mu == 0:
        raise ValueError("mu = 0 is a threshold")
    if mu > 0 and side is BoundarySide.NEGATIVE_REAL:
        raise ValueError("negative-real side needs mu < 0")
    rho_max = math.sqrt(45.0 / beta)
    conj = side is BoundarySide.MINUS

    def f(rho):
        return math.exp(-beta * rho * rho)

    if mu < 0:
        kappa = math.sqrt(-mu)

        def evaluate(R: float) -> complex:
            R = float(R)
            if R == 0.0:
                val, _ = integrate.quad(lambda p: p * f(p) * math.exp(-kappa * p), 0, rho_max,
                                        epsabs=1e-15)
                return complex(val)
            pts = [R] if R < rho_max else None
            val, _ = integrate.quad(
                lambda p: p * f(p) * (math.exp(-kappa * abs(R - p)) - math.exp(-kappa * (R + p))),
                0, rho_max, points=pts, epsabs=1e-15, limit=200)
            return complex(val / (2.0 * kappa * R))

        return evaluate

    k = math.sqrt(mu)

    def moment(weight, lo, hi):
        # oscillatory (QAWO) rule for int_lo^hi rho f(rho) {cos, sin}(k rho)
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(lambda p: p * f(p), lo, hi, weight=weight, wvar=k,
                                epsabs=1e-15, limit=200)
        return val

    def evaluate(R: float) -> complex:
        R = float(R)
        if R == 0.0:
            # limit R -> 0: int rho f(rho) exp(ik rho) d rho
            val = moment("cos", 0.0, rho_max) + 1j * moment("sin", 0.0, rho_max)
        else:
            # the bracket is -2 sin(kR) sin(k rho) + 2i [cos(kR) sin(k rho) (rho < R)
            # or sin(kR) cos(k rho) (rho > R)]
            Rc = min(R, rho_max)
            re = -2.0 * math.sin(k * R) * moment("sin", 0.0, rho_max)
            im = 2.0 * (math.cos(k * R) * moment("sin", 0.0, Rc)
                        + math.sin(k * R) * moment("cos", Rc, rho_max))
            val = (re + 1j * im) / (2j * k * R)
        return complex(np.conj(val)) if conj else complex(val)

    return evaluate
