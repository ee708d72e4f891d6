"""Charge equation, generalized eigenfunctions, amplitudes and Born cross sections.

Conventions: the incoming channel is ``(k', n')`` and the outgoing one ``(k, n)``;
both are on shell at ``E = |k|^2 + omega|n| = |k'|^2 + omega|n'|``.  The
scattering amplitude is ``f = 2 pi^2 T`` and ``dsigma/dOmega = (|k|/|k'|) |f|^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .charge_kernel import (ChargeVector, KernelMatrix, assemble_gamma_ref, gamma_boundary,
                            solve_gamma_system)
from .greens import BoundarySide, check_threshold, potential_apply
from .oscillator import (Channel, HermiteBasis, ModelParams, eigenfunction_value, enumerate_shell,
                         form_factor)

ON_SHELL_TOL = 1e-9


class OffShellError(ValueError):
    pass


class ClosedChannelError(ValueError):
    pass


@dataclass(frozen=True)
class Amplitude:
    value: complex
    out_channel: Channel
    in_channel: Channel
    energy: float
    order: str
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.order not in ("born", "general"):
            raise ValueError(f"unknown order tag {self.order!r}")


@dataclass(frozen=True)
class CrossSectionTable:
    """Rows of a differential cross section plus its integral.

    ``columns`` names the row fields, e.g. ``("theta", "phi", "dsigma_domega")``
    for an angular grid or ``("shell", "dsigma_domega")`` for a shell listing.
    """

    columns: tuple
    rows: np.ndarray
    sigma_total: float
    meta: dict

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.columns):
            raise ValueError("rows do not match the column list")
        if np.any(rows[:, -1] < 0):
            raise ValueError("negative cross section in table")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)


# ---------------------------------------------------------------------------
# kinematics and conversions


def scattering_length_conversion(alpha: float | None = None, a: float | None = None) -> float:
    """``a = 1/(8 pi alpha)``; pass exactly one of the two and get the other."""
    if (alpha is None) == (a is None):
        raise ValueError("give exactly one of alpha and a")
    v = alpha if alpha is not None else a
    if v == 0:
        raise ValueError("zero has no finite counterpart")
    return 1.0 / (8.0 * math.pi * v)


def _on_shell_energy(out: Channel, inc: Channel, omega: float) -> float:
    E_in, E_out = inc.energy(omega), out.energy(omega)
    if E_in <= omega * out.n.total:
        raise ClosedChannelError(f"outgoing state {tuple(out.n)} is closed at E = {E_in!r}")
    if abs(E_in - E_out) > ON_SHELL_TOL * max(1.0, abs(E_in)):
        raise OffShellError(f"channels are off shell: E_in = {E_in!r}, E_out = {E_out!r}")
    return E_in


def outgoing_channel(E: float, n, direction, omega: float) -> Channel:
    """Channel ``(k, n)`` on shell at ``E`` with ``k`` along ``direction``."""
    n = tuple(n)
    nu = E - omega * sum(n)
    if nu <= 0:
        raise ClosedChannelError(f"channel {n} is closed at E = {E}")
    d = np.asarray(direction, dtype=float)
    return Channel(tuple(math.sqrt(nu) * d / np.linalg.norm(d)), n)


def unit_vector(theta: float, phi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


# ---------------------------------------------------------------------------
# charge equation


def trace_coefficients(channel: Channel, basis: HermiteBasis, params: ModelParams) -> np.ndarray:
    """Basis coefficients of ``Tr Phi_0(k, n)``: ``(2 pi)^-3/2 <phi_a, exp(i k.y) phi_n>``.

    Computed from the closed-form form factor, so the projection is exact.
    """
    k = channel.kvec
    return np.array([(2.0 * math.pi) ** -1.5 * form_factor(a, channel.n, -k, params)
                     for a in basis.indices])


@lru_cache(maxsize=16)
def _gamma_ref(lam: float, omega: float, cutoff: int, quad_order: int) -> KernelMatrix:
    return assemble_gamma_ref(lam, HermiteBasis(cutoff, quad_order), ModelParams(omega, lam))


@lru_cache(maxsize=256)
def _gamma_side(side: BoundarySide, E: float, lam: float, omega: float, cutoff: int,
                quad_order: int) -> KernelMatrix:
    basis = HermiteBasis(cutoff, quad_order)
    return gamma_boundary(side, E, basis, ModelParams(omega, lam),
                          _gamma_ref(lam, omega, cutoff, quad_order))


def reference_gamma(params: ModelParams, basis: HermiteBasis) -> KernelMatrix:
    """``Gamma(-lambda)`` on the given basis, memoized per (lambda, omega, basis)."""
    return _gamma_ref(params.lam, params.omega, basis.cutoff, basis.quad_order)


def boundary_gamma(side, E: float, params: ModelParams, basis: HermiteBasis) -> KernelMatrix:
    """``Gamma^{+-}(E)`` on the given basis, memoized per (side, E, lambda, omega, basis)."""
    side = BoundarySide.parse(side)
    if side not in (BoundarySide.PLUS, BoundarySide.MINUS):
        raise ValueError("boundary values live on the plus and minus rims")
    return _gamma_side(side, float(E), params.lam, params.omega, basis.cutoff, basis.quad_order)


def solve_charge(channel: Channel, side, params: ModelParams, basis: HermiteBasis,
                 gamma: KernelMatrix | None = None) -> ChargeVector:
    """Charge ``xi`` of the generalized eigenfunction: ``(Gamma^{+-}(E) + alpha) xi = Tr Phi_0``.

    A near-singular system raises :class:`SingularSystemError` (a candidate
    point of the singular set).  ``gamma`` may supply ``Gamma^{+-}(E)`` directly.
    """
    E = channel.energy(params.omega)
    check_threshold(E, params.omega)
    if channel.n.total > basis.cutoff:
        raise ValueError(f"basis cutoff {basis.cutoff} does not resolve phi_{tuple(channel.n)}")
    G = gamma if gamma is not None else boundary_gamma(side, E, params, basis)
    return solve_gamma_system(G, params.alpha, trace_coefficients(channel, basis, params)).charge


def eigenfunction_eval(channel: Channel, side, x, y, params: ModelParams, basis: HermiteBasis,
                       xi: ChargeVector | None = None, tail_tol: float = 1e-8) -> complex:
    """``Phi(k, n, x, y) = Phi_0(k, n, x, y) + (G(E) xi)(x, y)`` on the requested side."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xi = xi if xi is not None else solve_charge(channel, side, params, basis)
    E = channel.energy(params.omega)
    phi0 = ((2.0 * math.pi) ** -1.5 * np.exp(1j * (channel.kvec @ x))
            * eigenfunction_value(channel.n, y, params))
    pot = potential_apply(side, E, xi, x, y, params, tail_tol=tail_tol)
    return complex(phi0 + pot.value)


# ---------------------------------------------------------------------------
# amplitudes


def t_born(out: Channel, inc: Channel, params: ModelParams) -> Amplitude:
    """Born amplitude ``f = int exp(-i(k - k').x) phi_n phi_n' dx / (4 pi alpha)``."""
    E = _on_shell_energy(out, inc, params.omega)
    q = out.kvec - inc.kvec
    val = form_factor(out.n, inc.n, q, params) / (4.0 * math.pi * params.alpha)
    return Amplitude(complex(val), out, inc, E, "born")


def amplitude_general(out: Channel, inc: Channel, side, params: ModelParams,
                      basis: HermiteBasis, gamma: KernelMatrix | None = None) -> Amplitude:
    """``f = 2 pi^2 <Tr Phi_0(out), (Gamma(E) + alpha)^-1 Tr Phi_0(in)>``.

    Written as the exact Born term plus the correction
    ``-(2 pi^2/alpha) <b_out, (Gamma + alpha)^-1 Gamma b_in>`` so that the
    leading term does not suffer from basis truncation.
    """
    E = _on_shell_energy(out, inc, params.omega)
    check_threshold(E, params.omega)
    born = t_born(out, inc, params)
    G = gamma if gamma is not None else boundary_gamma(side, E, params, basis)
    b_in = trace_coefficients(inc, basis, params)
    b_out = trace_coefficients(out, basis, params)
    sol = solve_gamma_system(G, params.alpha, G.entries @ b_in)
    corr = -2.0 * math.pi ** 2 / params.alpha * np.vdot(b_out, sol.charge.coefficients)
    return Amplitude(complex(born.value + corr), out, inc, E, "general",
                     info={"born": born.value, "correction": complex(corr), "smin": sol.smin,
                           "cond": sol.cond, "side": BoundarySide.parse(side).value})


# ---------------------------------------------------------------------------
# cross sections


def sphere_rule(order: int):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in phi.

    Returns ``(theta, phi, weights)``; exact for spherical harmonics of degree
    below ``2 * order``.
    """
    c, wc = np.polynomial.legendre.leggauss(order)
    nphi = 2 * order
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    theta = np.arccos(c)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(wc, np.full(nphi, 2.0 * math.pi / nphi))
    return T.ravel(), P.ravel(), W.ravel()


def dsigma_shell(q2, N: int, ratio, a: float, omega: float):
    """Shell-summed ground-state excitation ``(4a^2/N!) (|k|/|k'|) (q^2/omega)^N exp(-q^2/omega)``."""
    q2 = np.asarray(q2, dtype=float)
    return 4.0 * a * a / math.factorial(N) * ratio * (q2 / omega) ** N * np.exp(-q2 / omega)


def dsigma_state_ground(q, m, a: float, omega: float):
    """Per-axis closed form of a single ``0 -> m`` transition (momentum transfer ``q``)."""
    q = np.asarray(q, dtype=float)
    val = 4.0 * a * a * np.exp(-np.sum(q * q, axis=-1) / omega)
    for i in range(3):
        val = val * (q[..., i] ** 2 / omega) ** m[i] / math.factorial(m[i])
    return val


def sigma_total_elastic(E: float, a: float, omega: float) -> float:
    """``4 pi a^2 (omega/E) (1 - exp(-4E/omega))``."""
    if not E > 0:
        raise ValueError("E must be positive")
    return 4.0 * math.pi * a * a * omega / E * -math.expm1(-4.0 * E / omega)


def xsec_born(kind: str, E: float, params: ModelParams, n=(0, 0, 0), n_in=(0, 0, 0),
              angular_order: int = 48, theta: float | None = None) -> CrossSectionTable:
    """Born cross sections on an angular grid, with the beam along +z.

    ``kind`` is ``"elastic"`` (ground state to ground state), ``"state"``
    (``n_in -> n``) or ``"shell"`` (ground state to the whole shell
    ``|n| = N`` where ``N = sum(n)``).  For ``"shell"`` with ``theta`` given,
    the table lists every open shell at that angle instead.
    """
    omega = params.omega
    a = scattering_length_conversion(alpha=params.alpha)
    n, n_in = tuple(n), tuple(n_in)
    if kind == "elastic":
        n = n_in = (0, 0, 0)
    elif kind == "shell":
        n_in = (0, 0, 0)
    elif kind != "state":
        raise ValueError(f"unknown cross-section kind {kind!r}")
    nu_in = E - omega * sum(n_in)
    if nu_in <= 0:
        raise ClosedChannelError(f"incoming channel {n_in} is closed at E = {E}")
    kin = math.sqrt(nu_in)
    meta = {"kind": kind, "E": E, "omega": omega, "alpha": params.alpha, "a": a,
            "n": list(n), "n_in": list(n_in), "angular_order": angular_order}

    if kind == "shell" and theta is not None:
        rows = []
        Nmax = math.ceil(E / omega) - 1
        for N in range(Nmax + 1):
            kout = math.sqrt(E - omega * N)
            q2 = kin * kin + kout * kout - 2 * kin * kout * math.cos(theta)
            rows.append((N, float(dsigma_shell(q2, N, kout / kin, a, omega))))
        meta["theta"] = theta
        return CrossSectionTable(("shell", "dsigma_domega"), np.array(rows), math.nan, meta)

    nu_out = E - omega * sum(n)
    if nu_out <= 0:
        raise ClosedChannelError(f"outgoing channel {n} is closed at E = {E}")
    kout = math.sqrt(nu_out)
    T, P, W = sphere_rule(angular_order)
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    q = kout * dirs - np.array([0.0, 0.0, kin])
    q2 = np.sum(q * q, axis=-1)
    if kind == "elastic":
        vals = 4.0 * a * a * np.exp(-q2 / omega)
    elif kind == "shell":
        N = sum(n)
        vals = dsigma_shell(q2, N, kout / kin, a, omega)
        summed = sum(dsigma_state_ground(q, m, a, omega) for m in enumerate_shell(N)) * kout / kin
        meta["shell_check"] = float(np.max(np.abs(summed - vals)) / max(np.max(vals), 1e-300))
    else:
        ff = form_factor(n, n_in, q, params)
        vals = 4.0 * a * a * kout / kin * np.abs(ff) ** 2
    rows = np.column_stack([T, P, vals])
    return CrossSectionTable(("theta", "phi", "dsigma_domega"), rows, float(W @ vals), meta)
