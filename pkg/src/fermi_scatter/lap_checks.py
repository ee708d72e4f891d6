"""Numerical checks of the analytic identities behind the model.

Each check evaluates both sides of an identity along separate code paths and
returns a :class:`CheckReport`.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .charge_kernel import assemble_K, assemble_gamma_ref, gamma_boundary
from .greens import BoundarySide, check_threshold, free_resolvent_gaussian
from .oscillator import (Channel, HermiteBasis, ModelParams, basis_values, eigenfunction_value,
                         enumerate_shell)
from .scattering import boundary_gamma, reference_gamma, sphere_rule, trace_coefficients

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class CheckReport:
    check_id: str
    inputs: dict
    discrepancy: float
    units: str
    tolerance: float
    status: str
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, BoundarySide):
        return v.value
    return v


def _status(discrepancy: float, tolerance: float) -> str:
    return PASS if discrepancy <= tolerance else FAIL


def _gaussian_ft_sq(k2, beta: float):
    """``|f_hat(k)|^2`` for ``f = exp(-beta |x|^2)`` with the unitary transform."""
    return (2.0 * beta) ** -3 * np.exp(-k2 / (2.0 * beta))


def resolvent_pairing(side, nu: float, beta: float, order: int = 96) -> complex:
    """``<f, r0(nu) f>`` for ``f = exp(-beta|x|^2)`` by radial Gauss-Legendre quadrature."""
    u = free_resolvent_gaussian(side, nu, beta)
    R_max = math.sqrt(45.0 / beta)
    x, w = np.polynomial.legendre.leggauss(order)
    R = 0.5 * R_max * (x + 1.0)
    vals = np.array([u(r) for r in R])
    return complex(np.sum(0.5 * R_max * w * 4.0 * math.pi * R * R * np.exp(-beta * R * R) * vals))


# ---------------------------------------------------------------------------
# Agmon trace identity


def agmon_rhs(mu: float, beta: float) -> float:
    """``(pi / (2 sqrt(mu))) int_{|k| = sqrt(mu)} |f_hat|^2 dsigma`` for a centered Gaussian."""
    return math.pi / (2.0 * math.sqrt(mu)) * 4.0 * math.pi * mu * _gaussian_ft_sq(mu, beta)


def check_agmon(mu: float = 1.0, beta: float = 1.0, side="plus", tol: float = 1e-6,
                order: int = 96) -> CheckReport:
    t0 = time.perf_counter()
    side = BoundarySide.parse(side)
    if not (mu > 0 and beta > 0):
        raise ValueError("need mu > 0 and beta > 0")
    lhs = resolvent_pairing(side, mu, beta, order).imag
    sign = 1.0 if side is BoundarySide.PLUS else -1.0
    rhs = sign * agmon_rhs(mu, beta)
    d = abs(lhs - rhs) / abs(rhs)
    return CheckReport("agmon", {"mu": mu, "beta": beta, "side": side.value, "order": order},
                       d, "relative", tol, _status(d, tol), time.perf_counter() - t0,
                       {"lhs": lhs, "rhs": rhs})


# ---------------------------------------------------------------------------
# resolvent identity for Gamma


def check_ufficio(lam1: float = 10.0, lam2: float = 20.0, basis: HermiteBasis | None = None,
                  omega: float = 1.0, factor: float = 10.0) -> CheckReport:
    """Residual of ``Gamma(-lam2) - Gamma(-lam1) + (lam1 - lam2) K(-lam2)``.

    Both Gammas come from the offset extrapolation, ``K`` from the time-domain
    kernel at ``lambda = lam1``.  The check passes when the residual is within
    ``factor`` times the sum of the recorded extrapolation and quadrature errors.
    """
    t0 = time.perf_counter()
    basis = basis or HermiteBasis(4)
    p1 = ModelParams(omega, lam1)
    g1 = assemble_gamma_ref(lam1, basis, p1)
    g2 = g1 if lam2 == lam1 else assemble_gamma_ref(lam2, basis, ModelParams(omega, lam2))
    K = assemble_K(BoundarySide.NEGATIVE_REAL, -lam2, basis, p1)
    R = g2.entries - g1.entries + (lam1 - lam2) * K.entries
    res = float(np.abs(R).max())
    tol = g1.tolerance + g2.tolerance + abs(lam1 - lam2) * K.tolerance
    if lam1 == lam2:
        tol = 0.0
    return CheckReport("ufficio", {"lam1": lam1, "lam2": lam2, "cutoff": basis.cutoff,
                                   "omega": omega},
                       res, "max-entry", factor * tol, _status(res, factor * tol),
                       time.perf_counter() - t0, {"base_tolerance": tol})


# ---------------------------------------------------------------------------
# free spectral density


@dataclass(frozen=True)
class PacketTerm:
    """One channel component ``c exp(-beta |x|^2) phi_n(y)`` of a wave packet."""

    n: tuple
    coefficient: complex = 1.0
    beta: float = 1.0


def _packet(packet) -> list[PacketTerm]:
    out = [p if isinstance(p, PacketTerm) else PacketTerm(*p) for p in packet]
    if len({tuple(p.n) for p in out}) != len(out):
        raise ValueError("packet terms must sit in distinct channels")
    return out


def check_free_density(mu: float, packet: Sequence, omega: float = 1.0, tol: float = 1e-6,
                       angular_order: int = 12) -> CheckReport:
    """``(2 pi i)^-1 <u, (R0+ - R0-) u>`` against the on-shell sum over open channels.

    The left side pairs the packet with the radial resolvent evaluator, the
    right side integrates the analytic Gaussian transforms over the energy shell.
    """
    t0 = time.perf_counter()
    packet = _packet(packet)
    check_threshold(mu, omega)
    lhs = 0.0
    rhs = 0.0
    _, _, W = sphere_rule(angular_order)
    for p in packet:
        nu = mu - omega * sum(p.n)
        if nu <= 0:
            continue   # the Yukawa kernel is real, R0+ = R0- on closed channels
        lhs += abs(p.coefficient) ** 2 * resolvent_pairing("plus", nu, p.beta).imag / math.pi
        k2 = np.full(W.shape, nu)
        rhs += abs(p.coefficient) ** 2 * math.sqrt(nu) / 2.0 * float(W @ _gaussian_ft_sq(k2, p.beta))
    d = abs(lhs - rhs) / abs(rhs) if rhs else abs(lhs)
    return CheckReport("free_density",
                       {"mu": mu, "omega": omega,
                        "packet": [[list(p.n), p.coefficient, p.beta] for p in packet]},
                       d, "relative" if rhs else "absolute", tol, _status(d, tol),
                       time.perf_counter() - t0, {"lhs": lhs, "rhs": rhs})


# ---------------------------------------------------------------------------
# limiting absorption along an epsilon ladder


def default_probes(mu: float, basis: HermiteBasis, params: ModelParams) -> np.ndarray:
    """Traces of open-channel plane waves plus the first basis vectors, as columns."""
    cols = []
    n0 = math.floor(mu / params.omega)
    for N in range(max(n0, -1) + 1):
        for n in enumerate_shell(N)[:2]:
            k = math.sqrt(mu - params.omega * N)
            cols.append(trace_coefficients(Channel((0.0, 0.6 * k, 0.8 * k), n), basis, params))
    eye = np.eye(basis.dim)
    cols += [eye[:, j] for j in range(min(4, basis.dim))]
    return np.array(cols).T


def check_lap_convergence(mu: float = 1.3, alpha: float = 100.0,
                          basis: HermiteBasis | None = None, params: ModelParams | None = None,
                          eps=None, probes=None, tol: float = 1e-4,
                          singular_threshold: float | None = None) -> CheckReport:
    """Solves with ``Gamma(mu + i eps) + alpha`` converge to the plus-rim solve as ``eps -> 0``.

    The gaps along the ladder must decrease monotonically; the last two rungs
    are Richardson-extrapolated (the gap is linear in ``eps``) and the
    extrapolated gap is compared with ``tol``.  If the smallest singular value
    of ``Gamma_plus(mu) + alpha`` falls below ``singular_threshold`` the check
    fails with ``details["singular_flag"] = True``.
    """
    t0 = time.perf_counter()
    basis = basis or HermiteBasis(4)
    params = (params or ModelParams()).with_alpha(alpha)
    eps = np.asarray(eps if eps is not None else 0.1 * 2.0 ** -np.arange(5), dtype=float)
    if np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValueError("epsilon ladder must be positive and strictly decreasing")
    if singular_threshold is None:
        singular_threshold = 1e-3 * max(1.0, abs(alpha))
    B = probes if probes is not None else default_probes(mu, basis, params)
    B = np.asarray(B, dtype=complex).reshape(basis.dim, -1)
    inputs = {"mu": mu, "alpha": alpha, "cutoff": basis.cutoff, "lam": params.lam,
              "omega": params.omega, "eps": eps.tolist(), "n_probes": B.shape[1]}

    Gp = boundary_gamma("plus", mu, params, basis)
    A = Gp.entries + alpha * np.eye(basis.dim)
    smin = float(np.linalg.svd(A, compute_uv=False)[-1])
    if smin < singular_threshold:
        return CheckReport("lap_convergence", inputs, math.inf, "relative", tol, FAIL,
                           time.perf_counter() - t0,
                           {"singular_flag": True, "smin": smin,
                            "singular_threshold": singular_threshold})
    X = np.linalg.solve(A, B)
    ref = np.linalg.norm(X)
    gref = reference_gamma(params, basis)
    sols, gaps = [], []
    for e in eps:
        z = complex(mu, e)
        G = gamma_boundary(BoundarySide.OFF_AXIS, z, basis, params, gref)
        Xe = np.linalg.solve(G.entries + alpha * np.eye(basis.dim), B)
        sols.append(Xe)
        gaps.append(float(np.linalg.norm(Xe - X) / ref))
    ratio = eps[-2] / eps[-1]
    X_ex = (ratio * sols[-1] - sols[-2]) / (ratio - 1.0)
    gap_ex = float(np.linalg.norm(X_ex - X) / ref)
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = monotone and gap_ex <= tol
    return CheckReport("lap_convergence", inputs, gap_ex, "relative", tol, PASS if ok else FAIL,
                       time.perf_counter() - t0,
                       {"singular_flag": False, "smin": smin, "gaps": gaps,
                        "monotone": monotone, "extrapolated_gap": gap_ex})


# ---------------------------------------------------------------------------
# spectral density of the interacting resolvent (best effort)


def _trace_resolvent(side, term: PacketTerm, basis: HermiteBasis, omega: float, mu: float,
                     radial_order: int = 64) -> np.ndarray:
    """Coefficients ``<phi_a, Tr R0(mu) u>`` for a single packet term.

    The restriction to ``x = y`` of ``phi_n(y) (r0 g)(x)`` is integrated in
    spherical coordinates: the angular part is polynomial, the radial part
    uses the resolvent evaluator.
    """
    nu = mu - omega * sum(term.n)
    rside = side if nu > 0 else BoundarySide.NEGATIVE_REAL
    u = free_resolvent_gaussian(rside, nu, term.beta)
    R_max = math.sqrt(60.0 / min(term.beta, 0.5 * omega))
    x, w = np.polynomial.legendre.leggauss(radial_order)
    R = 0.5 * R_max * (x + 1.0)
    wr = 0.5 * R_max * w * R * R * np.array([u(r) for r in R])
    T, P, W = sphere_rule(basis.cutoff + sum(term.n) // 2 + 2)
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    pts = (R[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    phi_a = basis_values(basis, pts, omega).reshape(basis.dim, R.size, -1)
    phi_n = eigenfunction_value(term.n, pts, ModelParams(omega)).reshape(R.size, -1)
    return term.coefficient * np.einsum("arw,rw,w,r->a", phi_a, phi_n, W, wr)


def check_volta(mu: float, packet: Sequence, alpha: float = 100.0,
                basis: HermiteBasis | None = None, params: ModelParams | None = None,
                tol: float = 1e-2, angular_order: int = 10, budget_s: float = 600.0) -> CheckReport:
    """Spectral density of the full resolvent against the generalized-eigenfunction sum.

    Left side: ``(1/pi) Im <u, R+(mu) u>`` with ``R = R0 + G (Gamma + alpha)^-1 Tr R0``.
    Right side: ``sum_open (|k_n|/2) int |<Phi_+(k_n, n), u>|^2 dOmega``.
    Exceeding ``budget_s`` yields an inconclusive report.
    """
    t0 = time.perf_counter()
    basis = basis or HermiteBasis(4)
    params = (params or ModelParams()).with_alpha(alpha)
    omega = params.omega
    packet = _packet(packet)
    check_threshold(mu, omega)
    inputs = {"mu": mu, "alpha": alpha, "cutoff": basis.cutoff, "lam": params.lam,
              "omega": omega, "packet": [[list(p.n), p.coefficient, p.beta] for p in packet]}

    w_plus = sum(_trace_resolvent(BoundarySide.PLUS, p, basis, omega, mu) for p in packet)
    w_minus = sum(_trace_resolvent(BoundarySide.MINUS, p, basis, omega, mu) for p in packet)
    Gp = boundary_gamma("plus", mu, params, basis)
    A = Gp.entries + alpha * np.eye(basis.dim)
    lhs = sum(abs(p.coefficient) ** 2 * resolvent_pairing("plus", mu - omega * sum(p.n), p.beta).imag
              for p in packet if mu > omega * sum(p.n)) / math.pi
    lhs += np.vdot(w_minus, np.linalg.solve(A, w_plus)).imag / math.pi

    T, P, W = sphere_rule(angular_order)
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    by_n = {tuple(p.n): p for p in packet}
    rhs = 0.0
    for N in range(math.floor(mu / omega) + 1):
        k = math.sqrt(mu - omega * N)
        for n in enumerate_shell(N):
            vals = np.empty(len(W), dtype=complex)
            for j, d in enumerate(dirs):
                if time.perf_counter() - t0 > budget_s:
                    return CheckReport("volta", inputs, math.nan, "relative", tol, INCONCLUSIVE,
                                       time.perf_counter() - t0, {"reason": "budget exceeded"})
                b = trace_coefficients(Channel(tuple(k * d), n), basis, params)
                xi = np.linalg.solve(A, b)
                free = 0j
                if tuple(n) in by_n:
                    p = by_n[tuple(n)]
                    free = p.coefficient * math.sqrt(_gaussian_ft_sq(k * k, p.beta))
                vals[j] = free + np.vdot(xi, w_minus)
            rhs += k / 2.0 * float(W @ np.abs(vals) ** 2)
    d = abs(lhs - rhs) / abs(rhs) if rhs else abs(lhs)
    return CheckReport("volta", inputs, float(d), "relative", tol, _status(d, tol),
                       time.perf_counter() - t0, {"lhs": float(lhs), "rhs": rhs})
