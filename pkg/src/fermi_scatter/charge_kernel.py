"""Boundary operators on the coincidence hyperplane ``x = y``.

With the resolvent written as a Laplace transform of the heat semigroup, every
matrix element in the oscillator basis is a one-dimensional time integral of
products of per-axis Gaussian integrals (see :mod:`fermi_scatter._gauss`):

* ``K(z)`` has the time weight ``(exp(z t) - exp(-lambda t)) / (lambda + z)``;
  channels that are open at ``Re z`` are evaluated in momentum space instead,
  where the outgoing prescription is an explicit pole term.
* ``Gamma(-lambda)`` is the finite part of the single-layer potential at the
  hyperplane, obtained by extrapolating the potential to zero offset.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _gauss
from .greens import (DEFAULT_THRESHOLD_WINDOW, BoundarySide, ChannelSplit, check_threshold,
                     channel_momentum, threshold_distance)
from .oscillator import (CRAMER, HermiteBasis, ModelParams, eigenfunction_1d, enumerate_shell,
                         form_factor_coeffs)

log = logging.getLogger(__name__)

C_SING_EXPECTED = 1.0 / (8.0 * math.pi)
DEFAULT_TAIL_TOL = 1e-8
DEFAULT_QUAD_TOL = 1e-6
DEFAULT_COND_MAX = 1e10


class QuadratureError(RuntimeError):
    pass


class ExtrapolationError(RuntimeError):
    pass


class BasisMismatchError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    """``Gamma + alpha`` is numerically singular: the energy is a candidate point of N."""

    def __init__(self, message: str, smin: float, cond: float, mu: float | None = None):
        super().__init__(message)
        self.smin = smin
        self.cond = cond
        self.mu = mu


@dataclass(frozen=True)
class KernelMatrix:
    """Dense boundary-operator matrix in the global basis order."""

    entries: np.ndarray
    tag: str
    energy: complex
    side: BoundarySide
    cutoff: int
    quad_order: int
    lam: float
    omega: float
    tail_bound: float = 0.0
    tolerance: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    TAGS = ("K", "Gamma_ref", "Gamma_boundary")

    def __post_init__(self):
        if self.tag not in self.TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        a = np.array(self.entries, dtype=complex)
        dim = HermiteBasis(self.cutoff).dim
        if a.shape != (dim, dim):
            raise BasisMismatchError(f"matrix shape {a.shape} does not match basis dim {dim}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "side", BoundarySide.parse(self.side))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def conj_transpose(self) -> "KernelMatrix":
        flip = {BoundarySide.PLUS: BoundarySide.MINUS, BoundarySide.MINUS: BoundarySide.PLUS}
        return KernelMatrix(self.entries.conj().T, self.tag, complex(self.energy).conjugate(),
                            flip.get(self.side, self.side), self.cutoff, self.quad_order,
                            self.lam, self.omega, self.tail_bound, self.tolerance, dict(self.info))


@dataclass(frozen=True)
class ChargeVector:
    coefficients: np.ndarray
    cutoff: int
    residual: float = 0.0

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).ravel()
        if c.size != HermiteBasis(self.cutoff).dim:
            raise BasisMismatchError("coefficient count does not match the basis")
        if not np.all(np.isfinite(c)):
            raise ValueError("charge coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def conj(self) -> "ChargeVector":
        return ChargeVector(self.coefficients.conj(), self.cutoff, self.residual)


def _pair_product(per_axis, idx):
    """Tensor product over axes: out[..., a, b] = prod_i X_i[..., a_i, b_i]."""
    ia, ib = idx[:, None, :], idx[None, :, :]
    out = per_axis[0][..., ia[..., 0], ib[..., 0]]
    for i in (1, 2):
        out = out * per_axis[i][..., ia[..., i], ib[..., i]]
    return out


# ---------------------------------------------------------------------------
# K(z): closed channels in the time domain


def _t_split(n0: int, omega: float) -> float:
    # below t0 the full Mehler sum minus the open shells is used; above it the
    # closed shells are summed explicitly, since exp(mu t) would amplify the
    # cancellation in the difference
    return min(2.0, 8.0 / (n0 + 1)) / omega if n0 >= 0 else math.inf


@lru_cache(maxsize=16)
def _closed_time_table(cutoff: int, omega: float, n0: int, per_unit: float, order: int):
    """Nodes, weights and z-independent integrand of the closed channels.

    ``K_closed(z) = sum_j w_j (exp((z - s) t_j) - exp(-(lam + s) t_j))/(lam + z) H_j``
    with ``s = omega (n0 + 1)`` and the rescaled, bounded integrand
    ``H(t) = sum_{|n| > n0} exp(-omega (|n| - n0 - 1) t) prod_i V_i(t)``.
    """
    idx = HermiteBasis(cutoff).index_array
    t0 = _t_split(n0, omega)
    shift = omega * (n0 + 1)
    # long enough for the slowest admissible decay rate omega * window
    t_hi = 60.0 / (omega * DEFAULT_THRESHOLD_WINDOW)
    t, w = _gauss.log_time_rule(1e-16 / omega, t_hi, per_unit, order,
                                breaks=(t0,) if math.isfinite(t0) else ())
    dim = idx.shape[0]
    H = np.empty((t.size, dim, dim))
    small = t < t0
    chunk = 64
    for s in range(0, t.size, chunk):
        sl = slice(s, min(s + chunk, t.size))
        tt = t[sl]
        if small[sl].all():
            W = _gauss.mehler_pair(tt, 0.0, cutoff, omega)
            Hc = _pair_product([W, W, W], idx)
            if n0 >= 0:
                S = _shell_terms(tt, idx, cutoff, omega, 0, n0)
                decay = np.exp(-omega * np.outer(tt, np.arange(n0 + 1)))
                Hc = Hc - np.einsum("tabn,tn->tab", S, decay)
            Hc = Hc * np.exp(shift * tt)[:, None, None]
        else:
            nmax = n0 + 1 + math.ceil(40.0 / (omega * tt.min()))
            S = _shell_terms(tt, idx, cutoff, omega, n0 + 1, nmax)
            decay = np.exp(-omega * np.outer(tt, np.arange(nmax - n0)))      # (T, N)
            Hc = np.einsum("tabn,tn->tab", S, decay)
        H[sl] = Hc
    H.setflags(write=False)
    return t, w, H


def _shell_terms(t, idx, cutoff, omega, nmin, nmax):
    """S[t, a, b, N - nmin] = sum_{|n| = N} prod_i V(t)[a_i, n_i, b_i], without time decay."""
    V = _gauss.shell_pair(t, cutoff, nmax, omega)                  # (T, a, k, b)
    ia, ib = idx[:, None, :], idx[None, :, :]
    per_axis = [np.moveaxis(V, 2, -1)[:, ia[..., i], ib[..., i], :] for i in range(3)]
    return _gauss.shell_convolve(per_axis, nmin, nmax)


def _time_weight(z: complex, lam: float, t, shift: float = 0.0):
    """(exp((z - shift) t) - exp(-(lam + shift) t)) / (lam + z) without cancellation or overflow."""
    d = z + lam
    x = d * t
    out = np.empty(t.shape, dtype=complex)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = np.exp(-(lam + shift) * t[small]) * t[small] * (1 + xs / 2 + xs * xs / 6 + xs ** 3 / 24)
    mid = ~small & (x.real < 30.0)
    out[mid] = np.exp(-(lam + shift) * t[mid]) * np.expm1(x[mid]) / d
    big = ~small & ~mid
    with np.errstate(under="ignore"):
        out[big] = (np.exp((z - shift) * t[big]) - np.exp(-(lam + shift) * t[big])) / d
    return out


# ---------------------------------------------------------------------------
# K(z): open channels in momentum space


@lru_cache(maxsize=None)
def _axis_moment_table(cutoff: int, nmax: int, omega: float):
    """E[a, n, b, m] = d_{2m} (2m-1)!! with conj(F_an(p)) F_nb(p) = exp(-p^2/omega) sum_l d_l p^l."""
    mmax = cutoff + nmax
    E = np.zeros((cutoff + 1, nmax + 1, cutoff + 1, mmax + 1))
    dfact = np.array([_double_factorial(2 * m - 1) for m in range(mmax + 1)])
    for a in range(cutoff + 1):
        for n in range(nmax + 1):
            ca = np.conj(form_factor_coeffs(a, n, omega))
            for b in range(cutoff + 1):
                d = np.convolve(ca, form_factor_coeffs(n, b, omega))
                ev = d[::2]
                E[a, n, b, :ev.size] = ev.real * dfact[:ev.size]
    E.setflags(write=False)
    return E


def _double_factorial(k: int) -> float:
    return float(math.prod(range(k, 0, -2))) if k > 0 else 1.0


@lru_cache(maxsize=None)
def _radial_rule(omega: float, order: int = 240):
    x, w = np.polynomial.legendre.leggauss(order)
    pmax = 14.0 * math.sqrt(omega)
    return 0.5 * pmax * (x + 1), 0.5 * pmax * w, pmax


def _radial_integrals(mmax: int, c: complex, b2: float, omega: float) -> np.ndarray:
    """R_m = int_0^inf p^(2m+2) exp(-p^2/omega) / ((p^2 - c)(p^2 + b2)) dp, Im c >= 0 branch.

    The pole at p = sqrt(c) is removed by subtracting g(sqrt(c)); the constant
    then integrates to i pi / (2 sqrt(c)) on [0, inf).
    """
    p, w, pmax = _radial_rule(omega)
    m = np.arange(mmax + 1)[:, None]
    s = channel_momentum(c)

    def g(q):
        return q ** (2 * m + 2) * np.exp(-q * q / omega) / (q * q + b2)

    if c.real <= 0 or abs(c.imag) > 0.5 * abs(c):
        return (g(p) / (p * p - c)) @ w
    gs = g(s)
    body = ((g(p) - gs) / (p * p - c)) @ w
    # tail of the subtracted constant over [pmax, inf)
    tail = -gs[:, 0] * np.log((pmax + s) / (pmax - s)) / (2 * s)
    return body + tail + gs[:, 0] * 1j * math.pi / (2 * s)


def _open_part(z: complex, lam: float, cutoff: int, omega: float, n0: int) -> np.ndarray:
    idx = HermiteBasis(cutoff).index_array
    E = _axis_moment_table(cutoff, n0, omega)
    mtot = 3 * (cutoff + n0)
    dfact = np.array([_double_factorial(2 * M + 1) for M in range(mtot + 1)])
    pref = 4.0 * math.pi / (2.0 * math.pi) ** 3
    ia, ib = idx[:, None, :], idx[None, :, :]
    out = np.zeros((idx.shape[0],) * 2, dtype=complex)
    for N in range(n0 + 1):
        S = 0.0
        for n in enumerate_shell(N):
            per_axis = [E[ia[..., i], n[i], ib[..., i], :] for i in range(3)]
            S = S + _gauss.shell_convolve(per_axis, 0, mtot)
        R = _radial_integrals(mtot, complex(z) - omega * N, lam + omega * N, omega)
        out += pref * (S @ (R / dfact))
    return out


# ---------------------------------------------------------------------------


def _resolve_z(side: BoundarySide, mu) -> complex:
    side = BoundarySide.parse(side)
    z = complex(mu)
    if side is BoundarySide.OFF_AXIS:
        if z.imag == 0:
            raise ValueError("off-axis side requires a complex energy")
        return z
    if z.imag != 0:
        raise ValueError(f"{side.value} side requires a real energy")
    if side is BoundarySide.NEGATIVE_REAL and z.real > 0:
        raise ValueError("negative-real side requires mu <= 0")
    return z


def _k_matrix(z: complex, lam: float, cutoff: int, omega: float,
              per_unit: float = 1.0, order: int = 12) -> np.ndarray:
    """K on the upper rim (or at complex z with Im z > 0, or real z below zero)."""
    n0 = max(math.floor(z.real / omega), -1)
    t, w, H = _closed_time_table(cutoff, omega, n0, per_unit, order)
    out = np.tensordot(w * _time_weight(z, lam, t, omega * (n0 + 1)), H, axes=1)
    if n0 >= 0:
        out = out + _open_part(z, lam, cutoff, omega, n0)
    return out


def assemble_K(side: BoundarySide, mu, basis: HermiteBasis, params: ModelParams,
               tail_tol: float = DEFAULT_TAIL_TOL, quad_tol: float = DEFAULT_QUAD_TOL,
               allow_threshold: bool = False) -> KernelMatrix:
    """Matrix of ``K(mu) = G(-lambda)^* G(mu)`` in the oscillator basis.

    ``side`` selects the rim (``PLUS``/``MINUS``), a complex energy
    (``OFF_AXIS``) or the real half-line below zero (``NEGATIVE_REAL``).
    The time quadrature is run at two resolutions; if they disagree beyond
    ``quad_tol`` (relative to the matrix norm) a :class:`QuadratureError` is raised.
    """
    side = BoundarySide.parse(side)
    z = _resolve_z(side, mu)
    omega, lam = params.omega, params.lam
    if side in (BoundarySide.PLUS, BoundarySide.MINUS):
        check_threshold(z.real, omega, allow=allow_threshold)
    # the lower rim and Im z < 0 follow from the upper rim by conjugation
    lower = side is BoundarySide.MINUS or z.imag < 0
    zz = z.conjugate() if lower else z
    fine = _k_matrix(zz, lam, basis.cutoff, omega, per_unit=2.0)
    coarse = _k_matrix(zz, lam, basis.cutoff, omega, per_unit=1.0)
    scale = max(np.abs(fine).max(), 1e-300)
    qerr = float(np.abs(fine - coarse).max())
    if qerr > quad_tol * scale:
        raise QuadratureError(f"time quadrature unconverged: {qerr:.3g} vs norm {scale:.3g}")
    if lower:
        fine = fine.conj()
    n0 = max(math.floor(z.real / omega), -1)
    return KernelMatrix(fine, "K", z, side, basis.cutoff, basis.quad_order, lam, omega,
                        tail_bound=float(np.finfo(float).eps * scale), tolerance=qerr,
                        info={"n0": n0, "quad_err": qerr})


# ---------------------------------------------------------------------------
# pointwise kernel


def kernel_K_value(side: BoundarySide, mu: float, y1, y2, params: ModelParams,
                   split: ChannelSplit | None = None, tail_tol: float = DEFAULT_TAIL_TOL,
                   part: str = "full", allow_threshold: bool = False):
    """Kernel of ``K(mu)`` between hyperplane points ``y1 != y2``.

    Returns ``(value, tail_bound)``.  ``part="low"`` keeps only the open
    channels ``|n| <= n0``; ``part="full"`` adds the closed series, truncated
    once the remainder bound is below ``tail_tol``.
    """
    side = BoundarySide.parse(side)
    if side not in (BoundarySide.PLUS, BoundarySide.MINUS):
        raise ValueError("kernel_K_value is defined on the plus and minus rims")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    r = float(np.linalg.norm(y1 - y2))
    if r == 0.0:
        raise ValueError("coincident points: the kernel is evaluated only off the diagonal")
    omega, lam = params.omega, params.lam
    check_threshold(mu, omega, allow=allow_threshold)
    split = split or ChannelSplit(mu, omega)
    n0 = split.n0
    amp = (CRAMER * math.pi ** -0.25) ** 6 * (omega / 2.0) ** 1.5 / (4 * math.pi * r * (lam + mu))

    def factor(N):
        b = math.sqrt(lam + omega * N)
        nu = mu - omega * N
        head = np.exp(1j * math.sqrt(nu) * r) if nu >= 0 else math.exp(-math.sqrt(-nu) * r)
        return (head - math.exp(-b * r)) / (4.0 * math.pi * r * (lam + mu))

    if part == "low":
        nmax = n0
        bound = 0.0
    elif part == "full":
        nmax = max(n0, 0)
        bound = math.inf
        while bound > tail_tol:
            nmax += max(8, nmax // 2)
            bound = sum((N + 1) * (N + 2) / 2 * amp * 2 * math.exp(-math.sqrt(omega * N - mu) * r)
                        for N in range(nmax + 1, nmax + 1 + 40 * (nmax + 1)))
    else:
        raise ValueError("part must be 'low' or 'full'")
    if nmax < 0:
        return 0j, bound
    per_axis = [eigenfunction_1d(nmax, y1[i], omega) * eigenfunction_1d(nmax, y2[i], omega)
                for i in range(3)]
    S = _gauss.shell_convolve(per_axis, 0, nmax)
    val = sum(S[N] * factor(N) for N in range(nmax + 1))
    if side is BoundarySide.MINUS:
        val = np.conj(val)
    return complex(val), float(bound)


# ---------------------------------------------------------------------------
# Gamma(-lambda)


def _default_directions() -> np.ndarray:
    d = [np.eye(3)[i] for i in range(3)]
    d += [np.array(s) / math.sqrt(3.0) for s in ((1, 1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1))]
    return np.array(d)


def default_radii(lam: float, count: int = 6) -> np.ndarray:
    return 0.125 / math.sqrt(lam) * 2.0 ** -np.arange(count)


def _offset_potential(r: float, e, lam: float, cutoff: int, omega: float,
                      per_unit: float = 2.0, order: int = 12) -> np.ndarray:
    """<phi_a, (G(-lam) phi_b)(y + r e, y)> integrated over y."""
    idx = HermiteBasis(cutoff).index_array
    t, w = _gauss.log_time_rule(r * r / 1000.0, 45.0 / lam, per_unit, order)
    W = [_gauss.mehler_pair(t, r * e[i], cutoff, omega) for i in range(3)]
    F = np.tensordot(w * np.exp(-lam * t), _pair_product(W, idx), axes=1)
    return 0.5 * (F + F.T)   # average of +e and -e


@dataclass(frozen=True)
class GammaExtrapolation:
    c_sing: float
    c_sing_spread: float
    fit_error: float
    degree: int


def assemble_gamma_ref(lam: float, basis: HermiteBasis, params: ModelParams,
                       radii=None, directions=None, degree: int = 4,
                       tol: float = 1e-6) -> KernelMatrix:
    """``Gamma(-lambda)`` as the finite part of the potential at the hyperplane.

    For every pair ``(a, b)`` the averaged potential ``F(r)`` at offset ``r`` is
    fitted as ``r F(r) = c + g0 r + g1 r^2 + ...``; the singular coefficient
    ``c`` is measured (and should equal ``1/(8 pi)`` on the diagonal), and
    ``Gamma = -g0``.  The error estimate compares fits of degree ``degree`` and
    ``degree - 1``.
    """
    omega = params.omega
    radii = default_radii(lam) if radii is None else np.asarray(radii, dtype=float)
    directions = _default_directions() if directions is None else np.asarray(directions, float)
    if radii.size < degree + 1:
        raise ValueError("need more radii than the fit degree")
    F = np.zeros((radii.size, basis.dim, basis.dim))
    for j, r in enumerate(radii):
        for e in directions:
            F[j] += _offset_potential(r, e / np.linalg.norm(e), lam, basis.cutoff, omega)
        F[j] /= len(directions)
    y = (radii[:, None, None] * F).reshape(radii.size, -1)

    def fit(deg):
        V = np.vander(radii, deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, y, rcond=None)
        return coef

    hi, lo = fit(degree), fit(degree - 1)
    gamma = -hi[1].reshape(basis.dim, basis.dim)
    err = float(np.abs(hi[1] - lo[1]).max())
    csing = np.diag(hi[0].reshape(basis.dim, basis.dim))
    off = hi[0].reshape(basis.dim, basis.dim) - np.diag(csing)
    c_mean = float(csing.mean())
    spread = float(max(np.abs(csing - c_mean).max(), np.abs(off).max()))
    gamma = 0.5 * (gamma + gamma.T)
    if err > tol * max(1.0, np.abs(gamma).max()):
        raise ExtrapolationError(f"radius extrapolation unconverged (error {err:.3g})")
    meta = GammaExtrapolation(c_mean, spread, err, degree)
    return KernelMatrix(gamma, "Gamma_ref", complex(-lam), BoundarySide.NEGATIVE_REAL,
                        basis.cutoff, basis.quad_order, lam, omega, tolerance=err,
                        info={"c_sing": c_mean, "c_sing_spread": spread, "fit_error": err,
                              "radii": radii.tolist(), "directions": len(directions),
                              "extrapolation": meta})


def gamma_regularized(lam: float, basis: HermiteBasis, params: ModelParams,
                      per_unit: float = 2.0) -> np.ndarray:
    """``Gamma(-lambda)`` from the subtracted heat integral at zero offset.

    ``int_0^inf [ delta_ab (8 pi t)^-3/2 - exp(-lam t) <phi_a, W_t phi_b> ] dt``.
    Used as an independent cross-check of :func:`assemble_gamma_ref`.
    """
    idx = basis.index_array
    t_lo, t_hi = 1e-16 / lam, 45.0 / lam
    t, w = _gauss.log_time_rule(t_lo, t_hi, per_unit, 12)
    W = _gauss.mehler_pair(t, 0.0, basis.cutoff, params.omega)
    P = _pair_product([W, W, W], idx)
    d = (8.0 * math.pi * t)[:, None, None] ** -1.5 * np.eye(basis.dim) - np.exp(-lam * t)[:, None, None] * P
    G = np.tensordot(w, d, axes=1)
    # the integrand behaves like t^-1/2 below t_lo; past t_hi only the singular term survives
    G += 2.0 * t[0] * d[0]
    G += 2.0 * (8.0 * math.pi) ** -1.5 / math.sqrt(t_hi) * np.eye(basis.dim)
    return G


def gamma_boundary(side: BoundarySide, mu, basis: HermiteBasis, params: ModelParams,
                   gamma_ref: KernelMatrix, tail_tol: float = DEFAULT_TAIL_TOL,
                   K: KernelMatrix | None = None, allow_threshold: bool = False) -> KernelMatrix:
    """``Gamma(mu) = Gamma(-lambda) - (lambda + mu) K(mu)`` on the requested side."""
    side = BoundarySide.parse(side)
    if gamma_ref.cutoff != basis.cutoff or gamma_ref.tag != "Gamma_ref":
        raise BasisMismatchError("gamma_ref was assembled on a different basis")
    if not math.isclose(gamma_ref.lam, params.lam, rel_tol=1e-12):
        raise BasisMismatchError("gamma_ref was assembled at a different lambda")
    if K is None:
        K = assemble_K(side, mu, basis, params, tail_tol, allow_threshold=allow_threshold)
    elif K.cutoff != basis.cutoff:
        raise BasisMismatchError("K was assembled on a different basis")
    z = complex(mu)
    G = gamma_ref.entries - (params.lam + z) * K.entries
    return KernelMatrix(G, "Gamma_boundary", z, side, basis.cutoff, basis.quad_order,
                        params.lam, params.omega,
                        tail_bound=abs(params.lam + z) * K.tail_bound,
                        tolerance=gamma_ref.tolerance + abs(params.lam + z) * K.tolerance,
                        info={"parents": ("Gamma_ref", "K"), "K_energy": complex(K.energy)})


# ---------------------------------------------------------------------------
# solves and scans


@dataclass(frozen=True)
class SolveResult:
    charge: ChargeVector
    residual: float
    smin: float
    cond: float


def solve_gamma_system(gamma: KernelMatrix, alpha: float, b, cond_max: float = DEFAULT_COND_MAX,
                       smin_min: float = 0.0) -> SolveResult:
    """Solve ``(Gamma + alpha) x = b``; a near-singular matrix raises :class:`SingularSystemError`."""
    coeffs = b.coefficients if isinstance(b, ChargeVector) else np.asarray(b, dtype=complex)
    A = gamma.entries + alpha * np.eye(gamma.dim)
    s = np.linalg.svd(A, compute_uv=False)
    smin, cond = float(s[-1]), float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    if cond > cond_max or smin <= smin_min:
        raise SingularSystemError(
            f"Gamma + alpha is near-singular at mu = {gamma.energy}: smin {smin:.3g}, cond {cond:.3g}",
            smin, cond, float(np.real(gamma.energy)))
    x = np.linalg.solve(A, coeffs)
    res = float(np.linalg.norm(A @ x - coeffs))
    return SolveResult(ChargeVector(x, gamma.cutoff, res), res, smin, cond)


@dataclass(frozen=True)
class ScanPoint:
    mu: float
    smin: float
    flagged: bool = False


def scan_singular_set(mu_grid, alpha: float, basis: HermiteBasis, params: ModelParams,
                      gamma_ref: KernelMatrix | None = None, threshold: float | None = None,
                      window: float = DEFAULT_THRESHOLD_WINDOW) -> list[ScanPoint]:
    """Smallest singular value of ``Gamma_plus(mu) + alpha`` along ``mu_grid``.

    Grid points inside the threshold window are dropped.  Interior local minima
    with ``smin < threshold`` are flagged as candidate points of the singular
    set; the default threshold is ``1e-3 * max(1, |alpha|)``.
    """
    if gamma_ref is None:
        gamma_ref = assemble_gamma_ref(params.lam, basis, params)
    if threshold is None:
        threshold = 1e-3 * max(1.0, abs(alpha))
    pts = []
    for mu in np.asarray(mu_grid, dtype=float):
        if threshold_distance(mu, params.omega) <= window:
            continue
        G = gamma_boundary(BoundarySide.PLUS, mu, basis, params, gamma_ref)
        s = np.linalg.svd(G.entries + alpha * np.eye(G.dim), compute_uv=False)
        pts.append([float(mu), float(s[-1])])
    out = []
    for i, (mu, s) in enumerate(pts):
        interior = 0 < i < len(pts) - 1
        is_min = interior and s <= pts[i - 1][1] and s <= pts[i + 1][1]
        out.append(ScanPoint(mu, s, bool(is_min and s < threshold)))
    return out


def detect_lambda0(basis: HermiteBasis, params: ModelParams, lam_start: float | None = None,
                   cond_max: float = 1e8, max_doublings: int = 12):
    """Double lambda until ``Gamma(-lambda) + alpha`` is positive definite and well conditioned.

    Returns ``(lambda, gamma_ref)`` with ``params.lambda_checked`` semantics:
    the returned lambda is the first one in the doubling sequence that passes.
    """
    lam = lam_start or max(params.omega, 1.0)
    for _ in range(max_doublings):
        G = assemble_gamma_ref(lam, basis, ModelParams(params.omega, lam, params.alpha))
        ev = np.linalg.eigvalsh(G.entries.real + params.alpha * np.eye(G.dim))
        if ev[0] > 0 and ev[-1] / ev[0] < cond_max:
            return lam, G
        lam *= 2.0
    raise RuntimeError("no admissible lambda found by doubling")
