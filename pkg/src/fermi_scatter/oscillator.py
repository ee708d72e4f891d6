"""Three-dimensional oscillator basis: multi-indices, eigenfunctions and form factors.

Units: hbar = 1 and both particle masses 1/2, so the proton Hamiltonian is
``-Laplacian + omega**2 |y|**2 / 4 - 3 omega / 2`` with spectrum ``omega |n|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, NamedTuple, Sequence

import numpy as np

# H_n(x) overflows float64 for moderate |x| once n is large; beyond this
# degree callers should use normalized Hermite functions instead.
HERMITE_SAFE_DEGREE = 150

# Cramer's bound |psi_n(x)| <= CRAMER * pi**(-1/4) for normalized Hermite functions.
CRAMER = 1.086435


class HermiteOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical and renormalization constants of the model.

    Parameters
    ----------
    omega : float
        Oscillator frequency.
    lam : float
        Renormalization parameter lambda (energy).  Must exceed the operational
        threshold found by :func:`fermi_scatter.charge_kernel.detect_lambda0`.
    alpha : float
        Inverse scattering-length parameter of the boundary condition.
    """

    omega: float = 1.0
    lam: float = 10.0
    alpha: float = 100.0
    lambda_checked: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be a finite real number")

    def with_alpha(self, alpha: float) -> "ModelParams":
        return ModelParams(self.omega, self.lam, alpha, self.lambda_checked)


class MultiIndex(NamedTuple):
    n1: int
    n2: int
    n3: int

    @property
    def total(self) -> int:
        return self.n1 + self.n2 + self.n3


@dataclass(frozen=True)
class Channel:
    """Scattering channel: neutron momentum ``k`` and oscillator state ``n``."""

    k: tuple
    n: MultiIndex

    def __post_init__(self):
        k = tuple(float(c) for c in self.k)
        if len(k) != 3:
            raise ValueError("k must be a 3-vector")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "n", MultiIndex(*self.n))

    @property
    def kvec(self) -> np.ndarray:
        return np.asarray(self.k)

    def energy(self, omega: float) -> float:
        return float(np.dot(self.k, self.k)) + omega * self.n.total

    def is_open(self, mu: float, omega: float) -> bool:
        return omega * self.n.total < mu


def shell_size(N: int) -> int:
    return (N + 1) * (N + 2) // 2


def enumerate_shell(N: int) -> list[MultiIndex]:
    """All multi-indices with ``n1 + n2 + n3 == N`` in lexicographic order."""
    if N < 0:
        raise ValueError("shell degree must be nonnegative")
    return [MultiIndex(i, j, N - i - j) for i in range(N + 1) for j in range(N - i + 1)]


def iter_basis(cutoff: int) -> Iterator[MultiIndex]:
    for N in range(cutoff + 1):
        yield from enumerate_shell(N)


@dataclass(frozen=True)
class HermiteBasis:
    """Truncated oscillator basis ``{phi_n : |n| <= cutoff}``.

    The global ordering is shell by shell, lexicographic inside each shell.
    """

    cutoff: int
    quad_order: int = 0

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        q = self.quad_order or 2 * self.cutoff + 2
        if q < 2 * self.cutoff + 2:
            raise ValueError("quadrature order must be at least 2*cutoff + 2")
        object.__setattr__(self, "quad_order", q)

    @property
    def indices(self) -> list[MultiIndex]:
        return list(iter_basis(self.cutoff))

    @property
    def dim(self) -> int:
        return sum(shell_size(N) for N in range(self.cutoff + 1))

    @property
    def index_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(-1, 3)

    def position(self, n: Sequence[int]) -> int:
        return self.indices.index(MultiIndex(*n))


def hermite_poly(n: int, x):
    """Physicists' Hermite polynomial by the three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    if n > HERMITE_SAFE_DEGREE:
        raise HermiteOverflowError(
            f"H_{n} exceeds the safe degree {HERMITE_SAFE_DEGREE}; use hermite_functions")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), 2.0 * x
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h if h.ndim else float(h)


def hermite_functions(nmax: int, xi):
    """Normalized Hermite polynomials ``pi**-1/4 (2**k k!)**-1/2 H_k(xi)``, k <= nmax.

    The Gaussian factor is *not* included, so the recurrence stays stable and
    works for complex arguments.  Returns an array of shape ``(nmax+1,) + xi.shape``.
    """
    xi = np.asarray(xi)
    out = np.empty((nmax + 1,) + xi.shape, dtype=np.result_type(xi, float))
    out[0] = np.pi ** -0.25
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for k in range(1, nmax):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * xi * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def eigenfunction_1d(nmax: int, y, omega: float) -> np.ndarray:
    """Values of the 1D eigenfunctions phi_k(y) for k <= nmax."""
    y = np.asarray(y, dtype=float)
    xi = math.sqrt(omega / 2.0) * y
    return (omega / 2.0) ** 0.25 * hermite_functions(nmax, xi) * np.exp(-0.5 * xi**2)


def eigenfunction_value(n: Sequence[int], y, params: ModelParams) -> float:
    """phi_n(y) as a product of 1D oscillator eigenfunctions."""
    y = np.asarray(y, dtype=float)
    val = 1.0
    for i in range(3):
        val = val * eigenfunction_1d(n[i], y[..., i], params.omega)[n[i]]
    return val


def basis_values(basis: HermiteBasis, y, omega: float) -> np.ndarray:
    """Matrix of phi_a(y_p) for every basis element a and point y_p (shape dim x P)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    per_axis = [eigenfunction_1d(basis.cutoff, y[:, i], omega) for i in range(3)]
    idx = basis.index_array
    return per_axis[0][idx[:, 0]] * per_axis[1][idx[:, 1]] * per_axis[2][idx[:, 2]]


def hermite_gauss_ft(n: int, y):
    """Closed form of ``int exp(i x y) H_n(x) exp(-x**2) dx = sqrt(pi) (i y)**n exp(-y**2/4)``."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    y = np.asarray(y, dtype=float)
    out = math.sqrt(math.pi) * (1j * y) ** n * np.exp(-0.25 * y**2)
    return out if out.ndim else complex(out)


@lru_cache(maxsize=None)
def _product_linearization(m: int, n: int) -> tuple:
    # H_m H_n = sum_k C(m,k) C(n,k) 2**k k! H_{m+n-2k}, exact integers
    return tuple(math.comb(m, k) * math.comb(n, k) * 2**k * math.factorial(k)
                 for k in range(min(m, n) + 1))


@lru_cache(maxsize=None)
def form_factor_coeffs(m: int, n: int, omega: float) -> np.ndarray:
    """Polynomial part of the 1D form factor.

    ``int exp(-i q y) phi_m(y) phi_n(y) dy = exp(-q**2/(2 omega)) * sum_j c[j] q**j``.
    """
    lin = _product_linearization(m, n)
    norm = 1.0 / math.sqrt(2.0 ** (m + n) * math.factorial(m) * math.factorial(n))
    scale = math.sqrt(2.0 / omega)
    c = np.zeros(m + n + 1, dtype=complex)
    for k, ck in enumerate(lin):
        j = m + n - 2 * k
        # the Fourier integral of H_j(xi) exp(-xi**2) at -Y, with Y = q sqrt(2/omega)
        c[j] += norm * ck * (-1j * scale) ** j
    c.setflags(write=False)
    return c


def form_factor_1d(m: int, n: int, q, omega: float):
    q = np.asarray(q, dtype=float)
    c = form_factor_coeffs(m, n, omega)
    return np.polynomial.polynomial.polyval(q, c) * np.exp(-q**2 / (2.0 * omega))


def form_factor(n: Sequence[int], m: Sequence[int], q, params: ModelParams):
    """``int exp(-i q.x) phi_n(x) phi_m(x) dx`` in closed form, factorized per axis."""
    q = np.asarray(q, dtype=float)
    val = 1.0 + 0j
    for i in range(3):
        val = val * form_factor_1d(n[i], m[i], q[..., i], params.omega)
    return val if np.ndim(val) else complex(val)
