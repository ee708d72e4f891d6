"""Independent reference computations shared by several test modules."""
import math

import numpy as np
from scipy import integrate

from fermi_scatter.oscillator import HermiteBasis, eigenfunction_1d, enumerate_shell


def prolate_oracle(a, b, d):
    """int exp(i a r1)/r1 exp(-b r2)/r2 d^3x in prolate spheroidal coordinates.

    With r1, r2 = d (s +- t)/2 the Jacobian cancels 1/(r1 r2) up to d/2; the
    azimuth gives 2 pi.
    """
    h = d / 2

    def f(t, s, part):
        return part(np.exp(1j * a * h * (s + t) - b * h * (s - t)))

    s_max = 1 + 60 / (b * h)
    re, _ = integrate.dblquad(f, 1, s_max, -1, 1, args=(np.real,), epsabs=1e-13, epsrel=1e-11)
    im, _ = integrate.dblquad(f, 1, s_max, -1, 1, args=(np.imag,), epsabs=1e-13, epsrel=1e-11)
    return 2 * math.pi * h * (re + 1j * im)


class BruteForceClosed:
    """Closed-channel potential from trapezoid convolutions on a fine grid.

    Shares none of the Gauss-Hermite, FFT or log-time code of the package:
    per-axis integrals are trapezoid sums over a dense grid, shell sums are
    explicit loops, and the time integral is scipy's adaptive quad.
    """

    def __init__(self, x, y, coeffs, cut, omega=1.0):
        self.x, self.y, self.c, self.cut, self.om = x, y, coeffs, cut, omega
        self.idx = HermiteBasis(cut).index_array
        self.g = np.linspace(-14, 14, 5601)
        self.dg = self.g[1] - self.g[0]
        self.phig = eigenfunction_1d(60, self.g, omega)

    def heat(self, t, u):
        return np.exp(np.maximum(-u * u / (4 * t), -700)) / np.sqrt(4 * np.pi * t)

    def mehler(self, t, a, b):
        om = self.om
        r = math.exp(-om * t)
        e = -(om / 4) * ((1 + r * r) * (a * a + b * b) - 4 * r * a * b) / (1 - r * r)
        return math.sqrt(om / (2 * math.pi * (1 - r * r))) * np.exp(np.maximum(e, -700))

    def full(self, t):
        per = [((self.heat(t, self.x[i] - self.g) * self.mehler(t, self.y[i], self.g))[None, :]
                * self.phig[:self.cut + 1]).sum(-1) * self.dg for i in range(3)]
        return sum(self.c[b] * per[0][i0] * per[1][i1] * per[2][i2]
                   for b, (i0, i1, i2) in enumerate(self.idx))

    def shells(self, t, nmin, nmax):
        A = []
        for i in range(3):
            h = self.heat(t, self.x[i] - self.g)
            inner = (h[None, None, :] * self.phig[:nmax + 1, None, :]
                     * self.phig[None, :self.cut + 1, :]).sum(-1) * self.dg
            A.append(eigenfunction_1d(nmax, self.y[i], self.om)[:, None] * inner)
        tot = 0.0
        for N in range(nmin, nmax + 1):
            for n in enumerate_shell(N):
                s = sum(self.c[b] * A[0][n[0], i0] * A[1][n[1], i1] * A[2][n[2], i2]
                        for b, (i0, i1, i2) in enumerate(self.idx))
                tot += math.exp(-self.om * N * t) * s
        return tot

    def closed(self, mu):
        n0 = max(math.floor(mu / self.om), -1)
        t0 = min(2.0, 8.0 / (n0 + 2)) / self.om
        f1 = lambda t: math.exp(mu * t) * (self.full(t) - (self.shells(t, 0, n0) if n0 >= 0 else 0.0))
        f2 = lambda t: math.exp(mu * t) * self.shells(t, n0 + 1, n0 + 25)
        a, _ = integrate.quad(f1, 0, t0, epsabs=1e-13, limit=200)
        b, _ = integrate.quad(f2, t0, 80 / (self.om * (n0 + 1) - mu), epsabs=1e-13, limit=200)
        return a + b
