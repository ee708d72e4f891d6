import itertools
import math

import numpy as np
import pytest
from scipy import special

from oracles import BruteForceClosed, prolate_oracle

from fermi_scatter.charge_kernel import ChargeVector
from fermi_scatter.greens import (BoundarySide, ChannelSplit, ThresholdError, check_threshold,
                                  free_resolvent_gaussian, helmholtz_kernel, potential_apply,
                                  product_integral, trace_plane_source)
from fermi_scatter.oscillator import (Channel, HermiteBasis, ModelParams,
                                      eigenfunction_value, enumerate_shell, form_factor)

P = ModelParams(omega=1.0, lam=10.0, alpha=100.0)
PLUS, MINUS = BoundarySide.PLUS, BoundarySide.MINUS


class TestHelmholtz:
    def test_yukawa(self):
        assert helmholtz_kernel(BoundarySide.NEGATIVE_REAL, -1.0, 1.0) == pytest.approx(math.exp(-1) / (4 * math.pi))

    def test_zero_energy(self):
        assert helmholtz_kernel(PLUS, 0.0, 2.5) == pytest.approx(1 / (4 * math.pi * 2.5))

    def test_phase(self):
        assert helmholtz_kernel(PLUS, 4.0, math.pi) == pytest.approx(1 / (4 * math.pi**2))

    def test_minus_is_conjugate(self):
        assert helmholtz_kernel(MINUS, 2.0, 0.7) == pytest.approx(np.conj(helmholtz_kernel(PLUS, 2.0, 0.7)))

    def test_off_axis_principal_root(self):
        z = complex(2.0, 0.3)
        k = np.sqrt(z)
        assert helmholtz_kernel(BoundarySide.OFF_AXIS, z, 1.1) == pytest.approx(np.exp(1j * k * 1.1) / (4 * math.pi * 1.1))
        # the lower half plane picks the root with positive imaginary part too
        zb = z.conjugate()
        val = helmholtz_kernel(BoundarySide.OFF_AXIS, zb, 1.1)
        assert abs(val) < 1 / (4 * math.pi * 1.1)

    def test_singular_point_rejected(self):
        with pytest.raises(ValueError):
            helmholtz_kernel(PLUS, 1.0, 0.0)


class TestProductIntegral:
    def test_zero_a(self):
        b, d = 1.3, 0.8
        assert product_integral(0.0, b, d) == pytest.approx(4 * math.pi * (1 - math.exp(-b * d)) / (b * b * d))

    def test_unit_example(self):
        assert product_integral(1, 1, 1) == pytest.approx(4 * math.pi * (np.exp(1j) - math.exp(-1)) / 2)

    @pytest.mark.parametrize("a,b,d", list(itertools.product([0.5, 1.0, 2.0], repeat=3)))
    def test_against_3d_quadrature(self, a, b, d):
        ref = prolate_oracle(a, b, d)
        assert abs(product_integral(a, b, d) - ref) <= 1e-6 * abs(ref)

    def test_invalid(self):
        with pytest.raises(ValueError):
            product_integral(1.0, 0.0, 1.0)


class TestTraceSource:
    def test_ground_state_at_origin(self):
        c = Channel((0, 0, 0), (0, 0, 0))
        assert trace_plane_source(c, np.zeros(3), P) == pytest.approx((2 * math.pi) ** -1.5 * (2 * math.pi) ** -0.75)

    def test_modulus_independent_of_k(self):
        y = np.array([0.3, -0.2, 0.5])
        a = trace_plane_source(Channel((0, 0, 0), (1, 0, 2)), y, P)
        b = trace_plane_source(Channel((1.5, -0.3, 2.0), (1, 0, 2)), y, P)
        assert abs(a) == pytest.approx(abs(b))

    def test_pairing_is_scaled_form_factor(self):
        # Gauss-Hermite tensor quadrature oracle of <Tr Phi0(k,n), Tr Phi0(k',n')>
        c1 = Channel((0.4, 0.0, -0.3), (1, 0, 0))
        c2 = Channel((0.1, 0.5, 0.2), (0, 1, 1))
        z, w = np.polynomial.hermite.hermgauss(40)
        s = math.sqrt(2.0)
        g = np.array(list(itertools.product(z * s, repeat=3)))
        wg = np.prod(np.array(list(itertools.product(w, repeat=3))), axis=1) * s**3 * np.exp(np.sum(z[np.array(list(itertools.product(range(40), repeat=3)))] ** 2, axis=1))
        v = np.conj(trace_plane_source(c1, g, P)) * trace_plane_source(c2, g, P)
        ref = np.sum(wg * v)
        q = c1.kvec - c2.kvec
        assert abs(ref - (2 * math.pi) ** -3 * form_factor(c1.n, c2.n, q, P)) < 1e-13


class TestSplit:
    def test_n0_and_low_set(self):
        s = ChannelSplit(2.5, 1.0)
        assert s.n0 == 2
        assert s.is_low((1, 1, 0)) and not s.is_low((1, 1, 1))
        assert list(s.open_shells()) == [0, 1, 2]
        assert s.gap() == pytest.approx(0.5)
        assert ChannelSplit(0.6, 1.0).n0 == 0
        assert ChannelSplit(-0.5, 1.0).n0 == -1

    def test_every_open_channel_is_low(self):
        mu, omega = 3.7, 1.1
        s = ChannelSplit(mu, omega)
        for N in range(8):
            for n in enumerate_shell(N):
                if Channel((0, 0, 0), n).is_open(mu, omega):
                    assert s.is_low(n)

    def test_threshold_rejected(self):
        with pytest.raises(ThresholdError):
            check_threshold(2.0005, 1.0)
        check_threshold(2.0005, 1.0, allow=True)
        check_threshold(2.1, 1.0)


# ---------------------------------------------------------------------------
# potential of a charge


def _charge(cut, seed=0):
    rng = np.random.default_rng(seed)
    dim = HermiteBasis(cut).dim
    return ChargeVector(rng.normal(size=dim), cut)


def _open_ground_charge(mu, x, y, omega=1.0):
    """Open-channel potential of the charge xi = phi_0 from the radial resolvent.

    phi_0^2 is an isotropic Gaussian with beta = omega/2 and phi_{e_i} phi_0 =
    sqrt(omega) y_i phi_0^2 = -(sqrt(omega)/(2 beta)) d_i phi_0^2.
    """
    beta = 0.5 * omega
    norm = (omega / (2 * math.pi)) ** 1.5
    R = float(np.linalg.norm(x))
    val = 0j
    params = ModelParams(omega)
    for N in range(math.floor(mu / omega) + 1):
        if N > 1:
            raise NotImplementedError
        u = free_resolvent_gaussian(PLUS, mu - omega * N, beta)
        if N == 0:
            val += eigenfunction_value((0, 0, 0), y, params) * norm * u(R)
        else:
            h = 1e-4
            du = (u(R + h) - u(R - h)) / (2 * h)
            for i in range(3):
                n = tuple(int(j == i) for j in range(3))
                val += (eigenfunction_value(n, y, params) * math.sqrt(omega) * norm
                        * (-1 / (2 * beta)) * x[i] / R * du)
    return val


class TestPotential:
    x = np.array([1.2, -0.5, 0.8])
    y = np.array([-0.6, 0.6, -0.4])

    def test_zero_charge(self):
        xi = ChargeVector(np.zeros(10), 2)
        assert potential_apply(PLUS, 1.3, xi, self.x, self.y, P).value == 0

    @pytest.mark.parametrize("mu,side", [(-2.0, BoundarySide.NEGATIVE_REAL), (-0.5, PLUS)])
    def test_yukawa_regime_against_brute_force(self, mu, side):
        xi = _charge(2, seed=3)
        got = potential_apply(side, mu, xi, self.x, self.y, P, tail_tol=1e-10)
        ref = BruteForceClosed(self.x, self.y, xi.coefficients.real, 2).closed(mu)
        assert got.converged
        assert abs(got.value - ref) <= 1e-8 * abs(ref)

    @pytest.mark.parametrize("mu", [0.6, 1.3])
    def test_rim_against_independent_paths(self, mu):
        # xi = phi_0: open channels via the radial resolvent, closed ones by brute force
        c = np.zeros(10)
        c[0] = 1.0
        xi = ChargeVector(c, 2)
        got = potential_apply(PLUS, mu, xi, self.x, self.y, P, tail_tol=1e-10).value
        ref = _open_ground_charge(mu, self.x, self.y) + BruteForceClosed(self.x, self.y, c, 2).closed(mu)
        assert abs(got - ref) <= 1e-7 * abs(ref)

    def test_low_split_single_channel(self):
        # below omega only n = 0 is open; its imaginary part is the whole imaginary part
        c = np.zeros(10)
        c[0] = 1.0
        xi = ChargeVector(c, 2)
        got = potential_apply(PLUS, 0.6, xi, self.x, self.y, P).value
        assert got.imag == pytest.approx(_open_ground_charge(0.6, self.x, self.y).imag, rel=1e-9)

    def test_plus_minus_conjugate(self):
        xi = _charge(2, seed=5)
        for mu in (0.4, 1.7):
            a = potential_apply(PLUS, mu, xi, self.x, self.y, P).value
            b = potential_apply(MINUS, mu, xi, self.x, self.y, P).value
            assert abs(a - np.conj(b)) <= 1e-14 * abs(a)

    def test_tail_bound_is_valid(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            xi = _charge(2, seed=int(rng.integers(1 << 30)))
            x, y = rng.uniform(-1.5, 1.5, size=(2, 3))
            mu = float(rng.uniform(-1.0, 2.5))
            if abs(mu - round(mu)) < 0.01:
                mu += 0.05
            base = potential_apply(PLUS, mu, xi, x, y, P, tail_tol=1e-6)
            n_cut = 1 + max(math.floor(mu), -1) + math.ceil(-math.log(1e-9) / (min(2.0, 8.0 / (max(math.floor(mu), -1) + 2))))
            fine = potential_apply(PLUS, mu, xi, x, y, P, tail_tol=1e-6, shell_max=2 * n_cut)
            assert abs(fine.value - base.value) <= max(base.tail_bound, 1e-13)

    def test_threshold_energy_rejected(self):
        with pytest.raises(ThresholdError):
            potential_apply(PLUS, 1.0, _charge(1), self.x, self.y, P)


class TestFreeResolventGaussian:
    def test_conjugate_sides(self):
        up = free_resolvent_gaussian(PLUS, 1.7, 0.8)
        dn = free_resolvent_gaussian(MINUS, 1.7, 0.8)
        for R in (0.0, 0.5, 2.0):
            assert up(R) == pytest.approx(np.conj(dn(R)), abs=1e-15)

    def test_large_energy_decay(self):
        vals = [abs(free_resolvent_gaussian(PLUS, mu, 1.0)(0.3)) for mu in (100.0, 200.0, 400.0)]
        ratios = [vals[i] / vals[i + 1] for i in range(2)]
        assert all(1.6 < r < 2.4 for r in ratios)

    @pytest.mark.parametrize("mu", [0.5, 4.0, 400.0])
    @pytest.mark.parametrize("beta", [0.5, 1.3])
    def test_origin_faddeeva(self, mu, beta):
        k = math.sqrt(mu)
        ref = 1 / (2 * beta) + 1j * k / (2 * beta) * math.sqrt(math.pi / (4 * beta)) * special.wofz(
            k / (2 * math.sqrt(beta)))
        got = free_resolvent_gaussian(PLUS, mu, beta)(0.0)
        assert abs(got - ref) <= 1e-12 * abs(ref)

    @pytest.mark.parametrize("R", [0.2, 1.0, 3.5, 9.0])
    def test_imaginary_part_is_on_shell(self, R):
        # Im u(R) = 2 pi^2 k |f_hat(k)| sinc(kR) / (2 pi)^{3/2}
        mu, beta = 1.7, 0.8
        k = math.sqrt(mu)
        ref = (2 * math.pi**2 * k * (2 * beta) ** -1.5 * math.exp(-mu / (4 * beta))
               * math.sin(k * R) / (k * R) / (2 * math.pi) ** 1.5)
        assert free_resolvent_gaussian(PLUS, mu, beta)(R).imag == pytest.approx(ref, rel=1e-10, abs=1e-15)

    def test_yukawa_origin_closed_form(self):
        beta, kappa = 0.9, 1.3
        u = free_resolvent_gaussian(BoundarySide.NEGATIVE_REAL, -kappa**2, beta)
        ref = (1 / (2 * beta) - kappa / (2 * beta) * math.sqrt(math.pi / (4 * beta))
               * special.erfcx(kappa / (2 * math.sqrt(beta))))
        assert u(0.0) == pytest.approx(ref, rel=1e-10)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            free_resolvent_gaussian(PLUS, 1.0, 0.0)
