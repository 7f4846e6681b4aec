"""Tests for dissipation, Riesz velocity and the dealiased transport term."""

import math

import numpy as np
import pytest

from conftest import random_field
from sqgsim.operators import (
    OperatorParams,
    apply_dissipation,
    apply_lambda_power,
    nonlinear_term,
    riesz_velocity,
    skew_symmetry_defect,
    stream_function,
    transport_pairing,
)
from sqgsim.spectral import SpectralField, from_function, inner, sobolev_norm, wavenumbers


def field(func, N=16):
    return from_function(func, N)


def triad_oracle(theta: SpectralField) -> np.ndarray:
    """Direct convolution sum of u.grad(theta) over all retained mode pairs."""
    N = theta.N
    wn = wavenumbers(N)
    modes = [(int(wn.k1[i, j]), int(wn.k2[i, j])) for i, j in zip(*np.nonzero(wn.active))]
    active = set(modes)
    c = {k: theta.coefficient(*k) for k in modes}
    out = np.zeros((N, N), dtype=complex)
    for p in modes:
        pabs = math.hypot(*p)
        u = (-1j * p[1] / pabs * c[p], 1j * p[0] / pabs * c[p])
        for q in modes:
            k = (p[0] + q[0], p[1] + q[1])
            if k not in active:
                continue
            grad = (1j * q[0] * c[q], 1j * q[1] * c[q])
            # e_p e_q = e_{p+q} / (2 pi)
            out[k[0] % N, k[1] % N] += (u[0] * grad[0] + u[1] * grad[1]) / (2 * math.pi)
    return out


class TestParams:
    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            OperatorParams(alpha, 1.0)

    def test_kappa_positive(self):
        with pytest.raises(ValueError):
            OperatorParams(0.5, 0.0)

    @pytest.mark.parametrize("alpha,regime", [(0.75, "subcritical"), (0.5, "critical"), (0.3, "supercritical")])
    def test_regime(self, alpha, regime):
        assert OperatorParams(alpha, 1.0).regime == regime


class TestDissipation:
    @pytest.mark.parametrize("alpha,kappa", [(0.3, 0.7), (0.75, 1.0), (0.9, 2.5)])
    def test_unit_shell(self, alpha, kappa):
        f = field(lambda x1, x2: np.sin(x1))
        out = apply_dissipation(f, OperatorParams(alpha, kappa))
        np.testing.assert_allclose(out.coeffs, kappa * f.coeffs, rtol=0, atol=1e-13)

    def test_half_power_on_shell_two(self):
        f = field(lambda x1, x2: np.sin(2 * x1))
        out = apply_dissipation(f, OperatorParams(0.5, 1.0))
        np.testing.assert_allclose(out.coeffs, 2 * f.coeffs, atol=1e-14)

    def test_zero(self):
        assert apply_dissipation(SpectralField.zeros(8), OperatorParams(0.6, 1.0)) == SpectralField.zeros(8)

    def test_eigenrelation_every_mode(self):
        N = 24
        p = OperatorParams(0.7, 1.3)
        wn = wavenumbers(N)
        for i, j in zip(*np.nonzero(wn.active & (wn.kabs <= N / 3))):
            c = np.zeros((N, N), dtype=complex)
            c[i, j] = 1.0 + 0.5j
            c[wn.neg[0][i, 0], wn.neg[1][0, j]] = 1.0 - 0.5j
            f = SpectralField(c, project=False)
            out = apply_dissipation(f, p)
            lam = p.kappa * wn.kabs[i, j] ** (2 * p.alpha)
            assert out.coeffs[i, j] == lam * f.coeffs[i, j]

    def test_poincare(self, rng):
        p = OperatorParams(0.65, 0.8)
        for _ in range(20):
            f = random_field(16, rng)
            assert inner(apply_dissipation(f, p), f) >= p.lambda1 * sobolev_norm(f, 0) ** 2


class TestLambdaPower:
    def test_identity(self, rng):
        f = random_field(8, rng)
        assert apply_lambda_power(f, 0.0) == f

    def test_inverse_on_shell_two(self):
        f = field(lambda x1, x2: np.sin(2 * x2))
        expected = field(lambda x1, x2: 0.5 * np.sin(2 * x2))
        np.testing.assert_allclose(apply_lambda_power(f, -1.0).coeffs, expected.coeffs, atol=1e-14)

    @pytest.mark.parametrize("r", [-1.5, 0.3, 2.0])
    def test_inverse_powers(self, r, rng):
        f = random_field(16, rng)
        g = apply_lambda_power(apply_lambda_power(f, r), -r)
        assert np.max(np.abs(g.coeffs - f.coeffs)) <= 1e-12 * np.max(np.abs(f.coeffs))

    def test_stream_function(self, rng):
        f = random_field(8, rng)
        assert stream_function(f) == apply_lambda_power(f, -1.0)


class TestRieszVelocity:
    def test_sin_x1(self):
        u = riesz_velocity(field(lambda x1, x2: np.sin(x1)))
        np.testing.assert_allclose(u.u1.coeffs, 0, atol=1e-14)
        np.testing.assert_allclose(u.u2.coeffs, field(lambda x1, x2: np.cos(x1)).coeffs, atol=1e-14)

    def test_cos_x2(self):
        u = riesz_velocity(field(lambda x1, x2: np.cos(x2)))
        np.testing.assert_allclose(u.u1.coeffs, field(lambda x1, x2: np.sin(x2)).coeffs, atol=1e-14)
        np.testing.assert_allclose(u.u2.coeffs, 0, atol=1e-14)

    def test_zero(self):
        u = riesz_velocity(SpectralField.zeros(8))
        assert np.all(u.u1.coeffs == 0) and np.all(u.u2.coeffs == 0)

    @pytest.mark.parametrize("N", [8, 16, 32])
    def test_divergence_free_and_bounded(self, N, rng):
        for _ in range(10):
            f = random_field(N, rng)
            u = riesz_velocity(f)
            assert np.max(np.abs(u.divergence())) <= 1e-14 * N * np.max(np.abs(f.coeffs))
            assert sobolev_norm(u.u1, 0) <= sobolev_norm(f, 0) * (1 + 1e-14)
            assert sobolev_norm(u.u2, 0) <= sobolev_norm(f, 0) * (1 + 1e-14)
            assert u.u1.is_hermitian() and u.u2.is_hermitian()


class TestNonlinearTerm:
    def test_single_mode_vanishes(self):
        B = nonlinear_term(field(lambda x1, x2: np.sin(x1)))
        assert np.max(np.abs(B.coeffs)) < 1e-14

    def test_zero(self):
        assert np.all(nonlinear_term(SpectralField.zeros(8)).coeffs == 0)

    def test_matches_triad_oracle(self, rng):
        for _ in range(5):
            f = random_field(8, rng)
            B = nonlinear_term(f).coeffs
            ref = triad_oracle(f)
            assert np.max(np.abs(B - ref)) <= 1e-10 * np.max(np.abs(ref))

    def test_output_invariants(self, rng):
        B = nonlinear_term(random_field(16, rng))
        wn = wavenumbers(16)
        assert B.is_hermitian()
        assert np.all(B.coeffs[~wn.active] == 0)

    def test_skew_symmetry(self, rng):
        for N in (8, 16, 32):
            for _ in range(20):
                assert skew_symmetry_defect(random_field(N, rng)) < 1e-10

    def test_skew_two_mode_field(self):
        f = field(lambda x1, x2: np.sin(x1) + np.cos(2 * x2))
        assert skew_symmetry_defect(f) < 1e-10

    def test_skew_zero(self):
        assert skew_symmetry_defect(SpectralField.zeros(8)) == 0.0

    def test_bilinear_consistency(self, rng):
        for _ in range(20):
            theta, psi = random_field(16, rng), random_field(16, rng)
            lhs = inner(nonlinear_term(theta), psi)
            rhs = transport_pairing(theta, psi)
            assert abs(lhs + rhs) <= 1e-10 * (abs(lhs) + abs(rhs) + 1e-300) or abs(lhs + rhs) < 1e-13
