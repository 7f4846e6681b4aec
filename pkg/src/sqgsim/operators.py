"""Linear and nonlinear operators of the SQG equation.

Conventions: the Riesz transform ``R_j`` is the multiplier ``i k_j / |k|`` and
the velocity is ``u = (-R_2 theta, R_1 theta)``, i.e. ``u = grad-perp psi``
with stream function ``psi = Lambda^{-1} theta``.  Products are formed on the
3/2-padded grid so the quadratic transport term carries no aliasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    SpectralField,
    dealias_size,
    inner_array,
    sobolev_norm_array,
    to_physical_array,
    to_spectral_array,
    wavenumbers,
)

__all__ = [
    "OperatorParams",
    "VelocityField",
    "apply_dissipation",
    "apply_lambda_power",
    "stream_function",
    "riesz_velocity",
    "nonlinear_term",
    "skew_symmetry_defect",
    "transport_pairing",
]


@dataclass(frozen=True)
class OperatorParams:
    """Fractional exponent ``alpha`` in (0, 1) and dissipation coefficient ``kappa > 0``."""

    alpha: float
    kappa: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.kappa > 0.0):
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    @property
    def regime(self) -> str:
        if self.alpha > 0.5:
            return "subcritical"
        if self.alpha == 0.5:
            return "critical"
        return "supercritical"

    @property
    def lambda1(self) -> float:
        """Smallest eigenvalue of the dissipation operator (|k| = 1)."""
        return self.kappa

    def symbol(self, N: int) -> np.ndarray:
        """Multiplier ``kappa |k|^{2 alpha}`` on the retained modes (0 elsewhere)."""
        wn = wavenumbers(N)
        out = np.zeros_like(wn.kabs)
        out[wn.active] = self.kappa * wn.kabs[wn.active] ** (2.0 * self.alpha)
        return out


@dataclass(frozen=True)
class VelocityField:
    u1: SpectralField
    u2: SpectralField

    def divergence(self) -> np.ndarray:
        """Spectral divergence ``i (k1 u1 + k2 u2)`` per mode."""
        wn = wavenumbers(self.u1.N)
        return 1j * (wn.k1 * self.u1.coeffs + wn.k2 * self.u2.coeffs)


def _lambda_multiplier(N: int, r: float) -> np.ndarray:
    wn = wavenumbers(N)
    out = np.zeros_like(wn.kabs)
    out[wn.active] = wn.kabs[wn.active] ** r
    return out


def apply_dissipation(theta: SpectralField, params: OperatorParams) -> SpectralField:
    return SpectralField(params.symbol(theta.N) * theta.coeffs, project=False)


def apply_lambda_power(theta: SpectralField, r: float) -> SpectralField:
    """``Lambda^r theta`` with ``Lambda = (-Laplacian)^{1/2}``."""
    return SpectralField(_lambda_multiplier(theta.N, r) * theta.coeffs, project=False)


def stream_function(theta: SpectralField) -> SpectralField:
    return apply_lambda_power(theta, -1.0)


def velocity_array(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    wn = wavenumbers(c.shape[-1])
    psi = wn.inv_kabs() * c
    return -1j * wn.k2 * psi, 1j * wn.k1 * psi


def riesz_velocity(theta: SpectralField) -> VelocityField:
    u1, u2 = velocity_array(theta.coeffs)
    return VelocityField(SpectralField(u1, project=False), SpectralField(u2, project=False))


def _advect_array(c_vel: np.ndarray, c_scalar: np.ndarray, with_umax: bool = False):
    """Dealiased ``u(c_vel) . grad c_scalar`` on the padded grid."""
    N = c_vel.shape[-1]
    wn = wavenumbers(N)
    u1, u2 = velocity_array(c_vel)
    stacked = np.stack([u1, u2, 1j * wn.k1 * c_scalar, 1j * wn.k2 * c_scalar])
    U1, U2, D1, D2 = to_physical_array(stacked, dealias_size(N))
    out = to_spectral_array(U1 * D1 + U2 * D2, N)
    if not with_umax:
        return out
    umax = np.sqrt(np.max(U1 * U1 + U2 * U2, axis=(-2, -1)))
    return out, umax


def nonlinear_array(c: np.ndarray, with_umax: bool = False):
    """Transport term ``B(theta) = u . grad theta`` for stacked coefficient arrays.

    With ``with_umax`` also returns the grid maximum of ``|u|`` per field.
    """
    return _advect_array(c, c, with_umax)


def nonlinear_term(theta: SpectralField) -> SpectralField:
    return SpectralField(nonlinear_array(theta.coeffs), project=False)


def transport_pairing(theta: SpectralField, psi: SpectralField) -> float:
    """``<u(theta) . grad psi, theta>`` evaluated directly on the padded grid."""
    return float(inner_array(_advect_array(theta.coeffs, psi.coeffs), theta.coeffs))


def skew_symmetry_defect(theta: SpectralField) -> float:
    """Normalized ``|<B(theta), theta>|``; roundoff-level for a correct transport term."""
    c = theta.coeffs
    pairing = abs(float(inner_array(nonlinear_array(c), c)))
    scale = float(sobolev_norm_array(c, 0.0) * sobolev_norm_array(c, 1.0))
    return pairing / (scale + np.finfo(float).eps)
