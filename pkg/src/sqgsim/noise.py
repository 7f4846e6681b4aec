"""Stochastic forcing ``G(theta) dW`` and checks of the noise hypotheses.

Three families are shipped:

* :class:`AdditiveDiagonal` -- ``G e_k = g(k) e_k`` with ``g`` independent of theta.
* :class:`LinearMultiplicative` -- ``G(theta) dW = sigma theta db`` with one scalar
  Brownian motion ``b`` (``lambda0 = sigma^2``, ``rho = 0``, ``beta = sigma``).
* :class:`ErgodicCovariance` -- ``G = A^{-(s+alpha)/(2 alpha)} Q0^{1/2}`` with ``Q0``
  diagonal and bounded above and below.

The cylindrical Wiener process is realized on the retained mode set.  Each
complex mode increment has independent real and imaginary parts of variance
``dt/2`` and its conjugate partner is slaved to it, so sampled forcing is real.

:class:`NoisePath` draws its Gaussians from a Philox counter-based generator
keyed by ``(seed, stream)`` with counter ``(member * B + block, fine_step)``,
so any ``(step, member)`` increment can be regenerated independently of
evaluation order or ensemble batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .spectral import (
    TWO_PI,
    SpectralField,
    lp_norm_array,
    restrict_array,
    sobolev_norm_array,
    wavenumbers,
)

__all__ = [
    "NoiseHypothesisError",
    "NotApplicableError",
    "NoiseModel",
    "AdditiveDiagonal",
    "LinearMultiplicative",
    "ErgodicCovariance",
    "make_ergodic_covariance",
    "NoisePath",
    "TraceReport",
    "check_trace_condition",
    "sample_increment",
    "check_growth_bound",
    "check_lipschitz_negative_half",
    "check_lp_noise_bound",
]


class NoiseHypothesisError(ValueError):
    """A noise model violates the structural hypothesis it is meant to satisfy."""


class NotApplicableError(ValueError):
    """A check was requested for a noise family it does not apply to."""


class NoiseModel:
    """Base class; subclasses are frozen dataclasses."""

    additive: bool = True

    def amplitudes(self, N: int) -> np.ndarray:
        """Per-mode amplitude ``g(k)`` on resolution ``N`` (additive families)."""
        raise NotApplicableError(f"{type(self).__name__} has no per-mode amplitudes")

    def apply(self, theta: np.ndarray, dW: np.ndarray, db: np.ndarray) -> np.ndarray:
        """``G(theta) dW`` given mode increments ``dW`` and scalar increments ``db``."""
        raise NotImplementedError

    def hs_norm_sq(self, theta: np.ndarray) -> np.ndarray:
        """``|G(theta)|^2`` in the Hilbert-Schmidt norm ``L_2(K, H)``."""
        raise NotImplementedError

    # constants of the growth bound |G(theta)|^2 <= lambda0 |theta|^2 + rho
    def growth_constants(self, N: int) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def beta(self) -> float:
        raise NotImplementedError

    def lp_constant(self, p: float, N: int) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class _Additive(NoiseModel):
    additive = True

    @property
    def tail_decay(self) -> float:
        """Exponent ``d`` with ``g(k) ~ |k|^{-d}``; ``inf`` for finitely supported forcing."""
        raise NotImplementedError

    def apply(self, theta, dW, db):
        return self.amplitudes(dW.shape[-1]) * dW

    def hs_norm_sq(self, theta):
        trace = float(np.sum(self.amplitudes(theta.shape[-1]) ** 2))
        return np.full(theta.shape[:-2], trace)

    def trace(self, N: int) -> float:
        return float(np.sum(self.amplitudes(N) ** 2))

    def growth_constants(self, N):
        return 0.0, self.trace(N)

    @property
    def beta(self) -> float:
        return 0.0

    def pointwise_variance(self, N: int) -> float:
        """``sum_j |G e_j (x)|^2``; constant in x since ``|e_k(x)|^2 = (2 pi)^{-2}``."""
        return self.trace(N) / TWO_PI**2

    def lp_constant(self, p, N):
        return TWO_PI**2 * self.pointwise_variance(N) ** (p / 2.0)


@dataclass(frozen=True)
class AdditiveDiagonal(_Additive):
    """Diagonal additive noise.

    ``g(k) = amplitude * |k|^{-decay}`` for ``|k| <= kmax``, or, when ``modes``
    is given, ``amplitude`` on the listed wavenumbers and their conjugates only.
    """

    amplitude: float = 1.0
    decay: float = 0.0
    kmax: float | None = None
    modes: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise NoiseHypothesisError("amplitude must be non-negative")
        if self.modes is not None:
            object.__setattr__(self, "modes", tuple(tuple(int(x) for x in m) for m in self.modes))

    @property
    def tail_decay(self) -> float:
        if self.modes is not None or (self.kmax is not None and math.isfinite(self.kmax)):
            return math.inf
        return self.decay

    def amplitudes(self, N):
        wn = wavenumbers(N)
        g = np.zeros_like(wn.kabs)
        if self.modes is not None:
            for k1, k2 in self.modes:
                for s in (1, -1):
                    i, j = (s * k1) % N, (s * k2) % N
                    if wn.active[i, j] and wn.k1[i, j] == s * k1 and wn.k2[i, j] == s * k2:
                        g[i, j] = self.amplitude
            return g
        sel = wn.active.copy()
        if self.kmax is not None:
            sel &= wn.kabs <= self.kmax
        g[sel] = self.amplitude * wn.kabs[sel] ** (-self.decay)
        return g

    def describe(self):
        return {"variant": "additive", "amplitude": self.amplitude, "decay": self.decay,
                "kmax": self.kmax, "modes": self.modes}


@dataclass(frozen=True)
class ErgodicCovariance(_Additive):
    """``g(k) = q(k)^{1/2} (kappa |k|^{2 alpha})^{-(s + alpha)/(2 alpha)}`` on every retained mode."""

    alpha: float
    kappa: float
    s: float = 1.0
    q: float | Callable[[np.ndarray, np.ndarray], np.ndarray] = 1.0
    q_min: float = 1.0
    q_max: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0) or not (self.kappa > 0.0):
            raise NoiseHypothesisError("need 0 < alpha < 1 and kappa > 0")
        if self.s < 1.0:
            raise NoiseHypothesisError(f"regularity s must be >= 1, got {self.s}")
        if not (0.0 < self.q_min <= self.q_max):
            raise NoiseHypothesisError(f"need 0 < q_min <= q_max, got [{self.q_min}, {self.q_max}]")
        if not callable(self.q) and not (self.q_min <= float(self.q) <= self.q_max):
            raise NoiseHypothesisError(f"q = {self.q} outside [{self.q_min}, {self.q_max}]")

    @property
    def tail_decay(self) -> float:
        return self.s + self.alpha

    def q_values(self, N: int) -> np.ndarray:
        wn = wavenumbers(N)
        if callable(self.q):
            q = np.asarray(self.q(wn.k1, wn.k2), dtype=float)
        else:
            q = np.full(wn.kabs.shape, float(self.q))
        qa = q[wn.active]
        if np.any(qa < self.q_min) or np.any(qa > self.q_max) or np.any(qa <= 0):
            raise NoiseHypothesisError("q(k) must lie in [q_min, q_max] with q_min > 0")
        return q

    def amplitudes(self, N):
        wn = wavenumbers(N)
        q = self.q_values(N)
        g = np.zeros_like(wn.kabs)
        a = wn.active
        g[a] = np.sqrt(q[a]) * (self.kappa * wn.kabs[a] ** (2 * self.alpha)) ** (
            -(self.s + self.alpha) / (2 * self.alpha)
        )
        return g

    def describe(self):
        return {"variant": "ergodic", "alpha": self.alpha, "kappa": self.kappa, "s": self.s,
                "q_min": self.q_min, "q_max": self.q_max}


def make_ergodic_covariance(alpha: float, kappa: float, s: float = 1.0, q=1.0,
                            q_min: float | None = None, q_max: float | None = None) -> ErgodicCovariance:
    """Build the non-degenerate covariance; ``q`` is a constant, callable or ``(N, N)`` array."""
    if isinstance(q, np.ndarray):
        arr = np.asarray(q, dtype=float)
        wn = wavenumbers(arr.shape[-1])
        vals = arr[wn.active]
        q_min = float(vals.min()) if q_min is None else q_min
        q_max = float(vals.max()) if q_max is None else q_max
        if q_min <= 0:
            raise NoiseHypothesisError("q(k) must be strictly positive on every retained mode")
        Nq = arr.shape[-1]

        def q_fn(k1, k2, arr=arr, Nq=Nq):
            if k1.shape[-1] != Nq:
                raise NoiseHypothesisError(f"q given at resolution {Nq}, requested {k1.shape[-1]}")
            return arr

        return ErgodicCovariance(alpha, kappa, s, q_fn, q_min, q_max)
    if callable(q):
        if q_min is None or q_max is None:
            raise NoiseHypothesisError("callable q needs explicit q_min and q_max")
        return ErgodicCovariance(alpha, kappa, s, q, q_min, q_max)
    q = float(q)
    if q <= 0:
        raise NoiseHypothesisError("q must be strictly positive")
    return ErgodicCovariance(alpha, kappa, s, q, q if q_min is None else q_min,
                             q if q_max is None else q_max)


@dataclass(frozen=True)
class LinearMultiplicative(NoiseModel):
    """``G(theta)(e_j) = sigma_j theta`` consolidated into one Brownian motion of intensity ``sigma``."""

    sigma: float = 0.0
    additive = False

    def __post_init__(self):
        if self.sigma < 0:
            raise NoiseHypothesisError("sigma must be non-negative")

    def apply(self, theta, dW, db):
        return (self.sigma * np.asarray(db))[..., None, None] * theta

    def hs_norm_sq(self, theta):
        return self.sigma**2 * sobolev_norm_array(theta, 0.0) ** 2

    def growth_constants(self, N):
        return self.sigma**2, 0.0

    @property
    def beta(self) -> float:
        return self.sigma

    def lp_constant(self, p, N):
        return self.sigma**p

    def describe(self):
        return {"variant": "multiplicative", "sigma": self.sigma}


# --------------------------------------------------------------------------- paths


@dataclass(frozen=True)
class NoisePath:
    """Reproducible Brownian increments on the retained modes of ``resolution``.

    ``refine`` fine substeps of size ``dt / refine`` are summed into each
    step, so paths with ``(dt, refine=r)`` and ``(dt / r, refine=1)`` share
    one Brownian path.  ``members`` selects ensemble members; increments then
    carry a leading member axis.  Increments at a coarser resolution are the
    spectral restriction of the fine-resolution ones.
    """

    seed: int
    dt: float
    resolution: int
    n_steps: int | None = None
    stream: int = 0
    members: int | Sequence[int] | None = None
    refine: int = 1
    _blocks: int = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.refine < 1:
            raise ValueError("refine must be >= 1")
        wavenumbers(self.resolution)
        if self.members is not None and not isinstance(self.members, int):
            object.__setattr__(self, "members", tuple(int(m) for m in self.members))
        # one uint64 per standard normal; 2 N^2 normals per fine step and member
        object.__setattr__(self, "_blocks", -(-2 * self.resolution**2 // 4))

    @property
    def member_ids(self) -> np.ndarray:
        if self.members is None:
            return np.array([0])
        if isinstance(self.members, int):
            return np.arange(self.members)
        return np.asarray(self.members)

    @property
    def batched(self) -> bool:
        return self.members is not None

    def _check(self, step: int):
        if step < 0 or (self.n_steps is not None and step >= self.n_steps):
            raise IndexError(f"step {step} outside path of {self.n_steps} steps")

    def _fine_normals(self, fine_step: int, ids: np.ndarray) -> np.ndarray:
        B = self._blocks
        n = 2 * self.resolution**2
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        out = np.empty((ids.size, n))
        # contiguous member runs share one generator call
        breaks = np.flatnonzero(np.diff(ids) != 1) + 1
        for run in np.split(np.arange(ids.size), breaks):
            first = int(ids[run[0]])
            bg = np.random.Philox(key=key, counter=np.array([first * B, fine_step, 0, 0], dtype=np.uint64))
            raw = bg.random_raw(run.size * 4 * B).reshape(run.size, 4 * B)[:, :n]
            out[run] = ndtri(((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53)
        return out.reshape(ids.size, 2, self.resolution, self.resolution)

    def normals(self, step: int) -> np.ndarray:
        """Standard normals for ``step``, shape ``(members, 2, R, R)``."""
        self._check(step)
        ids = self.member_ids
        z = self._fine_normals(step * self.refine, ids)
        for j in range(1, self.refine):
            z += self._fine_normals(step * self.refine + j, ids)
        if self.refine > 1:
            z /= math.sqrt(self.refine)
        return z

    def increments(self, step: int, N: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Mode increments ``dW`` (Hermitian, ``E|dW_k|^2 = dt``) and scalar ``db`` (variance dt)."""
        R = self.resolution
        wn = wavenumbers(R)
        z = self.normals(step)
        w = (z[:, 0] + 1j * z[:, 1]) * math.sqrt(self.dt / 2.0)
        dW = np.where(wn.upper, w, np.where(wn.active, np.conj(w[(..., *wn.neg)]), 0.0))
        # the k = 0 slot is unused by mode noise and drives the scalar Brownian motion
        db = z[:, 0, 0, 0] * math.sqrt(self.dt)
        if N is not None and N != R:
            dW = restrict_array(dW, N)
        if not self.batched:
            return dW[0], db[0]
        return dW, db


def sample_increment(model: NoiseModel, theta: SpectralField, dt: float, path: NoisePath,
                     step: int) -> SpectralField:
    """``G(theta) Delta W`` for one step of ``path`` (which must use time step ``dt``)."""
    if not math.isclose(dt, path.dt, rel_tol=1e-12):
        raise ValueError(f"path time step {path.dt} does not match dt={dt}")
    if path.batched:
        raise ValueError("sample_increment takes a single-member path")
    dW, db = path.increments(step, theta.N)
    return SpectralField(model.apply(theta.coeffs, dW, db), project=False)


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class TraceReport:
    value: float
    tail_exponent: float
    convergent: bool


def check_trace_condition(model: NoiseModel, alpha: float, eps: float, N: int) -> TraceReport:
    """Truncated ``Tr(Lambda^{2 - 2 alpha + eps} G G*)`` and the analytic tail verdict.

    The lattice sum of ``|k|^gamma`` converges iff ``gamma < -2``; here
    ``gamma = 2 - 2 alpha + eps - 2 decay`` where ``g(k) ~ |k|^{-decay}``.
    """
    if not model.additive:
        raise NotApplicableError("trace condition applies to additive noise only")
    wn = wavenumbers(N)
    g = model.amplitudes(N)
    weight = np.zeros_like(wn.kabs)
    weight[wn.active] = wn.kabs[wn.active] ** (2.0 - 2.0 * alpha + eps)
    value = float(np.sum(weight * g**2))
    decay = model.tail_decay
    if value == 0.0 or math.isinf(decay):
        return TraceReport(value, -math.inf, True)
    gamma = 2.0 - 2.0 * alpha + eps - 2.0 * decay
    return TraceReport(value, gamma, gamma < -2.0)


def check_growth_bound(model: NoiseModel, theta: SpectralField) -> tuple[float, float]:
    """``(|G(theta)|^2_{L2(K,H)}, lambda0 |theta|^2 + rho)``."""
    lam0, rho = model.growth_constants(theta.N)
    lhs = float(model.hs_norm_sq(theta.coeffs))
    rhs = lam0 * float(sobolev_norm_array(theta.coeffs, 0.0)) ** 2 + rho
    return lhs, rhs


def check_lipschitz_negative_half(model: NoiseModel, u: SpectralField,
                                  v: SpectralField) -> tuple[float, float]:
    """``(|Lambda^{-1/2}(G(u) - G(v))|_{L2(K,H)}, beta |Lambda^{-1/2}(u - v)|)``."""
    diff = float(sobolev_norm_array(u.coeffs - v.coeffs, -0.5))
    if model.additive:
        return 0.0, model.beta * diff
    # G(u) - G(v) = sigma (u - v) on the single noise direction
    return model.sigma * diff, model.beta * diff  # type: ignore[attr-defined]


def check_lp_noise_bound(model: NoiseModel, theta: SpectralField, p: float) -> tuple[float, float]:
    """``(int (sum_j |G(theta) e_j|^2)^{p/2} dx, C (1 + int |theta|^p dx))``."""
    if not (2.0 < p < math.inf):
        raise ValueError(f"need 2 < p < inf, got {p}")
    C = model.lp_constant(p, theta.N)
    theta_p = float(lp_norm_array(theta.coeffs, p)) ** p
    if model.additive:
        lhs = TWO_PI**2 * model.pointwise_variance(theta.N) ** (p / 2.0)  # type: ignore[attr-defined]
    else:
        lhs = model.sigma**p * theta_p  # type: ignore[attr-defined]
    return lhs, C * (1.0 + theta_p)
