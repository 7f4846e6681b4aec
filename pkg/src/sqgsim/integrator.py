"""Stochastic exponential Euler for ``d theta + A theta dt + u.grad theta dt = G(theta) dW``.

One step reads

    theta_{n+1}(k) = exp(-kappa |k|^{2 alpha} dt) [theta_n(k) - dt B(theta_n)(k) + (G(theta_n) dW_n)(k)]

so the linear part is exact and the noise enters before the semigroup (Ito).
States are coefficient arrays ``(..., N, N)``; a leading axis holds ensemble
members when the noise path is batched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .noise import NoiseModel, NoisePath
from .operators import OperatorParams, _advect_array, nonlinear_array
from .spectral import (
    SpectralField,
    from_function,
    inner_array,
    lp_norm_array,
    prolong_array,
    read_snapshot,
    restrict_array,
    sobolev_norm_array,
    wavenumbers,
)

__all__ = [
    "IntegrationError",
    "CFLViolation",
    "NonFiniteState",
    "SimConfig",
    "DiagnosticsRecord",
    "Trajectory",
    "SimResult",
    "Stepper",
    "ANALYTIC_FIELDS",
    "initial_field",
    "random_h1_field",
    "step",
    "evolve",
    "simulate",
    "energy_budget_residual",
    "weak_form_residual",
    "ResidualSummary",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "l2", "h_alpha", "lp4", "lp_inf", "dissipation", "noise_trace",
               "martingale", "residual", "cfl")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int, t: float):
        super().__init__(f"{message} (step {step}, t={t:.6g})")
        self.step = step
        self.t = t


class CFLViolation(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


ANALYTIC_FIELDS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "sin_x1": lambda x1, x2: np.sin(x1),
    "cos_x1": lambda x1, x2: np.cos(x1),
    "sin_x2": lambda x1, x2: np.sin(x2),
    "cos_x2": lambda x1, x2: np.cos(x2),
    "sin_2x1": lambda x1, x2: np.sin(2 * x1),
    "cos_2x2": lambda x1, x2: np.cos(2 * x2),
    "sin_x1_cos_2x2": lambda x1, x2: np.sin(x1) + np.cos(2 * x2),
    "taylor_green": lambda x1, x2: np.sin(x1) * np.sin(x2),
    "dipole": lambda x1, x2: np.sin(x1) * np.cos(x2) + 0.5 * np.cos(2 * x1 + x2),
}


def random_h1_field(N: int, norm: float, seed: int = 0, kmax: float = 4.0) -> SpectralField:
    """Random band-limited field (``|k| <= kmax``) scaled to ``|theta|_{H^1} = norm``."""
    wn = wavenumbers(N)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    band = wn.active & (wn.kabs <= min(kmax, N / 3))
    c = np.where(band, c / np.maximum(wn.kabs, 1.0), 0.0)
    field_ = SpectralField(c)
    h1 = float(sobolev_norm_array(field_.coeffs, 1.0))
    if h1 == 0.0:
        return field_
    return field_ * (norm / h1)


def initial_field(spec: str | SpectralField, N: int, seed: int = 0) -> SpectralField:
    """Resolve ``zero | analytic:<name> | snapshot:<path> | random_h1:<norm>``."""
    if isinstance(spec, SpectralField):
        if spec.N == N:
            return spec
        return SpectralField(restrict_array(spec.coeffs, N) if spec.N > N
                             else prolong_array(spec.coeffs, N), project=False)
    kind, _, arg = spec.partition(":")
    if kind == "zero":
        return SpectralField.zeros(N)
    if kind == "analytic":
        if arg not in ANALYTIC_FIELDS:
            raise ValueError(f"unknown analytic field {arg!r}; known: {sorted(ANALYTIC_FIELDS)}")
        return from_function(ANALYTIC_FIELDS[arg], N)
    if kind == "snapshot":
        snap = read_snapshot(arg)
        return initial_field(snap.field, N)
    if kind == "random_h1":
        return random_h1_field(N, float(arg), seed)
    raise ValueError(f"unknown initial condition {spec!r}")


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a run; ``(config, seed)`` fixes every output bit."""

    params: OperatorParams
    N: int
    dt: float
    T: float
    seed: int = 0
    noise: NoiseModel | None = None
    initial: str | SpectralField = "zero"
    init_seed: int = 0
    cadence: int = 1
    nonlinear: bool = True
    # noise is drawn at this (finer) resolution and restricted; defaults to N
    path_resolution: int | None = None
    refine: int = 1
    stream: int = 0
    cfl_limit: float = 0.5

    def __post_init__(self):
        wavenumbers(self.N)
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.T > 0 and self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds horizon T={self.T}")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    @property
    def n_steps(self) -> int:
        ratio = self.T / self.dt
        nearest = round(ratio)
        return int(nearest) if abs(ratio - nearest) < 1e-9 * max(1.0, ratio) else math.ceil(ratio)

    def make_path(self, *, members=None, stream: int | None = None, n_steps: int | None = None) -> NoisePath:
        return NoisePath(self.seed, self.dt, self.path_resolution or self.N,
                         n_steps=n_steps, stream=self.stream if stream is None else stream,
                         members=members, refine=self.refine)

    def initial_state(self) -> SpectralField:
        return initial_field(self.initial, self.N, self.init_seed)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2: float
    h_alpha: float
    lp4: float
    lp_inf: float
    dissipation: float
    noise_trace: float
    martingale: float
    residual: float
    cfl: float

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_steps + 1, N, N)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, n: int) -> SpectralField:
        return SpectralField(self.states[n], project=False)


@dataclass
class SimResult:
    final: SpectralField
    diagnostics: list[DiagnosticsRecord] = field(default_factory=list)
    trajectory: Trajectory | None = None
    snapshots: list[tuple[float, SpectralField]] = field(default_factory=list)


class Stepper:
    """Precomputed propagator for one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.symbol = cfg.params.symbol(cfg.N)
        self.decay = np.exp(-self.symbol * cfg.dt)
        self.noise = cfg.noise
        self.amplitudes = (cfg.noise.amplitudes(cfg.N)
                           if cfg.noise is not None and cfg.noise.additive else None)
        self.cfl_factor = cfg.dt * (cfg.N / 3.0)

    def forcing(self, theta: np.ndarray, dW: np.ndarray, db: np.ndarray) -> np.ndarray:
        if self.noise is None:
            return np.zeros_like(theta)
        if self.amplitudes is not None:
            return self.amplitudes * dW
        return self.noise.apply(theta, dW, db)

    def drift(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        if not self.cfg.nonlinear:
            return np.zeros_like(theta), 0.0
        B, umax = nonlinear_array(theta, with_umax=True)
        return B, float(np.max(umax)) * self.cfl_factor

    def advance(self, theta: np.ndarray, dW: np.ndarray, db: np.ndarray):
        """Return ``(theta_next, forcing, cfl)`` for one step."""
        B, cfl = self.drift(theta)
        GdW = self.forcing(theta, dW, db)
        return self.decay * (theta - self.cfg.dt * B + GdW), GdW, cfl

    def noise_trace(self, theta: np.ndarray) -> np.ndarray:
        """``dt |G(theta)|^2_{L2(K,H)}``."""
        if self.noise is None:
            return np.zeros(theta.shape[:-2])
        return self.cfg.dt * self.noise.hs_norm_sq(theta)


def _guard(theta: np.ndarray, cfl: float, cfg: SimConfig, n: int):
    t = (n + 1) * cfg.dt
    if cfl > cfg.cfl_limit:
        raise CFLViolation(f"advective CFL {cfl:.3g} exceeds {cfg.cfl_limit}", n, t)
    if not np.all(np.isfinite(theta)):
        raise NonFiniteState("non-finite state", n, t)


def step(theta: SpectralField, cfg: SimConfig, path: NoisePath, n: int) -> SpectralField:
    """Advance one step of size ``cfg.dt`` using increment ``n`` of ``path``."""
    if cfg.T > 0 and n >= cfg.n_steps:
        raise IndexError(f"step {n} at or beyond horizon ({cfg.n_steps} steps)")
    stepper = Stepper(cfg)
    dW, db = path.increments(n, cfg.N)
    new, _, cfl = stepper.advance(theta.coeffs, dW, db)
    _guard(new, cfl, cfg, n)
    return SpectralField(new, project=False)


def evolve(cfg: SimConfig, theta0: np.ndarray, path: NoisePath, n_steps: int, *,
           start_step: int = 0, callback: Callable[[int, np.ndarray], None] | None = None,
           stepper: Stepper | None = None) -> np.ndarray:
    """Array-level loop; ``callback(n, theta)`` sees the state after ``n`` total steps."""
    stepper = stepper or Stepper(cfg)
    theta = np.array(theta0, dtype=complex)
    if path.batched and theta.ndim == 2:
        theta = np.broadcast_to(theta, (path.member_ids.size,) + theta.shape).copy()
    for n in range(start_step, start_step + n_steps):
        dW, db = path.increments(n, cfg.N)
        theta, _, cfl = stepper.advance(theta, dW, db)
        _guard(theta, cfl, cfg, n)
        if callback is not None:
            callback(n + 1, theta)
    return theta


def _record(stepper: Stepper, t: float, theta: np.ndarray, budget, cfl: float) -> DiagnosticsRecord:
    p = stepper.cfg.params
    diss, trace, mart, resid = budget
    return DiagnosticsRecord(
        t=t,
        l2=float(sobolev_norm_array(theta, 0.0)),
        h_alpha=float(sobolev_norm_array(theta, p.alpha)),
        lp4=float(lp_norm_array(theta, 4.0)),
        lp_inf=float(lp_norm_array(theta, math.inf)),
        dissipation=diss,
        noise_trace=trace,
        martingale=mart,
        residual=resid,
        cfl=cfl,
    )


def _budget_terms(stepper: Stepper, old: np.ndarray, new: np.ndarray, GdW: np.ndarray):
    p = stepper.cfg.params
    dt = stepper.cfg.dt
    diss = 2.0 * p.kappa * dt * sobolev_norm_array(old, p.alpha) ** 2
    trace = stepper.noise_trace(old)
    mart = 2.0 * inner_array(old, GdW)
    resid = sobolev_norm_array(new, 0.0) ** 2 - sobolev_norm_array(old, 0.0) ** 2 + diss - mart - trace
    return diss, trace, mart, resid


def simulate(cfg: SimConfig, *, path: NoisePath | None = None, record_trajectory: bool = False,
             snapshot_every: int | None = None, diagnostics: bool = True) -> SimResult:
    """Run ``cfg`` for ``ceil(T / dt)`` steps from its initial condition."""
    path = path or cfg.make_path()
    stepper = Stepper(cfg)
    theta = cfg.initial_state().coeffs.copy()
    n_total = cfg.n_steps
    result = SimResult(final=SpectralField(theta, project=False))
    states = [theta] if record_trajectory else None
    if diagnostics:
        result.diagnostics.append(_record(stepper, 0.0, theta, (0.0, 0.0, 0.0, 0.0), 0.0))
    if snapshot_every:
        result.snapshots.append((0.0, result.final))
    for n in range(n_total):
        dW, db = path.increments(n, cfg.N)
        new, GdW, cfl = stepper.advance(theta, dW, db)
        _guard(new, cfl, cfg, n)
        t = (n + 1) * cfg.dt
        if diagnostics and ((n + 1) % cfg.cadence == 0 or n + 1 == n_total):
            terms = tuple(float(x) for x in _budget_terms(stepper, theta, new, GdW))
            result.diagnostics.append(_record(stepper, t, new, terms, cfl))
        if snapshot_every and (n + 1) % snapshot_every == 0:
            result.snapshots.append((t, SpectralField(new, project=False)))
        if states is not None:
            states.append(new)
        theta = new
    result.final = SpectralField(theta, project=False)
    if states is not None:
        result.trajectory = Trajectory(cfg.dt * np.arange(n_total + 1), np.stack(states))
    return result


@dataclass(frozen=True)
class ResidualSummary:
    values: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.values))) if self.values.size else 0.0


def energy_budget_residual(trajectory: Trajectory, cfg: SimConfig,
                           path: NoisePath | None = None) -> ResidualSummary:
    """Per-step defect of the Ito energy identity along a recorded trajectory.

    ``r_n = |theta_{n+1}|^2 - |theta_n|^2 + 2 kappa dt |theta_n|_{H^alpha}^2
    - 2 <theta_n, G dW_n> - dt |G(theta_n)|^2_{L2(K,H)}``.  The transport term
    contributes nothing because ``<B(theta), theta> = 0``.
    """
    path = path or cfg.make_path()
    stepper = Stepper(cfg)
    S = trajectory.states
    out = np.empty(len(S) - 1)
    for n in range(len(S) - 1):
        dW, db = path.increments(n, cfg.N)
        GdW = stepper.forcing(S[n], dW, db)
        out[n] = _budget_terms(stepper, S[n], S[n + 1], GdW)[3]
    return ResidualSummary(out)


def weak_form_residual(trajectory: Trajectory, psi: SpectralField, path: NoisePath | None,
                       cfg: SimConfig) -> float:
    """Defect of the tested integral equation at the final time, divided by ``|psi|``."""
    if path is None:
        raise ValueError("weak-form residual needs the noise path that drove the trajectory")
    stepper = Stepper(cfg)
    S = trajectory.states
    psi_c = psi.coeffs
    A_psi = stepper.symbol * psi_c  # <A^{1/2} a, A^{1/2} b> = <a, A b>
    dissipation = 0.0
    transport = 0.0
    noise = 0.0
    for n in range(len(S) - 1):
        dissipation += cfg.dt * float(inner_array(S[n], A_psi))
        if cfg.nonlinear:
            transport += cfg.dt * float(inner_array(_advect_array(S[n], psi_c), S[n]))
        dW, db = path.increments(n, cfg.N)
        noise += float(inner_array(stepper.forcing(S[n], dW, db), psi_c))
    total = (float(inner_array(S[-1], psi_c)) + dissipation - transport
             - float(inner_array(S[0], psi_c)) - noise)
    return abs(total) / float(sobolev_norm_array(psi_c, 0.0))
