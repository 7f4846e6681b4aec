"""Invariant suite run by ``sqgsim selfcheck``.

Each check returns ``(passed, detail)``; the detail carries the number that
decided it.  Checks use small resolutions so the whole suite takes seconds.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .integrator import SimConfig, Stepper, evolve, step
from .noise import (
    AdditiveDiagonal,
    LinearMultiplicative,
    NoiseModel,
    NoisePath,
    check_growth_bound,
    check_lipschitz_negative_half,
    check_lp_noise_bound,
    check_trace_condition,
    make_ergodic_covariance,
)
from .operators import OperatorParams, apply_dissipation, nonlinear_term, riesz_velocity, skew_symmetry_defect
from .spectral import SpectralField, sobolev_norm, to_physical, to_spectral, wavenumbers

__all__ = ["Check", "run_selfcheck", "checks_for"]

Check = Callable[[], tuple[bool, str]]


def _random(N: int, rng: np.random.Generator) -> SpectralField:
    c = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    wn = wavenumbers(N)
    return SpectralField(c / np.maximum(wn.kabs, 1.0) ** 2)


def _triad(theta: SpectralField) -> np.ndarray:
    """Direct convolution sum for ``u.grad theta``."""
    N = theta.N
    wn = wavenumbers(N)
    idx = list(zip(*np.nonzero(wn.active)))
    c = theta.coeffs
    out = np.zeros((N, N), dtype=complex)
    for i, j in idx:
        p1, p2 = wn.k1[i, j], wn.k2[i, j]
        pa = wn.kabs[i, j]
        u1, u2 = -1j * p2 / pa * c[i, j], 1j * p1 / pa * c[i, j]
        for a, b in idx:
            q1, q2 = wn.k1[a, b], wn.k2[a, b]
            k1, k2 = int(p1 + q1), int(p2 + q2)
            ki, kj = k1 % N, k2 % N
            if not (wn.active[ki, kj] and wn.k1[ki, kj] == k1 and wn.k2[ki, kj] == k2):
                continue
            out[ki, kj] += (u1 * 1j * q1 + u2 * 1j * q2) * c[a, b] / (2 * math.pi)
    return out


def checks_for(params: OperatorParams, noise: NoiseModel | None = None, seed: int = 0) -> dict[str, Check]:
    rng = np.random.default_rng(seed)
    models = {
        "additive": AdditiveDiagonal(amplitude=1.0, decay=2.0),
        "multiplicative": LinearMultiplicative(0.5),
        "ergodic": make_ergodic_covariance(params.alpha, params.kappa),
    }
    if noise is not None:
        models["configured"] = noise

    def hermitian_mean():
        worst = 0
        for N in (8, 16, 32):
            for _ in range(10):
                f = to_spectral(to_physical(_random(N, rng), 3 * N // 2), N)
                worst = max(worst, int(not f.is_hermitian()) + int(f.coeffs[0, 0] != 0))
        return worst == 0, f"violations={worst}"

    def round_trip():
        err = 0.0
        for N in (8, 16, 32):
            for _ in range(10):
                f = _random(N, rng)
                g = to_spectral(to_physical(f, 3 * N // 2), N)
                err = max(err, np.max(np.abs(g.coeffs - f.coeffs)) / np.max(np.abs(f.coeffs)))
        return err < 1e-12, f"max_rel_err={err:.3e}"

    def eigenrelation():
        N = 16
        wn = wavenumbers(N)
        f = _random(N, rng)
        out = apply_dissipation(f, params)
        lam = params.kappa * wn.kabs ** (2 * params.alpha)
        ok = np.array_equal(out.coeffs[wn.active], lam[wn.active] * f.coeffs[wn.active])
        return bool(ok), "exact per mode" if ok else "mismatch"

    def divergence():
        worst = max(float(np.max(np.abs(riesz_velocity(_random(16, rng)).divergence()))) for _ in range(5))
        return worst <= 1e-13, f"max_div={worst:.3e}"

    def triad():
        f = _random(8, rng)
        ref = _triad(f)
        err = float(np.max(np.abs(nonlinear_term(f).coeffs - ref)) / np.max(np.abs(ref)))
        return err < 1e-10, f"rel_err={err:.3e}"

    def skew():
        worst = max(skew_symmetry_defect(_random(32, rng)) for _ in range(10))
        return worst < 1e-10, f"max_defect={worst:.3e}"

    def noise_bounds():
        details, ok = [], True
        for name, model in models.items():
            for _ in range(10):
                u, v = _random(16, rng), _random(16, rng)
                lhs, rhs = check_growth_bound(model, u)
                ok &= lhs <= rhs * (1 + 1e-12)
                lhs, rhs = check_lipschitz_negative_half(model, u, v)
                ok &= lhs <= rhs * (1 + 1e-12)
                lhs, rhs = check_lp_noise_bound(model, u, 4.0)
                ok &= lhs <= rhs * (1 + 1e-12)
            details.append(name)
        return bool(ok), "families=" + ",".join(details)

    def trace():
        eps = 0.1
        erg = models["ergodic"]
        rep = check_trace_condition(erg, params.alpha, eps, 32)
        expected = 2 - 2 * params.alpha + eps - 2 * erg.tail_decay < -2
        div = not check_trace_condition(AdditiveDiagonal(1.0, 0.0), params.alpha, eps, 32).convergent
        return rep.convergent == expected and div, f"ergodic_convergent={rep.convergent} white_divergent={div}"

    def replay():
        cfg = SimConfig(params, 16, 0.01, 0.2, seed=seed, noise=models["ergodic"], initial="random_h1:1")
        a = evolve(cfg, cfg.initial_state().coeffs, cfg.make_path(), cfg.n_steps)
        b = evolve(cfg, cfg.initial_state().coeffs, cfg.make_path(), cfg.n_steps)
        return bool(np.array_equal(a, b)), "bit-identical" if np.array_equal(a, b) else "differs"

    def heat_factor():
        cfg = SimConfig(params, 8, 0.05, 1.0, nonlinear=False)
        f = _random(8, rng)
        out = step(f, cfg, cfg.make_path(), 0)
        ok = np.array_equal(out.coeffs, Stepper(cfg).decay * f.coeffs)
        return bool(ok), "exact" if ok else "mismatch"

    def path_refinement():
        coarse = NoisePath(seed, 0.02, 8, refine=2)
        fine = NoisePath(seed, 0.01, 8)
        err = max(float(np.max(np.abs(coarse.increments(n)[0] - fine.increments(2 * n)[0]
                                      - fine.increments(2 * n + 1)[0]))) for n in range(5))
        return err < 1e-14, f"max_err={err:.3e}"

    def dissipative():
        cfg = SimConfig(params, 16, 0.01, 0.5, initial="random_h1:2")
        norms = []
        evolve(cfg, cfg.initial_state().coeffs, cfg.make_path(), cfg.n_steps,
               callback=lambda n, th: norms.append(sobolev_norm(SpectralField(th, project=False), 0.0)))
        ratio = max(b / a for a, b in zip(norms, norms[1:]))
        bound = math.exp(-params.kappa * cfg.dt)
        return ratio <= bound * (1 + 1e-12), f"max_ratio={ratio:.6f} bound={bound:.6f}"

    return {
        "spectral.hermitian_zero_mean": hermitian_mean,
        "spectral.round_trip": round_trip,
        "operators.dissipation_eigenrelation": eigenrelation,
        "operators.divergence_free": divergence,
        "operators.triad_oracle": triad,
        "operators.skew_symmetry": skew,
        "noise.hypothesis_bounds": noise_bounds,
        "noise.trace_condition": trace,
        "noise.path_refinement": path_refinement,
        "integrator.replay": replay,
        "integrator.linear_factor": heat_factor,
        "integrator.unforced_dissipation": dissipative,
    }


def run_selfcheck(params: OperatorParams, noise: NoiseModel | None = None, seed: int = 0,
                  emit: Callable[[str], None] = print) -> bool:
    all_ok = True
    for name, check in checks_for(params, noise, seed).items():
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok
