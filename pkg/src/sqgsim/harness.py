"""Theorem-level numerical experiments.

Each experiment returns an :class:`~sqgsim.reporting.ExperimentReport` whose
verdicts sit next to the numbers behind them.  Experiments label themselves
inside or outside the hypotheses they probe; outside, verdicts are ``None``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .integrator import IntegrationError, SimConfig, Stepper, evolve, initial_field
from .noise import ErgodicCovariance, NotApplicableError
from .reporting import ExperimentReport, describe_config, digest
from .spectral import (
    SpectralField,
    inner_array,
    lp_norm_array,
    prolong_array,
    restrict_array,
    sobolev_norm_array,
    wavenumbers,
)

__all__ = [
    "Observable",
    "ObservableSet",
    "batch_means",
    "lp_uniqueness_regime",
    "galerkin_convergence",
    "pathwise_uniqueness_probe",
    "lp_supremum_monitor",
    "markov_property_test",
    "ergodic_average",
    "exponential_mixing_fit",
    "MIN_SAMPLES",
]

Observable = Callable[[np.ndarray], np.ndarray]

# no verdict is computed from fewer samples than this
MIN_SAMPLES = 100


def energy(c: np.ndarray) -> np.ndarray:
    return sobolev_norm_array(c, 0.0) ** 2


def lowest_shell_energy(c: np.ndarray) -> np.ndarray:
    wn = wavenumbers(c.shape[-1])
    return np.sum(np.abs(c) ** 2 * (wn.kabs == 1.0), axis=(-2, -1))


def mode_energy(k1: int, k2: int) -> Observable:
    """``|c(k)|^2`` for one wavevector."""
    def f(c):
        N = c.shape[-1]
        return np.abs(c[..., k1 % N, k2 % N]) ** 2
    return f


def mode_projection(psi: SpectralField) -> Observable:
    """The linear functional ``<theta, psi>``."""
    def f(c):
        N = c.shape[-1]
        p = psi.coeffs if psi.N == N else (restrict_array if psi.N > N else prolong_array)(psi.coeffs, N)
        return inner_array(c, p)
    return f


class ObservableSet(Mapping[str, Observable]):
    """Named real functionals evaluated on coefficient arrays ``(..., N, N)``."""

    def __init__(self, observables: Mapping[str, Observable]):
        if not observables:
            raise ValueError("at least one observable is required")
        self._obs = dict(observables)

    @classmethod
    def default(cls, alpha: float) -> "ObservableSet":
        return cls({
            "energy": energy,
            "h_alpha_sq": lambda c: sobolev_norm_array(c, alpha) ** 2,
            "shell1_energy": lowest_shell_energy,
            "lp4": lambda c: lp_norm_array(c, 4.0),
        })

    def __getitem__(self, name: str) -> Observable:
        return self._obs[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._obs)

    def __len__(self) -> int:
        return len(self._obs)

    def evaluate(self, states: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.asarray(f(states), dtype=float) for name, f in self._obs.items()}


def batch_means(x: np.ndarray, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means standard error of a stationary series."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise ValueError(f"series of length {x.size} too short for {n_batches} batches")
    b = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(b.mean()), float(b.std(ddof=1) / math.sqrt(n_batches))


def lp_uniqueness_regime(alpha: float, p: float) -> bool:
    """``0 <= 1/p < alpha - 1/2``, with ``1/p = 0`` for ``p = inf``."""
    inv = 0.0 if math.isinf(p) else 1.0 / p
    return inv < alpha - 0.5


def _observables(cfg: SimConfig, observables) -> ObservableSet:
    if observables is None:
        return ObservableSet.default(cfg.params.alpha)
    return observables if isinstance(observables, ObservableSet) else ObservableSet(observables)


def _steps(cfg: SimConfig, t: float) -> int:
    return cfg.with_(T=t).n_steps if t > 0 else 0


def _additive(cfg: SimConfig) -> bool:
    return cfg.noise is None or cfg.noise.additive


def _ergodic_noise(cfg: SimConfig) -> bool:
    return isinstance(cfg.noise, ErgodicCovariance)


def _field(spec, cfg: SimConfig, N: int | None = None) -> np.ndarray:
    return initial_field(spec, N or cfg.N, cfg.init_seed).coeffs


# ---------------------------------------------------------------------------
# Galerkin convergence


def galerkin_convergence(cfg: SimConfig, resolutions: Sequence[int]) -> ExperimentReport:
    """Truncation errors ``e(N) = |theta_N(T) - P_N theta_Nmax(T)|`` under one projected noise path."""
    res = [int(n) for n in resolutions]
    if len(res) < 2:
        raise ValueError("need at least two resolutions")
    if any(b < a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be non-decreasing (nested), got {res}")
    Nmax = res[-1]
    theta0 = cfg.with_(N=Nmax).initial_state()

    finals = {}
    for N in sorted(set(res)):
        c = cfg.with_(N=N, path_resolution=Nmax)
        finals[N] = evolve(c, restrict_array(theta0.coeffs, N), c.make_path(), c.n_steps)

    ref = finals[Nmax]
    ref_norm = float(sobolev_norm_array(ref, 0.0))
    rows = []
    for N in res:
        e = float(sobolev_norm_array(finals[N] - restrict_array(ref, N), 0.0))
        rows.append({"N": N, "e": e, "e_rel": e / ref_norm if ref_norm > 0 else 0.0})

    subcritical = cfg.params.alpha > 0.5
    coarse = sorted({r["N"]: r["e"] for r in rows if r["N"] < Nmax}.items())
    decreasing = all(a[1] > b[1] for a, b in zip(coarse, coarse[1:])) if len(coarse) > 1 else True
    return ExperimentReport(
        name="galerkin_convergence",
        digest=digest(describe_config(cfg), {"resolutions": res}),
        rows=rows,
        verdicts={"e_strictly_decreasing": decreasing if subcritical else None},
        constants={"reference_N": Nmax, "reference_l2": ref_norm},
        regime={"alpha": cfg.params.alpha, "alpha_gt_half": subcritical},
        in_regime=subcritical,
    )


# ---------------------------------------------------------------------------
# Pathwise uniqueness


def pathwise_uniqueness_probe(cfg: SimConfig, delta: float, *, perturbation: SpectralField | None = None,
                              tolerance: float = 1e-2) -> ExperimentReport:
    """Distance between two runs on one noise path whose initial data differ by ``delta`` in L2.

    The default perturbation is ``cos x1`` normalized to unit L2 norm, a ``|k| = 1`` mode.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    N = cfg.N
    if perturbation is None:
        perturbation = initial_field("analytic:cos_x1", N)
    pert = perturbation.coeffs / float(sobolev_norm_array(perturbation.coeffs, 0.0))
    a = cfg.initial_state().coeffs.copy()
    b = a + delta * pert

    stepper = Stepper(cfg)
    path = cfg.make_path()
    rows = [{"t": 0.0, "d": float(sobolev_norm_array(a - b, 0.0))}]
    event = None
    for n in range(cfg.n_steps):
        dW, db = path.increments(n, N)
        # advanced one at a time so delta = 0 is a true replay
        a, _, cfl_a = stepper.advance(a, dW, db)
        b, _, cfl_b = stepper.advance(b, dW, db)
        if max(cfl_a, cfl_b) > cfg.cfl_limit or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            event = (n + 1) * cfg.dt
            break
        rows.append({"t": (n + 1) * cfg.dt, "d": float(sobolev_norm_array(a - b, 0.0))})

    d = np.array([r["d"] for r in rows])
    sup_d = float(d.max())
    subcritical = cfg.params.alpha > 0.5 or not cfg.nonlinear
    constants = {"delta": delta, "sup_d": sup_d, "d_T": float(d[-1])}
    if delta > 0:
        constants["C_estimate"] = sup_d / delta
    if event is not None:
        constants["event_time"] = event

    if delta == 0:
        verdicts = {"identical_trajectories": event is None and bool(np.all(d == 0.0))}
    else:
        ok = event is None and math.isfinite(sup_d) and sup_d < tolerance
        verdicts = {"continuous_dependence": ok if subcritical else None}
    return ExperimentReport(
        name="pathwise_uniqueness_probe",
        digest=digest(describe_config(cfg), {"delta": delta, "perturbation": perturbation,
                                             "tolerance": tolerance}),
        rows=rows,
        verdicts=verdicts,
        constants=constants,
        regime={"alpha": cfg.params.alpha, "subcritical_or_linear": subcritical},
        in_regime=subcritical,
    )


# ---------------------------------------------------------------------------
# L^p supremum


def _stationary_scale(cfg: SimConfig) -> float:
    """L2 size of the linear stationary state, ``sqrt(sum g^2 / (2 lambda_k))``."""
    if cfg.noise is None or not cfg.noise.additive:
        return 0.0
    g = cfg.noise.amplitudes(cfg.N)
    lam = cfg.params.symbol(cfg.N)
    wn = wavenumbers(cfg.N)
    return float(math.sqrt(np.sum(g[wn.active] ** 2 / (2 * lam[wn.active]))))


def lp_supremum_monitor(cfg: SimConfig, p: float, T_long: float, *, ceiling: float | None = None,
                        sample_every: int = 1) -> ExperimentReport:
    """Running supremum of ``|theta(t)|_{L^p}`` over ``[0, T_long]``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    run = cfg.with_(T=T_long)
    theta0 = run.initial_state().coeffs
    init = float(lp_norm_array(theta0, p))
    scale = _stationary_scale(run)
    if ceiling is None:
        ceiling = 1e3 * (init + scale)

    rows = [{"t": 0.0, "lp": init}]
    state = {"sup": init, "t_sup": 0.0, "event": None}

    class _Exceeded(Exception):
        pass

    def cb(n, theta):
        if n % sample_every and n != run.n_steps:
            return
        v = float(lp_norm_array(theta, p))
        t = n * run.dt
        rows.append({"t": t, "lp": v})
        if v > state["sup"]:
            state["sup"], state["t_sup"] = v, t
        if v > ceiling:
            state["event"] = ("ceiling_exceeded", t)
            raise _Exceeded

    try:
        evolve(run, theta0, run.make_path(), run.n_steps, callback=cb)
    except _Exceeded:
        pass
    except IntegrationError as exc:
        state["event"] = (type(exc).__name__, exc.t)

    additive = _additive(run)
    inside = additive and lp_uniqueness_regime(run.params.alpha, p)
    # L^p bounds need additive noise, or the growth bound with 2 < p < inf
    bound_applies = additive or (2 < p < math.inf)
    constants = {"p": p, "sup_lp": state["sup"], "t_sup": state["t_sup"], "initial_lp": init,
                 "noise_scale": scale, "ceiling": ceiling}
    notes = []
    if state["event"] is not None:
        kind, t = state["event"]
        constants["event"] = kind
        constants["event_time"] = t
        notes.append(f"{kind} first detected at t={t!r}")
    return ExperimentReport(
        name="lp_supremum_monitor",
        digest=digest(describe_config(run), {"p": p, "T_long": T_long, "ceiling": ceiling,
                                             "sample_every": sample_every}),
        rows=rows,
        verdicts={"non_blow_up": (state["event"] is None) if bound_applies else None},
        constants=constants,
        regime={"alpha": run.params.alpha, "p": p, "additive": additive,
                "uniqueness_regime": inside},
        in_regime=bound_applies,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Markov property


def _z(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float, float, float]:
    ma, mb = float(a.mean()), float(b.mean())
    sa, sb = float(a.std(ddof=1) / math.sqrt(a.size)), float(b.std(ddof=1) / math.sqrt(b.size))
    se = math.hypot(sa, sb)
    z = 0.0 if ma == mb else (ma - mb) / se if se > 0 else math.inf
    return ma, sa, mb, sb, z


def markov_property_test(cfg: SimConfig, s: float, t: float, observables=None, m: int = 2000
                         ) -> ExperimentReport:
    """Direct vs. restarted estimators of ``E F(theta(s + t))``.

    (A) runs ``m`` members straight to ``s + t``.  (B) shares the first ``s``
    with (A), then continues each member from ``theta(s)`` on an independent
    noise stream.  Sharing ``[0, s]`` makes ``t = 0`` identical by construction;
    the induced positive correlation only makes the two-sample z conservative.
    """
    if not _additive(cfg):
        raise NotApplicableError("Markov test requires additive (state-independent) noise")
    if s <= 0 or t < 0:
        raise ValueError("need s > 0 and t >= 0")
    obs = _observables(cfg, observables)
    ns, nt = _steps(cfg, s), _steps(cfg, t)
    path_a = cfg.make_path(members=m)
    path_b = cfg.make_path(members=m, stream=cfg.stream + 1)
    stepper = Stepper(cfg)

    mid = evolve(cfg, cfg.initial_state().coeffs, path_a, ns, stepper=stepper)
    end_a = evolve(cfg, mid, path_a, nt, start_step=ns, stepper=stepper)
    end_b = evolve(cfg, mid, path_b, nt, stepper=stepper)

    va, vb = obs.evaluate(end_a), obs.evaluate(end_b)
    rows, zs = [], []
    for name in obs:
        ma, sa, mb, sb, z = _z(va[name], vb[name])
        rows.append({"observable": name, "mean_direct": ma, "se_direct": sa,
                     "mean_restart": mb, "se_restart": sb, "z": z})
        zs.append(z)

    in_regime = cfg.params.alpha > 0.5 or not cfg.nonlinear
    enough = m >= MIN_SAMPLES
    verdict = all(abs(z) <= 3.0 for z in zs) if (in_regime and enough) else None
    notes = [] if enough else [f"ensemble size {m} < {MIN_SAMPLES}: no verdict"]
    return ExperimentReport(
        name="markov_property_test",
        digest=digest(describe_config(cfg), {"s": s, "t": t, "m": m, "observables": list(obs)}),
        rows=rows,
        verdicts={"abs_z_le_3": verdict},
        constants={"s": ns * cfg.dt, "t": nt * cfg.dt, "m": m, "max_abs_z": max(abs(z) for z in zs)},
        regime={"alpha": cfg.params.alpha, "alpha_gt_half": cfg.params.alpha > 0.5, "additive": True},
        in_regime=in_regime,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Ergodicity and mixing


def _ergodic_regime(cfg: SimConfig) -> tuple[bool, dict]:
    alpha_ok = cfg.params.alpha > 2.0 / 3.0
    noise_ok = _ergodic_noise(cfg)
    return alpha_ok and noise_ok, {"alpha": cfg.params.alpha, "alpha_gt_two_thirds": alpha_ok,
                                   "ergodic_covariance_noise": noise_ok}


def _pair_starts(cfg: SimConfig, starts) -> tuple[np.ndarray, np.ndarray]:
    x0, x1 = starts
    return _field(x0, cfg), _field(x1, cfg)


def ergodic_average(cfg: SimConfig, observables=None, burn_in: float | None = None,
                    T_long: float = 200.0, *, starts=("zero", "random_h1:3"),
                    n_batches: int = 20, sample_every: int = 1) -> ExperimentReport:
    """Time averages after burn-in from two initial conditions, with batch-means errors."""
    obs = _observables(cfg, observables)
    run = cfg.with_(T=T_long)
    burn = 0.2 * T_long if burn_in is None else burn_in
    if not 0 <= burn < T_long:
        raise ValueError("burn_in must lie in [0, T_long)")
    nb = _steps(run, burn)
    x0, x1 = _pair_starts(run, starts)
    s_reg = cfg.noise.s if _ergodic_noise(cfg) else None

    samples: dict[str, list] = {name: [] for name in obs}
    sup_ws = np.zeros(2)

    def cb(n, theta):
        if n <= nb or (n - nb) % sample_every:
            return
        for name, v in obs.evaluate(theta).items():
            samples[name].append(v)
        if s_reg is not None:
            np.maximum(sup_ws, sobolev_norm_array(theta, s_reg), out=sup_ws)

    evolve(run, np.stack([x0, x1]), run.make_path(members=2), run.n_steps, callback=cb)

    rows, agree = [], []
    n_samples = len(next(iter(samples.values())))
    for name, vals in samples.items():
        arr = np.array(vals)
        m0, se0 = batch_means(arr[:, 0], n_batches)
        m1, se1 = batch_means(arr[:, 1], n_batches)
        comb = math.hypot(se0, se1)
        rows.append({"observable": name, "mean_start0": m0, "se_start0": se0,
                     "mean_start1": m1, "se_start1": se1, "combined_se": comb,
                     "gap_over_se": abs(m0 - m1) / comb if comb > 0 else (0.0 if m0 == m1 else math.inf)})
        agree.append(abs(m0 - m1) <= 3 * comb)

    in_regime, regime = _ergodic_regime(cfg)
    enough = n_samples >= MIN_SAMPLES
    constants = {"T_long": T_long, "burn_in": nb * run.dt, "samples_per_start": n_samples,
                 "n_batches": n_batches}
    if s_reg is not None:
        constants["sup_sobolev_s_start0"] = float(sup_ws[0])
        constants["sup_sobolev_s_start1"] = float(sup_ws[1])
    return ExperimentReport(
        name="ergodic_average",
        digest=digest(describe_config(run), {"burn_in": burn, "starts": list(starts),
                                             "n_batches": n_batches, "sample_every": sample_every,
                                             "observables": list(obs)}),
        rows=rows,
        verdicts={"averages_agree": all(agree) if (in_regime and enough) else None},
        constants=constants,
        regime=regime,
        in_regime=in_regime,
    )


def _ols(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Slope, its standard error, intercept and R^2 of ``y ~ a + b t``."""
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * t.mean())
    resid = y - intercept - slope * t
    ssr = float(resid @ resid)
    sst = float((y - y.mean()) @ (y - y.mean()))
    se = math.sqrt(ssr / (t.size - 2) / sxx) if t.size > 2 else math.inf
    return slope, se, intercept, 1.0 - ssr / sst if sst > 0 else 1.0


def exponential_mixing_fit(cfg: SimConfig, observables=None, t_grid: Sequence[float] = (),
                           m: int = 200, *, starts=("zero", "random_h1:3"),
                           coupled: bool = True) -> ExperimentReport:
    """Fit ``log d(t) ~ log C - a t`` to the observable gap between two ensembles.

    ``d(t)`` sums ``|mean_0 F - mean_1 F|`` over observables; its noise floor
    sums the standard errors of those gaps.  With ``coupled`` the two
    ensembles share member noise (common random numbers) and errors come from
    paired differences; otherwise they use disjoint members.
    """
    obs = _observables(cfg, observables)
    grid = sorted({_steps(cfg, float(t)) for t in t_grid})
    if len(grid) < 3:
        raise ValueError("t_grid needs at least three distinct times")
    run = cfg.with_(T=max(grid[-1], 1) * cfg.dt)
    x0, x1 = _pair_starts(run, starts)
    members = list(range(m)) * 2 if coupled else list(range(2 * m))
    state = np.concatenate([np.broadcast_to(x0, (m,) + x0.shape), np.broadcast_to(x1, (m,) + x1.shape)])

    want = set(grid)
    gaps: dict[int, tuple[float, float]] = {}

    def record(n, theta):
        if n not in want:
            return
        d, floor = 0.0, 0.0
        for v in obs.evaluate(theta).values():
            a, b = v[:m], v[m:]
            if coupled:
                diff = a - b
                se = float(diff.std(ddof=1) / math.sqrt(m))
            else:
                se = math.hypot(a.std(ddof=1), b.std(ddof=1)) / math.sqrt(m)
            d += abs(float(a.mean() - b.mean()))
            floor += se
        gaps[n] = (d, floor)

    record(0, state)
    evolve(run, state, run.make_path(members=members), grid[-1], callback=record)

    rows = [{"t": n * run.dt, "d": gaps[n][0], "noise_floor": gaps[n][1],
             "in_window": False} for n in grid]
    # leading run of points where the gap clears the noise floor
    window = []
    for r in rows:
        if r["d"] <= 3 * r["noise_floor"]:
            break
        r["in_window"] = True
        window.append(r)
    in_regime, regime = _ergodic_regime(cfg)
    constants: dict = {"m": m, "coupled": coupled, "window_points": len(window)}
    notes = []
    enough = m >= MIN_SAMPLES
    if not window:
        verdict: bool | None = True
        constants["status"] = "already mixed"
        notes.append("d(t) at the Monte Carlo noise floor for every t; rate not reported")
    elif len(window) < 3:
        verdict = False
        constants["status"] = "window too short to fit"
    else:
        tw = np.array([r["t"] for r in window])
        yw = np.log([r["d"] for r in window])
        slope, se, intercept, r2 = _ols(tw, yw)
        constants.update({"a_hat": -slope, "slope_se": se, "C_hat": math.exp(intercept),
                          "r_squared": r2, "window_start": float(tw[0]), "window_end": float(tw[-1])})
        constants["status"] = "fitted"
        verdict = slope < 0 and -slope > 3 * se
    if not enough:
        notes.append(f"ensemble size {m} < {MIN_SAMPLES}: no verdict")
    return ExperimentReport(
        name="exponential_mixing_fit",
        digest=digest(describe_config(run), {"t_grid": [n * run.dt for n in grid], "m": m,
                                             "starts": list(starts), "coupled": coupled,
                                             "observables": list(obs)}),
        rows=rows,
        verdicts={"significant_decay": verdict if (in_regime and enough) else None},
        constants=constants,
        regime=regime,
        in_regime=in_regime,
        notes=notes,
    )
