import math

import numpy as np
import pytest

from sqgsim.harness import (
    ObservableSet,
    batch_means,
    ergodic_average,
    exponential_mixing_fit,
    galerkin_convergence,
    lowest_shell_energy,
    lp_supremum_monitor,
    lp_uniqueness_regime,
    markov_property_test,
    mode_energy,
    mode_projection,
    pathwise_uniqueness_probe,
)
from sqgsim.integrator import SimConfig
from sqgsim.noise import AdditiveDiagonal, LinearMultiplicative, NotApplicableError, make_ergodic_covariance
from sqgsim.operators import OperatorParams
from sqgsim.reporting import ExperimentReport
from sqgsim.spectral import from_function

P75 = OperatorParams(0.75, 1.0)
ERG = make_ergodic_covariance(0.75, 1.0)
SINGLE = AdditiveDiagonal(amplitude=1.0, modes=((1, 0),))


def cos_x1(N):
    return from_function(lambda x1, x2: np.cos(x1), N)


def nonlinear_cfg(**kw):
    base = dict(params=P75, N=16, dt=0.01, T=1.0, seed=3, noise=ERG, initial="random_h1:2")
    base.update(kw)
    return SimConfig(**base)


def linear_cfg(**kw):
    base = dict(params=P75, N=8, dt=0.01, T=1.0, seed=5, noise=SINGLE, nonlinear=False)
    base.update(kw)
    return SimConfig(**base)


class TestObservables:
    def test_defaults(self):
        obs = ObservableSet.default(0.75)
        assert list(obs) == ["energy", "h_alpha_sq", "shell1_energy", "lp4"]
        v = obs.evaluate(cos_x1(8).coeffs)
        # |cos x1|^2 = 2 pi^2, all on the unit shell
        assert v["energy"] == pytest.approx(2 * math.pi**2)
        assert v["h_alpha_sq"] == pytest.approx(2 * math.pi**2)
        assert v["shell1_energy"] == pytest.approx(2 * math.pi**2)

    def test_batched_shapes(self, rng):
        states = np.stack([cos_x1(8).coeffs] * 3)
        v = ObservableSet.default(0.6).evaluate(states)
        assert all(x.shape == (3,) for x in v.values())

    def test_mode_energy_and_projection(self):
        c = cos_x1(8).coeffs
        assert mode_energy(1, 0)(c) == pytest.approx(math.pi**2)
        assert mode_energy(-1, 0)(c) == pytest.approx(math.pi**2)
        assert mode_projection(cos_x1(16))(c) == pytest.approx(2 * math.pi**2)
        assert lowest_shell_energy(from_function(lambda a, b: np.sin(2 * b), 8).coeffs) < 1e-28

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ObservableSet({})


class TestBatchMeans:
    def test_iid(self):
        x = np.random.default_rng(0).standard_normal(20_000)
        m, se = batch_means(x)
        assert abs(m) < 4 * se
        assert se == pytest.approx(1 / math.sqrt(20_000), rel=0.4)

    def test_too_short(self):
        with pytest.raises(ValueError):
            batch_means(np.ones(5))


class TestRegimeTable:
    @pytest.mark.parametrize("alpha,p,inside", [
        (0.75, 8, True), (0.6, 4, False), (0.75, 4, False),
        (0.9, 3, True), (0.55, math.inf, True), (0.5, math.inf, False),
    ])
    def test_flag(self, alpha, p, inside):
        assert lp_uniqueness_regime(alpha, p) is inside


class TestGalerkin:
    def test_cauchy(self):
        r = galerkin_convergence(nonlinear_cfg(), [8, 16, 32])
        e = r.column("e")
        assert e[0] > e[1] > e[2] == 0.0
        assert r.verdicts == {"e_strictly_decreasing": True}

    def test_linear_exact(self):
        r = galerkin_convergence(nonlinear_cfg(nonlinear=False, N=8), [8, 16, 32])
        assert np.all(r.column("e") == 0.0)

    def test_repeated_resolution(self):
        r = galerkin_convergence(nonlinear_cfg(), [16, 16])
        assert np.all(r.column("e") == 0.0)

    def test_non_nested(self):
        with pytest.raises(ValueError):
            galerkin_convergence(nonlinear_cfg(), [32, 16])

    def test_outside_regime(self):
        r = galerkin_convergence(nonlinear_cfg(params=OperatorParams(0.4, 1.0)), [8, 16])
        assert r.verdicts["e_strictly_decreasing"] is None and not r.in_regime


class TestUniqueness:
    def test_replay(self):
        r = pathwise_uniqueness_probe(nonlinear_cfg(), 0.0)
        assert np.all(r.column("d") == 0.0)
        assert r.verdicts == {"identical_trajectories": True}

    def test_linear_decay(self):
        r = pathwise_uniqueness_probe(linear_cfg(noise=ERG), 1e-3)
        np.testing.assert_allclose(r.column("d"), 1e-3 * np.exp(-r.column("t")), rtol=1e-10)

    def test_nonlinear_stability(self):
        r = pathwise_uniqueness_probe(nonlinear_cfg(), 1e-6)
        assert r.constants["sup_d"] < 1e-2 and math.isfinite(r.constants["C_estimate"])
        assert r.passed


class TestLpMonitor:
    def test_zero_noise_sup_at_start(self):
        r = lp_supremum_monitor(nonlinear_cfg(noise=None), 4.0, 1.0)
        assert r.constants["t_sup"] == 0.0
        assert r.verdicts["non_blow_up"]

    def test_regime_label(self):
        r = lp_supremum_monitor(nonlinear_cfg(), 8.0, 0.5)
        assert r.regime["uniqueness_regime"]
        r = lp_supremum_monitor(nonlinear_cfg(params=OperatorParams(0.6, 1.0)), 4.0, 0.5)
        assert not r.regime["uniqueness_regime"]

    def test_blow_up_recorded(self):
        r = lp_supremum_monitor(nonlinear_cfg(noise=None), 4.0, 1.0, ceiling=1e-3)
        assert r.constants["event"] == "ceiling_exceeded" and r.constants["event_time"] > 0
        assert r.verdicts["non_blow_up"] is False

    def test_cfl_event_not_raised(self):
        cfg = nonlinear_cfg(N=32, dt=0.1, initial="analytic:taylor_green", noise=None)
        r = lp_supremum_monitor(cfg.with_(initial=cfg.initial_state() * 50.0), 4.0, 1.0)
        assert r.constants["event"] == "CFLViolation"

    def test_multiplicative_infinite_p_ungated(self):
        r = lp_supremum_monitor(nonlinear_cfg(noise=LinearMultiplicative(0.3)), math.inf, 0.2)
        assert r.verdicts["non_blow_up"] is None


class TestMarkov:
    def test_t_zero_identical(self):
        r = markov_property_test(linear_cfg(), 0.3, 0.0, m=200)
        assert np.all(r.column("z") == 0.0)

    def test_ou_mean(self):
        cfg = linear_cfg()
        r = markov_property_test(cfg, 0.5, 0.5, {"e": mode_energy(1, 0)}, m=4000)
        expected = cfg.dt * sum(math.exp(-2 * cfg.dt * i) for i in range(1, 101))
        row = r.rows[0]
        assert abs(row["mean_direct"] - expected) < 3 * row["se_direct"]
        assert abs(row["mean_restart"] - expected) < 3 * row["se_restart"]
        assert r.verdicts["abs_z_le_3"]

    def test_refuses_multiplicative(self):
        with pytest.raises(NotApplicableError):
            markov_property_test(nonlinear_cfg(noise=LinearMultiplicative(0.5)), 0.5, 0.5, m=100)

    def test_small_ensemble_no_verdict(self):
        r = markov_property_test(linear_cfg(), 0.2, 0.2, m=50)
        assert r.verdicts["abs_z_le_3"] is None


class TestErgodic:
    def test_zero_noise_decays(self):
        r = ergodic_average(nonlinear_cfg(noise=None, N=8), T_long=50.0)
        assert r.rows[0]["mean_start1"] < 1e-6 and r.rows[0]["mean_start0"] == 0.0

    def test_ou_average(self):
        r = ergodic_average(linear_cfg(), {"e": mode_energy(1, 0)}, T_long=400.0)
        for key in ("mean_start0", "mean_start1"):
            assert r.rows[0][key] == pytest.approx(0.5, rel=0.1)
        # additive diagonal noise is outside the ergodic hypotheses
        assert r.verdicts["averages_agree"] is None

    def test_outside_regime_label(self):
        cfg = nonlinear_cfg(params=OperatorParams(0.6, 1.0), noise=make_ergodic_covariance(0.6, 1.0), N=8)
        r = ergodic_average(cfg, T_long=5.0)
        assert not r.in_regime and r.verdicts["averages_agree"] is None


class TestMixing:
    GRID = np.arange(0, 3.01, 0.25)

    def test_ou_rate_coupled(self):
        obs = {"proj": mode_projection(cos_x1(8))}
        r = exponential_mixing_fit(linear_cfg(), obs, self.GRID, m=200, starts=("analytic:cos_x1", "zero"))
        assert r.constants["a_hat"] == pytest.approx(1.0, rel=1e-10)

    def test_identical_starts_already_mixed(self):
        r = exponential_mixing_fit(nonlinear_cfg(N=8), None, self.GRID, m=100, starts=("zero", "zero"))
        assert r.constants["status"] == "already mixed" and "a_hat" not in r.constants

    def test_needs_grid(self):
        with pytest.raises(ValueError):
            exponential_mixing_fit(linear_cfg(), None, [0.0, 1.0], m=100)


class TestReports:
    def test_shared_path_determinism(self):
        a = pathwise_uniqueness_probe(nonlinear_cfg(), 1e-4)
        b = pathwise_uniqueness_probe(nonlinear_cfg(), 1e-4)
        assert a.rows == b.rows and a.digest == b.digest and a.constants == b.constants

    def test_write(self, tmp_path):
        r = galerkin_convergence(nonlinear_cfg(N=8), [8, 16])
        r.write(tmp_path)
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[0].startswith(f"# config_digest={r.digest} version=")
        assert csv_lines[1] == "N,e,e_rel"
        txt = (tmp_path / "report.txt").read_text()
        assert txt.splitlines()[0] == csv_lines[0]
        assert "verdict e_strictly_decreasing: PASS" in txt

    def test_passed_ignores_ungated(self):
        r = ExperimentReport("x", "d", verdicts={"a": True, "b": None})
        assert r.passed
        r.verdicts["c"] = False
        assert not r.passed
