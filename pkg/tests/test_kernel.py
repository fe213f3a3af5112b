import math

import numpy as np
import pytest

from burncf.kernel import (DecaySchemeConfig, DiffusionSchedule, bridge_ratio,
                           bridge_sample, decay_variant_prob, forward_pmf,
                           forward_sample, poisson_step, stage_init,
                           survival_prob, variant_sample)
from burncf.rng import stream

from conftest import chi_square_ok

N_SAMPLES = 100_000


class TestSchedule:
    def test_dt(self):
        s = DiffusionSchedule(horizon=4.0, n_steps=100)
        assert s.dt == pytest.approx(0.04)
        assert s.time_of(100) == pytest.approx(4.0)
        assert s.n_reverse_steps == 100

    def test_reverse_horizon(self):
        s = DiffusionSchedule(horizon=4.0, n_steps=100, reverse_horizon=2.0)
        assert s.n_reverse_steps == 50

    def test_invariants(self):
        with pytest.raises(ValueError):
            DiffusionSchedule(horizon=0.0)
        with pytest.raises(ValueError):
            DiffusionSchedule(n_steps=0)
        with pytest.raises(ValueError):
            DiffusionSchedule(reverse_horizon=5.0)
        with pytest.raises(ValueError):
            DiffusionSchedule(mode="gibbs")


class TestStageInit:
    def test_basic(self):
        assert stage_init(np.array([1, 0, 1]), 3).tolist() == [3, 0, 3]

    def test_zero(self):
        assert np.all(stage_init(np.zeros(4), 7) == 0)

    def test_upper_search_bound(self):
        assert stage_init(np.array([1]), 400).tolist() == [400]

    def test_requires_positive(self):
        with pytest.raises(ValueError):
            stage_init(np.array([1]), 0)


class TestSurvival:
    def test_time_zero(self):
        assert survival_prob(0.0, 0.0) == 1.0

    def test_plain_blackout(self):
        assert survival_prob(0.0, 4.0) == pytest.approx(0.01831563888873418, rel=1e-12)

    def test_slowdown(self):
        assert survival_prob(1.0, 4.0) == pytest.approx(0.1353352832366127, rel=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            survival_prob(0.0, -1.0)


class TestForwardSample:
    def test_t_zero_identity(self):
        x0 = np.array([5, 0, 3])
        out = forward_sample(x0, 0.0, 0.0, stream(0, "t"))
        assert np.array_equal(out, x0)

    def test_never_exceeds_input(self):
        g = stream(1, "mono")
        for _ in range(200):
            x0 = g.integers(0, 10, size=6)
            out = forward_sample(x0, g.uniform(0, 3, 6), g.uniform(0, 5), g)
            assert np.all(out <= x0) and np.all(out >= 0)

    def test_pmf_chi_square(self):
        # X0=2, p=0.5 at t=ln2: pmf (0.25, 0.5, 0.25)
        t = math.log(2.0)
        draws = forward_sample(np.full(N_SAMPLES, 2), 0.0, t, stream(2, "pmf"))
        observed = np.bincount(draws, minlength=3)
        probs = [forward_pmf(2, 0.5, k) for k in range(3)]
        assert probs == pytest.approx([0.25, 0.5, 0.25], abs=1e-12)
        assert chi_square_ok(observed, probs, N_SAMPLES)

    def test_large_time_all_zero(self):
        draws = forward_sample(np.full(1000, 10), 0.0, 200.0, stream(3, "big"))
        assert np.all(draws == 0)  # failure chance < 1000*10*e^-200


class TestForwardPmf:
    def test_hand_enumeration(self):
        assert [forward_pmf(2, 0.5, k) for k in range(3)] == pytest.approx(
            [0.25, 0.5, 0.25], abs=1e-15)

    def test_point_mass_p1(self):
        assert forward_pmf(5, 1.0, 5) == 1.0
        assert forward_pmf(5, 1.0, 3) == 0.0

    def test_normalization_random(self):
        g = stream(4, "pmfnorm")
        for _ in range(20):
            n = int(g.integers(1, 401))
            p = float(g.uniform(0.01, 0.99))
            total = math.fsum(forward_pmf(n, p, k) for k in range(n + 1))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            forward_pmf(3, 0.5, 4)

    def test_large_n_no_overflow(self):
        assert np.isfinite(forward_pmf(400, 0.5, 200))


class TestBridgeRatio:
    def test_last_step_is_one(self):
        assert bridge_ratio(0.0, 0.04, 0.04, "global") == 1.0
        assert np.all(bridge_ratio(np.array([0.0, 2.5]), 0.1, 0.1) == 1.0)

    def test_global_value(self):
        assert bridge_ratio(0.0, 4.0, 0.04, "global") == pytest.approx(
            7.614213208319999e-4, rel=1e-9)

    def test_personalized_value(self):
        assert bridge_ratio(1.0, 4.0, 0.04, "personalized") == pytest.approx(
            3.161866121372289e-3, rel=1e-9)

    def test_domain_error_at_zero(self):
        with pytest.raises(ValueError):
            bridge_ratio(0.0, 0.0, 0.04)

    def test_in_unit_interval(self):
        g = stream(5, "ratio")
        for _ in range(100):
            dt = float(g.uniform(0.001, 1.0))
            t = dt + float(g.uniform(0.0, 5.0))
            c = float(g.uniform(0.0, 4.0))
            r = bridge_ratio(c, t, dt, "personalized")
            assert 0.0 < r <= 1.0


class TestBridgeSample:
    def test_ratio_one_restores_all(self):
        deficit = np.array([4, 0, 9])
        out = bridge_sample(deficit, 1.0, stream(6, "b"))
        assert np.array_equal(out, deficit)

    def test_zero_deficit(self):
        assert np.all(bridge_sample(np.zeros(5, dtype=int), 0.7, stream(7, "b")) == 0)

    def test_mean(self):
        draws = bridge_sample(np.full(N_SAMPLES, 5), 0.3, stream(8, "b"))
        assert draws.mean() == pytest.approx(1.5, abs=0.02)

    def test_negative_deficit_rejected(self):
        with pytest.raises(ValueError):
            bridge_sample(np.array([-1]), 0.5, stream(9, "b"))


class TestPoissonStep:
    def test_zero_rate(self):
        assert np.all(poisson_step(np.zeros(4), 1.0, 0.1, stream(10, "p")) == 0)

    def test_mean(self):
        # pick q so the step rate r_t * q equals 2
        t, dt = 1.0, 0.5
        r = bridge_ratio(0.0, t, dt, "global")
        q = np.full(N_SAMPLES, 2.0 / r)
        draws = poisson_step(q, t, dt, stream(11, "p"))
        assert draws.mean() == pytest.approx(2.0, abs=0.03)

    def test_cap_clips(self):
        t, dt = 1.0, 0.5
        r = bridge_ratio(0.0, t, dt, "global")
        q = np.full(1000, 50.0 / r)
        cap = np.full(1000, 3)
        draws = poisson_step(q, t, dt, stream(12, "p"), cap=cap)
        assert np.all(draws <= 3)


class TestDecayVariants:
    def test_power_at_zero(self):
        assert decay_variant_prob(DecaySchemeConfig("power", alpha=1.0), 0.0) == 1.0

    def test_linear_hits_zero(self):
        assert decay_variant_prob(DecaySchemeConfig("linear", beta=0.25), 4.0) == 0.0

    def test_power_quarter(self):
        assert decay_variant_prob(DecaySchemeConfig("power", alpha=2.0), 1.0) == 0.25

    def test_burndown_is_contract_error(self):
        with pytest.raises(ValueError):
            decay_variant_prob(DecaySchemeConfig("burndown"), 1.0)

    def test_exponential_deterministic_rounds(self):
        cfg = DecaySchemeConfig("exponential_deterministic", lam=1.0)
        out = variant_sample(np.array([10, 4]), cfg, 1.0, stream(13, "v"))
        assert out.tolist() == [round(10 * math.exp(-1)), round(4 * math.exp(-1))]


class TestThinningComposition:
    @pytest.mark.parametrize("c,t1,t2", [(0.0, 0.5, 0.5), (1.0, 1.0, 1.0),
                                         (3.0, 0.3, 0.7)])
    def test_two_stage_matches_single(self, c, t1, t2):
        stages = 10
        g = stream(14, "thin", int(c * 10))
        x1 = forward_sample(np.full(N_SAMPLES, stages), c, t1, g)
        x2 = forward_sample(x1, c, t2, g)
        p = float(np.exp(-(t1 + t2) / (1.0 + c)))
        probs = [forward_pmf(stages, p, k) for k in range(stages + 1)]
        observed = np.bincount(x2, minlength=stages + 1)
        assert chi_square_ok(observed, probs, N_SAMPLES)


class TestReversePosteriorSampling:
    def test_bridge_matches_enumeration(self):
        # n=6, k=2: sampled m = k + Binomial(n-k, r) against the exact table
        from burncf.oracles import reverse_posterior_oracle
        n, k = 6, 2
        p_prev, p_now = 0.6, 0.36
        table = reverse_posterior_oracle(n, k, p_prev, p_now)
        r = (p_prev - p_now) / (1.0 - p_now)
        draws = k + bridge_sample(np.full(N_SAMPLES, n - k), r, stream(15, "post"))
        observed = np.bincount(draws - k, minlength=n - k + 1)
        assert chi_square_ok(observed, table.enumerated, N_SAMPLES)


class TestItemLevelOrdering:
    def test_sampled_means_ordered(self):
        # c=(1,0): means K e^{-t/2} vs K e^{-t}; gap far above noise at 1e5
        stages = 10
        coeffs = np.array([1.0, 0.0])
        for t in (1.0, 2.0, 3.0, 4.0):
            g = stream(16, "order", int(t))
            draws = forward_sample(np.full((N_SAMPLES, 2), stages), coeffs, t, g)
            means = draws.mean(axis=0)
            assert means[0] > means[1]
            assert means[0] == pytest.approx(stages * np.exp(-t / 2), rel=0.02)
            assert means[1] == pytest.approx(stages * np.exp(-t), rel=0.05, abs=0.01)


class TestStationarity:
    def test_survival_probability_bound(self):
        stages = 5
        coeffs = np.array([0.0, 1.0, 3.0])
        t = 10.0 * (1.0 + coeffs.max())
        draws = forward_sample(np.full((N_SAMPLES, 3), stages), coeffs, t,
                               stream(17, "stat"))
        p_hat = (draws > 0).mean(axis=0)
        bound = stages * np.exp(-t / (1.0 + coeffs))
        sigma = np.sqrt(bound * (1 - bound) / N_SAMPLES)
        assert np.all(p_hat <= bound + 3 * sigma)
