import numpy as np
import pytest

from burncf.oracles import (finite_diff_grad, relative_error,
                            reverse_posterior_oracle, spectral_decay_check)
from burncf.rng import stream


class TestReversePosterior:
    def test_point_mass_when_nothing_decayed(self):
        table = reverse_posterior_oracle(4, 4, 0.8, 0.5)
        assert table.support.tolist() == [4]
        assert table.enumerated[0] == pytest.approx(1.0, abs=1e-15)

    def test_worked_example(self):
        # p_prev=0.6, p_now=0.36 -> one-step survival 0.6, r = 0.24/0.64
        table = reverse_posterior_oracle(2, 0, 0.6, 0.36)
        r = (0.6 - 0.36) / (1 - 0.36)
        assert r == pytest.approx(0.375)
        expected = [(1 - r) ** 2, 2 * r * (1 - r), r**2]
        assert table.enumerated == pytest.approx(expected, abs=1e-12)
        assert table.max_abs_diff() <= 1e-12

    def test_exhaustive_sweep(self):
        worst = 0.0
        for n in range(7):
            for k in range(n + 1):
                for p_prev in np.linspace(0.1, 0.9, 5):
                    for frac in np.linspace(0.2, 1.0, 5):
                        table = reverse_posterior_oracle(n, k, p_prev, p_prev * frac)
                        worst = max(worst, table.max_abs_diff())
                        assert table.enumerated.sum() == pytest.approx(1.0, abs=1e-12)
        assert worst <= 1e-12

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            reverse_posterior_oracle(2, 3, 0.6, 0.3)
        with pytest.raises(ValueError):
            reverse_posterior_oracle(2, 1, 0.3, 0.6)


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda x: float(np.sum(x**2)),
                                np.array([3.0]), h=1e-5)
        assert grad[0] == pytest.approx(6.0, abs=1e-8)

    def test_multivariate(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = finite_diff_grad(lambda v: float(v[0] * v[1] + np.sin(v[2])), x)
        assert grad == pytest.approx([-2.0, 1.0, np.cos(0.5)], abs=1e-8)

    def test_relative_error_floor(self):
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


class TestSpectralDecay:
    def _random_instance(self, seed, n_users=8, n_items=10):
        g = stream(seed, "spectral")
        dense = (g.random((n_users, n_items)) < 0.4).astype(float)
        dense[0, :3] = 1.0
        du = dense.sum(axis=1, keepdims=True)
        di = dense.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            adj = np.where((du > 0) & (di > 0), dense / np.sqrt(du * di), 0.0)
        return adj, dense[0]

    def test_gamma_zero_uniform_rate(self):
        adj, r = self._random_instance(0)
        report = spectral_decay_check(adj, r, gamma=0.0, t=4.0)
        # no pair differs, so no orderings to violate
        assert report.item_pairs == 0 or report.item_violations == 0
        assert report.spectral_violations == 0

    def test_two_item_toy(self):
        # c = (1, 0) built directly: adjacency whose Gram-filtered history is (1, 0)
        adj = np.array([[1.0, 0.0]])
        r = np.array([1.0, 0.0])
        report = spectral_decay_check(adj, r, gamma=1.0, t=4.0)
        assert report.clean
        assert report.item_pairs > 0

    def test_random_sweep_zero_violations(self):
        for seed in range(20):
            adj, r = self._random_instance(seed)
            report = spectral_decay_check(adj, r, gamma=1.0, t=4.0)
            assert report.clean, f"violations at seed {seed}: {report}"

    def test_caps_item_count(self):
        with pytest.raises(ValueError):
            spectral_decay_check(np.ones((2, 51)), np.ones(51), 1.0, 4.0)
