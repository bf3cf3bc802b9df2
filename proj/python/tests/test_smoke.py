import math

import numpy as np
import pytest

import fairdice


def test_divergence_and_weights():
    assert fairdice.soft_chi2_f(1.0) == 0.0
    assert fairdice.w_star(0.0, 1.0) == pytest.approx(1.0)
    assert fairdice.w_star(-100.0, 1.0) == pytest.approx(math.exp(-100.0))
    y = 0.37
    assert fairdice.f_prime_inverse(y) == pytest.approx(1.37)


def test_metrics():
    assert fairdice.nsw([math.e, math.e]) == pytest.approx(2.0)
    assert fairdice.nsw([1.0, 0.0]) == -math.inf
    assert fairdice.jain_index([0.0, 1.0, 0.0]) == pytest.approx(1 / 3)
    h, p = fairdice.kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert h == pytest.approx(7.2)
    assert p == pytest.approx(math.exp(-3.6))


def test_hyperparameters_are_validated():
    with pytest.raises(ValueError):
        fairdice.HyperParams(beta=-1.0)


def test_tabular_pipeline(tmp_path):
    data = fairdice.generate_dataset("four-rooms", trajectories=200, seed=3)
    assert len(data) > 0
    assert data.rewards.shape == (len(data), data.n_objectives)
    result = fairdice.solve_tabular(data, fairdice.HyperParams(beta=0.1))
    assert result.converged
    assert np.allclose(result.policy.sum(axis=1), 1.0)
    assert all(m > 0 for m in result.mu)
    returns = fairdice.evaluate_tabular(data, result.policy)
    assert len(returns) == data.n_objectives
    result.save(tmp_path / "artifact.json")
    data.save(tmp_path / "data.jsonl")
    again = fairdice.load_dataset(tmp_path / "data.jsonl")
    assert np.array_equal(again.rewards, data.rewards)


def test_neural_training_is_reproducible():
    data = fairdice.generate_dataset("group-fair", "random", trajectories=1, horizon=100, seed=1)
    a = fairdice.train(data, iterations=5, batch_size=16, hidden=[8], seed=2)
    b = fairdice.train(data, iterations=5, batch_size=16, hidden=[8], seed=2)
    assert a.critic_loss == b.critic_loss
    probs = a.action_probabilities(data.obs[:4])
    assert probs.shape[0] == 4
    assert np.allclose(probs.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        a.action_probabilities(np.zeros((2, data.obs_dim + 1)))
