import math

import numpy as np
import pytest

from chargeplan.predictor import evaluate_rmse, joint_loss, loss_domain, loss_ranking, loss_regression
from chargeplan.predictor.losses import grad_domain, grad_ranking, grad_regression


def test_regression_examples():
    assert loss_regression([0.2, 0.4], [0.2, 0.4]) == 0.0
    assert loss_regression([1.0], [0.0]) == 1.0
    assert loss_regression([0.5, 0.5], [0.0, 1.0]) == pytest.approx(0.25)


def test_ranking_examples():
    assert loss_ranking([0.3, 0.3], [0.1, 0.9]) == pytest.approx(math.log(2) / 2, abs=1e-12)
    assert loss_ranking([0.1, 0.5, 0.2], [0.4, 0.4, 0.4]) == 0.0


def test_ranking_minimum_is_target_entropy():
    y = np.array([0.1, 0.5, 0.2, 0.9])
    n = len(y)
    ent = 0.0
    for i in range(n):
        for j in range(n):
            if y[i] > y[j]:
                p = 1 / (1 + math.exp(-(y[i] - y[j])))
                ent += -p * math.log(p) - (1 - p) * math.log(1 - p)
    ent /= n * (n - 1)
    assert loss_ranking(y + 3.0, y) == pytest.approx(ent, abs=1e-12)
    assert loss_ranking(y[::-1], y) > ent


def test_domain_examples():
    assert loss_domain([1.0], [1]) <= 1e-6
    assert loss_domain([0.0, 1.0], [0, 1]) <= 1e-6
    assert loss_domain([0.5], [1]) == pytest.approx(math.log(2), abs=1e-12)
    assert loss_domain([0.5, 0.5], [0, 1]) == pytest.approx(math.log(2), abs=1e-12)


def test_joint_loss_signs():
    assert joint_loss(2.0, 4.0, 1.0, 0.25, 0.1) == pytest.approx(0.75 * 2 + 0.25 * 4 - 0.1)


def test_loss_gradients_by_central_differences():
    rng = np.random.default_rng(0)
    p, y = rng.random(6), rng.random(6)
    d = rng.integers(0, 2, 6)
    q = rng.uniform(0.1, 0.9, 6)
    eps = 1e-6
    for f, g, x, t in ((loss_regression, grad_regression, p, y), (loss_ranking, grad_ranking, p, y),
                       (loss_domain, grad_domain, q, d)):
        num = np.array([(f(x + eps * e, t) - f(x - eps * e, t)) / (2 * eps) for e in np.eye(len(x))])
        assert np.allclose(g(x, t), num, atol=1e-8)


def test_rmse_examples():
    assert evaluate_rmse(np.array([0.3, 0.4]), targets=np.array([0.3, 0.4])) == 0.0
    assert evaluate_rmse(np.array([1.0, 0.0]), targets=np.array([0.0, 0.0])) == pytest.approx(math.sqrt(0.5))
    y = np.random.default_rng(1).random(50)
    assert evaluate_rmse(np.full(50, y.mean()), targets=y) == pytest.approx(y.std(ddof=0))
    with pytest.raises(ValueError):
        evaluate_rmse(np.zeros(0), targets=np.zeros(0))
