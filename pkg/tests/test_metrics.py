"""Test di GOSPA, RMSE e assegnazione ottima."""

import itertools
from functools import lru_cache

import numpy as np
import pandas as pd
import pytest

from metrics import GospaBreakdown, MetricConfig, assign, average_metrics, gospa, rmse

CFG = MetricConfig(c=10.0, c_prime=10.0)


def _brute_gospa(truth, est, c=10.0):
    """Minimo esaustivo su tutti gli insiemi di associazioni parziali."""
    n, m = len(truth), len(est)

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == n:
            return c / 2 * (m - bin(used).count('1'))
        out = c / 2 + best(i + 1, used)
        for j in range(m):
            if not used & (1 << j):
                out = min(out, abs(truth[i] - est[j]) + best(i + 1, used | (1 << j)))
        return out

    return best(0, 0)


def test_assign_small_cases():
    assert assign([[5.0, 1.0], [1.0, 5.0]]) == [(0, 1), (1, 0)]
    assert assign([[3.0]]) == [(0, 0)]
    assert assign(np.zeros((0, 3))) == []
    with pytest.raises(ValueError):
        assign([[np.inf]])


def test_assign_matches_permutations():
    rng = np.random.default_rng(0)
    cost = rng.uniform(0, 10, (6, 6))
    pairs = assign(cost)
    best = min(sum(cost[i, p[i]] for i in range(6)) for p in itertools.permutations(range(6)))
    assert sum(cost[i, j] for i, j in pairs) == pytest.approx(best)


def test_assign_partial_with_costs():
    # Associare costa 9 contro 2 + 2 di non associazione
    assert assign([[9.0]], miss_cost=2.0, false_cost=2.0) == []
    assert assign([[3.0]], miss_cost=2.0, false_cost=2.0) == [(0, 0)]


def test_gospa_examples():
    assert gospa([10.0, 20.0], [10.0, 20.0], CFG) == GospaBreakdown(0.0, 0.0, 0.0, 0.0)
    assert gospa([0.0], [], CFG) == GospaBreakdown(5.0, 0.0, 5.0, 0.0)
    g = gospa([0.0, 30.0], [1.0, 80.0], CFG)
    assert (g.total, g.dist, g.miss, g.false_) == pytest.approx((11.0, 1.0, 5.0, 5.0))
    assert gospa([], [], CFG).total == 0.0


def test_gospa_cutoff_is_c():
    assert gospa([0.0], [9.5], CFG).dist == pytest.approx(9.5)
    g = gospa([0.0], [10.5], CFG)
    assert (g.dist, g.miss, g.false_) == (0.0, 5.0, 5.0)


def test_gospa_swap_symmetry():
    rng = np.random.default_rng(4)
    truth, est = rng.uniform(-90, 90, 4), rng.uniform(-90, 90, 2)
    a, b = gospa(truth, est, CFG), gospa(est, truth, CFG)
    assert a.total == pytest.approx(b.total)
    assert (a.miss, a.false_) == (b.false_, b.miss)


def test_gospa_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(40):
        n, m = rng.integers(0, 7, size=2)
        truth = tuple(rng.uniform(-30, 30, n))
        est = tuple(rng.uniform(-30, 30, m))
        g = gospa(truth, est, CFG)
        assert g.total == pytest.approx(_brute_gospa(truth, est))
        assert g.total == pytest.approx(g.dist + g.miss + g.false_)


def test_rmse_examples():
    assert rmse([-3.0, 2.0, 60.0], [60.0, -3.0, 2.0], CFG) == 0.0
    assert rmse([0.0], [], CFG) == pytest.approx(10.0)
    assert rmse([0.0, 20.0], [1.0], CFG) == pytest.approx(np.sqrt(101.0 / 2.0))
    with pytest.raises(ValueError):
        rmse([], [1.0], CFG)


def test_rmse_monotone_in_distance():
    rng = np.random.default_rng(6)
    for _ in range(20):
        truth = rng.uniform(-60, 60, 3)
        est = truth + rng.uniform(-2, 2, 3)
        base = rmse(truth, est, CFG)
        moved = est.copy()
        moved[0] += np.sign(moved[0] - truth[0]) * 1.0
        assert rmse(truth, moved, CFG) >= base - 1e-12


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(c=0.0)


def test_average_metrics():
    rows = [GospaBreakdown(2.0, 1.0, 0.5, 0.5)] * 3
    means = average_metrics(rows)
    assert means['total'] == pytest.approx(2.0)
    single = average_metrics([{'gospa_total': 4.0, 'rmse': 1.0}])
    assert single['rmse'] == 1.0
    frame = pd.DataFrame({'gospa_total': [1.0, 2.0, 3.0, 4.0, 10.0], 'rmse': [1.0, np.nan, 3.0, 2.0, 4.0]})
    means = average_metrics(frame)
    assert means['gospa_total'] == pytest.approx(4.0)
    assert means['rmse'] == pytest.approx(2.5)
    with pytest.raises(ValueError):
        average_metrics([])
