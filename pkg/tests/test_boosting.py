import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpboost.boosting import (
    PrivacyConfig,
    gain_sensitivity,
    gdf_filter,
    glc_bound,
    leaf_sensitivity,
    subset_schedule,
    train,
    train_dpboost,
    train_np,
    train_para,
    train_seq,
)
from dpboost.mechanisms import PARALLEL, SEQUENTIAL


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1000, 4))
    y = np.tanh(X[:, 0] - X[:, 1])
    return X, y


class TestGdf:
    def test_example(self):
        kept, rep = gdf_filter(np.arange(3), np.array([0.5, -0.3, 1.2]), 1.0)
        assert kept.tolist() == [0, 1]
        assert rep.p == pytest.approx(1 / 3)
        assert rep.mean_filtered_gradient == pytest.approx(1.2)
        assert rep.error_bound == pytest.approx(2.2 / 3)

    def test_nothing_filtered(self):
        kept, rep = gdf_filter([4, 7], np.linspace(-1, 1, 10), 1.0)
        assert kept.tolist() == [4, 7]
        assert rep.p == 0 and rep.error_bound == 0

    def test_empty(self):
        kept, rep = gdf_filter([], np.zeros(3), 1.0)
        assert kept.size == 0 and rep.p == 0

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=50), st.sampled_from([0.0, 0.1, 1.0]))
    def test_report_invariants(self, g, lam):
        from dpboost.tree import leaf_value

        g = np.asarray(g)
        kept, rep = gdf_filter(np.arange(g.size), g, 1.0)
        assert 0 <= rep.p <= 1 and rep.error_bound >= 0
        err = abs(leaf_value(g.sum(), g.size, lam) - leaf_value(g[kept].sum(), kept.size, lam))
        assert err <= rep.error_bound + 1e-12

    def test_first_iteration_filters_nothing(self, toy):
        X, y = toy
        _, logs = train_dpboost(X, y, PrivacyConfig(1.0, 3, 3), max_depth=2)
        assert logs[0].filter.p == 0.0


class TestBounds:
    def test_glc_bound(self):
        assert glc_bound(1, 0.1) == 1.0
        assert glc_bound(3, 0.1) == pytest.approx(0.81)
        assert glc_bound(20, 0.1) == pytest.approx(0.9**19)
        assert glc_bound(20, 0.1) == pytest.approx(0.135085172)
        with pytest.raises(ValueError):
            glc_bound(0, 0.1)

    def test_leaf_sensitivity(self):
        assert leaf_sensitivity(1, 0.1, 1.0, 0.1) == pytest.approx(1 / 1.1)
        assert leaf_sensitivity(20, 0.1, 1.0, 0.1) == pytest.approx(2 * 0.9**19)
        assert leaf_sensitivity(20, 0.1, 1.0, 0.1) == pytest.approx(0.270170344)

    def test_gain_sensitivity(self):
        assert gain_sensitivity(1.0) == 3.0
        assert gain_sensitivity(2.0) == 12.0


class TestSchedule:
    def test_two_trees(self):
        assert subset_schedule(1000, 0.1, 2) == [526, 474]

    def test_one_tree(self):
        assert subset_schedule(1000, 0.1, 1) == [1000]

    def test_decreasing(self):
        s = subset_schedule(8000, 0.1, 50)
        assert all(a >= b for a, b in zip(s[:-2], s[1:-1]))
        assert s[0] == math.floor(8000 * 0.1 / (1 - 0.9**50))

    @given(st.integers(0, 10**6), st.floats(0.01, 0.99), st.integers(1, 200))
    def test_sums_to_n(self, n, eta, te):
        s = subset_schedule(n, eta, te)
        assert len(s) == te and sum(s) == n and min(s) >= 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            subset_schedule(10, 1.0, 3)
        with pytest.raises(ValueError):
            subset_schedule(10, 0.1, 0)


class TestPrivacyConfig:
    def test_thousand_trees_in_twenty_ensembles(self):
        c = PrivacyConfig(100.0, 1000, 50)
        assert c.n_ensembles == 20 and c.eps_per_tree == 5.0

    def test_single_ensemble(self):
        c = PrivacyConfig(1.0, 50, 50)
        assert c.n_ensembles == 1 and c.eps_per_tree == 1.0

    def test_ragged_last_ensemble(self):
        c = PrivacyConfig(3.0, 10, 4)
        assert c.n_ensembles == 3
        assert c.n_ensembles * c.eps_per_tree == pytest.approx(3.0)

    def test_glc_index(self):
        c = PrivacyConfig(1.0, 100, 50)
        assert [c.glc_index(t) for t in (0, 49, 50, 99)] == [1, 50, 1, 50]
        g = PrivacyConfig(1.0, 100, 50, glc_index_mode="global")
        assert [g.glc_index(t) for t in (0, 49, 50, 99)] == [1, 50, 51, 100]

    @pytest.mark.parametrize("kw", [
        dict(total_eps=0.0), dict(total_eps=math.inf), dict(n_trees=0), dict(trees_per_ensemble=0),
        dict(trees_per_ensemble=11), dict(glc_index_mode="local"), dict(mode="fast"),
    ])
    def test_invalid(self, kw):
        args = dict(total_eps=1.0, n_trees=10, trees_per_ensemble=5) | kw
        with pytest.raises(ValueError):
            PrivacyConfig(**args)

    def test_np_ignores_eps(self):
        PrivacyConfig(0.0, 10, 10, mode="np")


class TestDpboost:
    def test_disjoint_draws_follow_schedule(self, toy):
        X, y = toy
        config = PrivacyConfig(2.0, 100, 50)
        model, logs = train_dpboost(X, y, config, max_depth=2, keep_drawn=True)
        schedule = subset_schedule(1000, 0.1, 50)
        for e in range(2):
            drawn = [logs[t].drawn for t in range(50 * e, 50 * e + 50)]
            assert [d.size for d in drawn] == schedule
            allr = np.concatenate(drawn)
            assert np.unique(allr).size == allr.size == 1000
        assert model.ledger.total() == pytest.approx(2.0, abs=1e-9)

    def test_filtered_rows_are_consumed(self, toy):
        X, _ = toy
        y = np.full(1000, 1.0)
        _, logs = train_dpboost(X, y, PrivacyConfig(1.0, 10, 10), max_depth=1, keep_drawn=True)
        drawn = np.concatenate([l.drawn for l in logs])
        assert np.unique(drawn).size == drawn.size
        for l in logs:
            assert l.n_drawn == l.drawn.size >= l.filter.n_total - l.filter.n_filtered

    def test_glc_applied(self, toy):
        X, y = toy
        config = PrivacyConfig(1.0, 60, 30)
        _, logs = train_dpboost(X, y, config, max_depth=3)
        for l in logs:
            bound = glc_bound(l.glc_index, 0.1)
            assert l.trace.clip_bound == bound
            assert all(abs(v) <= bound for v in l.trace.clipped_leaves)
            assert l.delta_v == pytest.approx(leaf_sensitivity(l.glc_index, 0.1))

    def test_without_glc(self, toy):
        X, y = toy
        _, logs = train_dpboost(X, y, PrivacyConfig(1.0, 5, 5, glc=False), max_depth=2)
        assert all(l.trace.clip_bound is None and l.delta_v == pytest.approx(1 / 1.1) for l in logs)

    def test_ledger_groups(self, toy):
        X, y = toy
        model, _ = train_dpboost(X, y, PrivacyConfig(3.0, 12, 5), max_depth=2)
        assert {e.scope for e in model.ledger.entries} == {"ensemble 1", "ensemble 2", "ensemble 3"}
        assert all(e.kind == PARALLEL for e in model.ledger.entries)
        assert model.ledger.total() == pytest.approx(3.0, abs=1e-9)
        for tree in model.trees:
            assert tree.ledger.total() == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self, toy):
        X, y = toy
        a, _ = train_dpboost(X, y, PrivacyConfig(1.0, 10, 5), max_depth=3, seed=4)
        b, _ = train_dpboost(X, y, PrivacyConfig(1.0, 10, 5), max_depth=3, seed=4)
        assert a.to_json() == b.to_json()

    @given(st.floats(0.01, 100), st.integers(1, 12), st.data())
    @settings(max_examples=25, deadline=None)
    def test_budget_exactness(self, eps, T, data):
        te = data.draw(st.integers(1, T))
        rng = np.random.default_rng(T)
        X = rng.normal(size=(40, 2))
        y = rng.uniform(-1, 1, 40)
        for mode in ("dpboost", "seq", "para"):
            model, _ = train(X, y, PrivacyConfig(eps, T, te, mode=mode), max_depth=2)
            assert model.ledger.total() == pytest.approx(eps, rel=1e-9, abs=1e-9)


class TestBaselines:
    def test_seq_budget_and_noise_scale(self, toy):
        X, y = toy
        model, logs = train_seq(X, y, 1.0, 50, max_depth=2)
        assert all(l.eps_t == pytest.approx(0.02) for l in logs)
        assert all(e.kind == SEQUENTIAL for e in model.ledger.entries)
        assert model.ledger.total() == pytest.approx(1.0, abs=1e-9)
        scale = logs[0].delta_v / (logs[0].eps_t / 2)
        assert scale == pytest.approx(2 * 1.0 * 50 / (1.1 * 1.0))
        assert all(l.n_drawn == 1000 for l in logs)

    def test_para_halving(self, toy):
        X, y = toy
        model, logs = train_para(X, y, 1.0, 50, max_depth=2, keep_drawn=True)
        assert [l.n_drawn for l in logs] == [500, 250, 125, 63, 31, 16, 8, 4, 2]
        assert len(model.trees) <= math.floor(math.log2(1000)) + 1
        drawn = np.concatenate([l.drawn for l in logs])
        assert np.unique(drawn).size == drawn.size
        assert model.ledger.total() == pytest.approx(1.0)

    def test_np_picks_separating_feature(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(100, 5))
        y = np.where(X[:, 3] > 0.2, 1.0, -1.0)
        model, _ = train_np(X, y, 1, max_depth=1)
        assert model.trees[0].feature[0] == 3
        assert len(model.ledger) == 0

    def test_np_single_instance_residual(self):
        lam = 0.1
        X, y = np.zeros((1, 1)), np.array([0.7])
        model, _ = train_np(X, y, 1, eta=1.0, reg_lambda=lam)
        residual = y - model.raw_predict(X)
        assert residual[0] == pytest.approx(0.7 * lam / (1 + lam))

    def test_np_training_rmse_non_increasing(self, toy):
        X, y = toy
        model, _ = train_np(X, y, 20, max_depth=3)
        raw = np.zeros(len(y))
        prev = np.inf
        for tree in model.trees:
            raw += model.eta * tree.predict(X)
            rmse = np.sqrt(np.mean((raw - y) ** 2))
            assert rmse <= prev + 1e-12
            prev = rmse

    def test_dispatch(self, toy):
        X, y = toy
        for mode in ("dpboost", "seq", "para", "np"):
            model, _ = train(X, y, PrivacyConfig(1.0, 3, 3, mode=mode), max_depth=1, keep_drawn=True)
            assert model.params["mode"] == mode
