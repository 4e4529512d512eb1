import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latticedet import numkit
from latticedet.constellation import make_qam
from latticedet.detect import DetectionProblem, SdConfig, ml_detect, sphere_search, zf_detect, zf_estimate
from latticedet.errors import EmptyBatch
from latticedet.scheduler import BudgetPolicy, detect_batch, prepare_batch
from latticedet.sim import complex_normal
from conftest import make_problem
from oracles import matrix_with_condition


def batch(rng, k, n, m, c, snr_db=None):
    return [make_problem(rng, n, m, c, snr_db)[0] for _ in range(k)]


def uncapped_nodes(p, c):
    return sphere_search(numkit.qr_decompose(p.h).r, zf_estimate(p), c, SdConfig())[1]


class TestPolicy:
    def test_defaults(self):
        pol = BudgetPolicy()
        assert math.isinf(pol.n) and pol.zf_units(4) == 32
        assert pol.total_budget(64, 4) == math.inf

    def test_total_budget(self):
        assert BudgetPolicy(2.0).total_budget(10, 2) == 160
        assert BudgetPolicy(1.5, zf_cost_units=3).total_budget(4, 2) == 18
        # n*K*c lands a hair under an integer in floating point
        n = 0.7 * 3
        assert n * 10 * 2 < 42
        assert BudgetPolicy(n, zf_cost_units=2).total_budget(10, 1) == 42

    @pytest.mark.parametrize("kw", [dict(n=0.5), dict(n=math.nan), dict(n=2, zf_cost_units=0), dict(node_cost_units=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            BudgetPolicy(**kw)


class TestBoundaries:
    def test_n_one_is_zf(self, rng, qam16):
        probs = batch(rng, 32, 4, 4, qam16)
        res = detect_batch(probs, qam16, BudgetPolicy(1.0))
        assert [r.symbol_indices for r in res.results] == [zf_detect(p, qam16).symbol_indices for p in probs]
        assert not any(res.sd_attempted)
        assert res.budget_spent == 32 * 32

    def test_n_inf_is_ml(self, rng, qam16):
        probs = batch(rng, 24, 3, 3, qam16)
        res = detect_batch(probs, qam16, BudgetPolicy())
        assert [r.symbol_indices for r in res.results] == [ml_detect(p, qam16).symbol_indices for p in probs]
        assert all(res.sd_completed)

    def test_empty(self, qpsk):
        with pytest.raises(EmptyBatch):
            detect_batch([], qpsk, BudgetPolicy(2.0))


class TestThreeProblemExample:
    def test_only_worst_conditioned_is_attempted(self, qam16):
        rng = np.random.default_rng(11)
        kappas = (10.0, 2.0, 100.0)
        probs = []
        for kappa in kappas:
            h = matrix_with_condition(rng, 4, 4, kappa)
            idx = rng.integers(16, size=4)
            probs.append(DetectionProblem(h, h @ qam16.points[idx] + 0.3 * complex_normal(rng, 4), 0.3))
        nodes = [uncapped_nodes(p, qam16) for p in probs]
        zf_total = 3 * 32
        policy = BudgetPolicy((zf_total + nodes[2]) / zf_total)
        assert policy.total_budget(3, 4) == zf_total + nodes[2]
        res = detect_batch(probs, qam16, policy)
        assert res.ordering == [2, 0, 1]
        assert np.allclose(res.condition_numbers, kappas, rtol=1e-8)
        assert res.sd_attempted == [False, False, True]
        assert res.sd_completed == [False, False, True]
        assert res.results[2].symbol_indices == ml_detect(probs[2], qam16).symbol_indices
        assert res.budget_spent == zf_total + nodes[2]


class TestInvariants:
    @settings(max_examples=40)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 20.0))
    def test_prefix_conservation_dominance(self, seed, n):
        c = make_qam(16)
        rng = np.random.default_rng(seed)
        probs = batch(rng, 12, 4, 4, c)
        policy = BudgetPolicy(n)
        res = detect_batch(probs, c, policy)
        flags = [res.sd_attempted[i] for i in res.ordering]
        cut = flags.index(False) if False in flags else len(flags)
        assert not any(flags[cut:])
        assert all(a or not d for a, d in zip(res.sd_attempted, res.sd_completed))
        assert res.budget_spent <= policy.total_budget(12, 4)
        kappa = res.condition_numbers[res.ordering]
        assert np.all(np.diff(kappa) <= 0)
        for p, r in zip(probs, res.results):
            assert r.metric <= zf_detect(p, c).metric * (1 + 1e-12)

    def test_monotone_budget_benefit(self, rng, qam16):
        probs = batch(rng, 16, 4, 4, qam16, snr_db=10)
        prev = None
        for n in (1.0, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0, math.inf):
            metrics = np.array([r.metric for r in detect_batch(probs, qam16, BudgetPolicy(n)).results])
            if prev is not None:
                assert np.all(metrics <= prev * (1 + 1e-12))
            prev = metrics

    def test_order_invariance(self, rng, qam16):
        probs = batch(rng, 20, 4, 4, qam16)
        perm = rng.permutation(20)
        pol = BudgetPolicy(3.0)
        a = detect_batch(probs, qam16, pol)
        b = detect_batch([probs[i] for i in perm], qam16, pol)
        assert [b.results[j] for j in range(20)] == [a.results[i] for i in perm]
        assert [b.sd_attempted[j] for j in range(20)] == [a.sd_attempted[i] for i in perm]

    def test_node_cost_units(self, rng, qam16):
        probs = batch(rng, 8, 4, 4, qam16)
        res = detect_batch(probs, qam16, BudgetPolicy(4.0, node_cost_units=7))
        nodes = sum(r.nodes_visited for r in res.results)
        assert res.budget_spent == 8 * 32 + 7 * nodes
        assert res.budget_spent <= BudgetPolicy(4.0).total_budget(8, 4)

    def test_sd_cache_is_transparent(self, rng, qam16):
        probs = batch(rng, 16, 4, 4, qam16, snr_db=12)
        prepared = prepare_batch(probs, qam16)
        cache = {}
        detect_batch(probs, qam16, BudgetPolicy(), prepared=prepared, sd_cache=cache)
        for n in (1.3, 2.0, 4.0):
            pol = BudgetPolicy(n)
            assert _same(detect_batch(probs, qam16, pol, prepared=prepared, sd_cache=cache),
                         detect_batch(probs, qam16, pol))


def _same(a, b):
    return (a.results == b.results and a.sd_attempted == b.sd_attempted
            and a.sd_completed == b.sd_completed and a.budget_spent == b.budget_spent)


class TestRankDeficient:
    def test_flagged_and_first(self, rng, qpsk):
        probs = batch(rng, 5, 3, 2, qpsk)
        h = complex_normal(rng, (3, 2))
        h[:, 1] = h[:, 0]
        probs.insert(2, DetectionProblem(h, h @ qpsk.points[[1, 2]], 0.0))
        res = detect_batch(probs, qpsk, BudgetPolicy())
        assert res.rank_deficient == [False, False, True, False, False, False]
        assert res.ordering[0] == 2
        assert math.isinf(res.condition_numbers[2])
        r = res.results[2]
        # columns are equal, so any pair with the same sum is optimal
        assert r.metric < 1e-20
        for p, rr in zip(probs[:2] + probs[3:], res.results[:2] + res.results[3:]):
            assert rr.symbol_indices == ml_detect(p, qpsk).symbol_indices
