"""Randomized self-checks behind ``latticedet verify``.

Each suite draws its own instances from a fixed seed and returns a
``SuiteResult``; the checks compare the fast paths against brute force.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import numkit
from .constellation import make_qam
from .detect import (
    DetectionProblem,
    ml_detect,
    ml_detect_batch,
    level_costs,
    sd_detect,
    zf_detect,
    zf_estimate,
)
from .scheduler import BudgetPolicy, detect_batch
from .sim import complex_normal, snr_to_rho


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    detail: str = ""


def random_problem(rng, n, m, c, snr_db=None):
    """Rayleigh channel, uniform symbols, noise at ``snr_db`` (uniform
    0-20 dB when omitted). Returns ``(problem, true_indices)``."""
    if snr_db is None:
        snr_db = rng.uniform(0.0, 20.0)
    rho = snr_to_rho(snr_db, m)
    h = complex_normal(rng, (n, m))
    idx = rng.integers(c.order, size=m)
    y = h @ c.points[idx] + rho * complex_normal(rng, n)
    return DetectionProblem(h, y, rho), idx


def random_batch(rng, k, n, m, c, snr_db=None):
    return [random_problem(rng, n, m, c, snr_db)[0] for _ in range(k)]


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def check_sd_equals_ml(instances, n, m, order, seed=1, metric_tol=1e-9):
    c = make_qam(order)
    rng = np.random.default_rng([seed, n, m, order])
    probs = [random_problem(rng, n, m, c)[0] for _ in range(instances)]
    ml_idx, ml_met = ml_detect_batch(np.stack([p.h for p in probs]),
                                     np.stack([p.y for p in probs]), c)
    bad = 0
    worst = 0.0
    for p, mi, mm in zip(probs, ml_idx, ml_met):
        r = sd_detect(p, c, zf_estimate(p))
        rel = _rel(r.metric, float(mm))
        worst = max(worst, rel)
        if r.symbol_indices != tuple(int(v) for v in mi) or rel > metric_tol or not r.exact:
            bad += 1
    return SuiteResult(f"sd_equals_ml {n}x{m} {order}-QAM", bad == 0, instances,
                       f"{bad} mismatches, worst metric rel err {worst:.1e}")


def check_metric_decomposition(instances, n=4, m=4, order=16, seed=2, tol=1e-9):
    """``||y-Hs||^2 = ||y-H s_hat||^2 + ||R(s_hat-s)||^2`` and the level sum."""
    c = make_qam(order)
    rng = np.random.default_rng([seed, n, m, order])
    worst = 0.0
    for _ in range(instances):
        p, _ = random_problem(rng, n, m, c)
        s = c.points[rng.integers(order, size=m)]
        f = numkit.qr_decompose(p.h)
        s_hat = zf_estimate(p)
        u = f.r @ (s_hat - s)
        quad = float(np.real(np.vdot(u, u)))
        lhs = float(np.sum(np.abs(p.y - p.h @ s) ** 2))
        rhs = float(np.sum(np.abs(p.y - p.h @ s_hat) ** 2)) + quad
        levels = float(np.sum(level_costs(f.r, s_hat, s)))
        worst = max(worst, _rel(lhs, rhs), _rel(levels, quad))
    return SuiteResult("metric_decomposition", worst <= tol, instances,
                       f"worst rel err {worst:.1e}")


def check_prefix_and_budget(batches, k=16, n=4, m=4, order=16, seed=3):
    """SD-attempted set is a prefix of the kappa ordering; no overdraft."""
    c = make_qam(order)
    rng = np.random.default_rng([seed, k, n, m, order])
    bad = 0
    for _ in range(batches):
        probs = random_batch(rng, k, n, m, c)
        policy = BudgetPolicy(float(rng.uniform(1.0, 20.0)))
        res = detect_batch(probs, c, policy)
        flags = [res.sd_attempted[i] for i in res.ordering]
        first_false = flags.index(False) if False in flags else len(flags)
        prefix = not any(flags[first_false:])
        kappa = res.condition_numbers[res.ordering]
        ordered = bool(np.all(np.diff(kappa) <= 0))
        within = res.budget_spent <= policy.total_budget(k, m)
        implied = all(a or not d for a, d in zip(res.sd_attempted, res.sd_completed))
        if not (prefix and ordered and within and implied):
            bad += 1
    return SuiteResult("prefix_and_budget", bad == 0, batches, f"{bad} violating batches")


def check_boundary_identities(batches, k=16, n=2, m=2, order=4, seed=4):
    """n = 1 reproduces ZF and n = inf reproduces ML, index for index."""
    c = make_qam(order)
    rng = np.random.default_rng([seed, k, n, m, order])
    bad = 0
    for _ in range(batches):
        probs = random_batch(rng, k, n, m, c)
        low = detect_batch(probs, c, BudgetPolicy(1.0))
        high = detect_batch(probs, c, BudgetPolicy(math.inf))
        zf = [zf_detect(p, c).symbol_indices for p in probs]
        ml = [ml_detect(p, c).symbol_indices for p in probs]
        if [r.symbol_indices for r in low.results] != zf or any(low.sd_attempted):
            bad += 1
        elif [r.symbol_indices for r in high.results] != ml or not all(high.sd_completed):
            bad += 1
    return SuiteResult("boundary_identities", bad == 0, batches, f"{bad} violating batches")


def run_all(instances=1000, seed=0):
    """Every suite at a size proportional to ``instances``."""
    batches = max(1, instances // 10)
    return [
        check_sd_equals_ml(instances, 2, 2, 4, seed=seed + 1),
        check_sd_equals_ml(max(1, instances // 4), 4, 4, 16, seed=seed + 1),
        check_metric_decomposition(instances, seed=seed + 2),
        check_prefix_and_budget(batches, seed=seed + 3),
        check_boundary_identities(batches, seed=seed + 4),
    ]
