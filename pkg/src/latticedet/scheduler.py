"""Budgeted hybrid detection of a batch of K problems.

Every problem is ZF-decoded first. The problems are then visited in
descending condition-number order and handed to the sphere decoder, each
one capped by whatever is left of a shared budget, until the budget is
gone. Problems never reached keep their ZF decision.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import numkit
from .detect import (
    DetectionResult,
    SdConfig,
    residual_metric,
    sphere_search,
    zf_estimate_batch,
)
from .errors import EmptyBatch


@dataclass(frozen=True)
class BudgetPolicy:
    """Clock-budget model.

    ``n`` is the ratio of the total budget to the cost of ZF-decoding the
    whole batch, so the pool is ``n * K * zf_cost_units``. ``zf_cost_units``
    defaults to ``2 * M**2`` when left as ``None``.
    """

    n: float = math.inf
    zf_cost_units: int | None = None
    node_cost_units: int = 1

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError(f"budget ratio n must be >= 1, got {self.n}")
        if self.zf_cost_units is not None and self.zf_cost_units < 1:
            raise ValueError("zf_cost_units must be a positive integer")
        if self.node_cost_units < 1:
            raise ValueError("node_cost_units must be a positive integer")

    def zf_units(self, m):
        return self.zf_cost_units if self.zf_cost_units is not None else 2 * m * m

    def total_budget(self, k, m):
        """Pool size in units, or ``inf`` for an unlimited budget."""
        if math.isinf(self.n):
            return math.inf
        # guard against n*K*c landing a hair under an integer
        return math.floor(self.n * k * self.zf_units(m) + 1e-9)


@dataclass(frozen=True)
class BatchResult:
    results: list
    sd_attempted: list
    sd_completed: list
    budget_spent: int
    ordering: list
    condition_numbers: np.ndarray
    rank_deficient: list


@dataclass
class PreparedBatch:
    """Step-1 output shared by every budget applied to the same problems."""

    h: np.ndarray
    y: np.ndarray
    s_hat: np.ndarray
    r: np.ndarray
    zf_indices: np.ndarray
    zf_metrics: np.ndarray
    condition_numbers: np.ndarray
    ordering: list


def prepare_batch(problems, c):
    """ZF-decode every problem and compute the descending-kappa order."""
    if not problems:
        raise EmptyBatch("detect_batch needs at least one problem")
    h = np.stack([p.h for p in problems])
    y = np.stack([p.y for p in problems])
    return prepare_arrays(h, y, c)


def prepare_arrays(h, y, c, *, order=True):
    """``prepare_batch`` on stacked arrays; ``order=False`` skips the
    condition numbers when only the ZF decisions are wanted."""
    if h.shape[0] == 0:
        raise EmptyBatch("detect_batch needs at least one problem")
    s_hat, r = zf_estimate_batch(h, y, strict=False)
    zf_idx = c.slice_many(s_hat)
    e = y - np.einsum("bij,bj->bi", h, c.points[zf_idx])
    zf_met = np.sum(e.real ** 2 + e.imag ** 2, axis=-1)
    if not order:
        return PreparedBatch(h, y, s_hat, r, zf_idx, zf_met, None, None)
    kappa = numkit.condition_number(h, strict=False)
    # stable sort on -kappa: descending, ties by original index
    ordering = np.argsort(-kappa, kind="stable").tolist()
    return PreparedBatch(h, y, s_hat, r, zf_idx, zf_met, kappa, ordering)


def detect_batch(problems, c, policy, cfg=SdConfig(), *, prepared=None, sd_cache=None):
    """Hybrid ZF/SD detection of ``problems`` under ``policy``.

    ``prepared`` may carry a precomputed :class:`PreparedBatch`. ``sd_cache``
    is an optional dict keyed by problem index holding uncapped SD runs
    ``(indices, nodes)``; the search is deterministic, so a capped run whose
    cap covers the uncapped node count returns the same thing.
    """
    if prepared is None:
        prepared = prepare_batch(problems, c)
    pb = prepared
    k, _, m = pb.h.shape
    zf_units = policy.zf_units(m)
    pool = policy.total_budget(k, m)
    spent = k * zf_units

    results = [
        DetectionResult(tuple(int(v) for v in pb.zf_indices[i]), float(pb.zf_metrics[i]), 0, False)
        for i in range(k)
    ]
    attempted = [False] * k
    completed = [False] * k
    for i in pb.ordering:
        if math.isinf(pool):
            cap = None
        else:
            cap = (pool - spent) // policy.node_cost_units
            if cap < 1:
                break
        cached = sd_cache.get(i) if sd_cache is not None else None
        if cached is not None and (cap is None or cached[1] <= cap):
            idx, nodes, exact = cached[0], cached[1], True
        else:
            idx, nodes, exact = sphere_search(pb.r[i], pb.s_hat[i], c, cfg.with_cap(cap))
            if exact and sd_cache is not None:
                sd_cache[i] = (idx, nodes)
        spent += nodes * policy.node_cost_units
        attempted[i] = True
        completed[i] = exact
        metric = residual_metric(pb.h[i], pb.y[i], c.points[list(idx)])
        results[i] = DetectionResult(idx, metric, nodes, exact)

    return BatchResult(
        results=results,
        sd_attempted=attempted,
        sd_completed=completed,
        budget_spent=int(spent),
        ordering=list(pb.ordering),
        condition_numbers=pb.condition_numbers,
        rank_deficient=[bool(v) for v in np.isinf(pb.condition_numbers)],
    )
