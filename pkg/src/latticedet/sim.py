"""Monte-Carlo BER engine over i.i.d. Rayleigh channels.

Noise convention: ``y = H s + w`` with ``w`` circularly-symmetric complex
Gaussian of per-entry variance ``rho**2``. With unit-energy symbols and
unit-variance channel taps the per-receive-antenna SNR is ``M / rho**2``.

Randomness is keyed per ``(seed, snr_index, trial_index)``: every trial
draws from its own ``numpy`` substream, so the report does not depend on
how trials are grouped or how many workers run them. All detectors see the
same draws, which keeps comparisons between them paired.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
import logging
import math

import numpy as np

from .constellation import SUPPORTED_ORDERS, bit_errors, make_qam
from .detect import (
    MAX_SEARCH_SPACE,
    DetectionProblem,
    SdConfig,
    ml_detect_batch,
    sphere_search,
)
from .errors import ConfigError, InsufficientData, SearchSpaceTooLarge
from .scheduler import BudgetPolicy, PreparedBatch, detect_batch, prepare_arrays

log = logging.getLogger(__name__)

DETECTORS = ("zf", "ml", "sd_full", "budgeted")
MIN_ERROR_EVENTS = 100
SNR_NOTE = "per-receive-antenna SNR = M / rho^2 (unit-energy symbols, unit-variance Rayleigh taps)"
CHUNK_PROBLEMS = 4096


@dataclass(frozen=True)
class SimConfig:
    n_rx: int = 4
    n_tx: int = 4
    qam_order: int = 16
    snr_grid_db: tuple = (16.0, 18.0, 20.0, 22.0)
    k_batch: int = 64
    n_budget: tuple = (1.0, 2.0, 5.0, 10.0)
    trials: int = 100
    seed: int = 0
    detectors: tuple = ("zf", "ml", "budgeted")
    zf_cost_units: int | None = None
    node_cost_units: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(v) for v in self.snr_grid_db))
        object.__setattr__(self, "n_budget", tuple(float(v) for v in self.n_budget))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        self.validate()

    def validate(self):
        if self.n_tx < 1:
            raise ConfigError("n_tx", "must be >= 1")
        if self.n_rx < self.n_tx:
            raise ConfigError("n_rx", f"must be >= n_tx ({self.n_tx})")
        if self.qam_order not in SUPPORTED_ORDERS:
            raise ConfigError("qam_order", f"must be one of {SUPPORTED_ORDERS}")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db", "must not be empty")
        if any(math.isnan(v) for v in self.snr_grid_db):
            raise ConfigError("snr_grid_db", "NaN in grid")
        if self.k_batch < 1:
            raise ConfigError("k_batch", "must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad or not self.detectors:
            raise ConfigError("detectors", f"unknown {bad}; choose from {DETECTORS}")
        if "budgeted" in self.detectors:
            if not self.n_budget:
                raise ConfigError("n_budget", "needed by the budgeted detector")
            if any(not n >= 1 for n in self.n_budget):
                raise ConfigError("n_budget", "every ratio must be >= 1")
        if self.zf_cost_units is not None and self.zf_cost_units < 1:
            raise ConfigError("zf_cost_units", "must be >= 1")
        if self.node_cost_units < 1:
            raise ConfigError("node_cost_units", "must be >= 1")

    def check_search_space(self):
        """The exhaustive detector must stay within the enumeration guard."""
        if "ml" in self.detectors and self.qam_order ** self.n_tx > MAX_SEARCH_SPACE:
            raise SearchSpaceTooLarge(
                f"ml needs {self.qam_order}^{self.n_tx} candidates (> {MAX_SEARCH_SPACE})")


@dataclass(frozen=True)
class BerRow:
    snr_db: float
    detector: str
    budget_n: float
    bit_errors: int
    bits_total: int
    ber: float
    sd_attempted_frac: float
    sd_completed_frac: float
    mean_nodes: float

    @property
    def low_confidence(self):
        return self.bit_errors < MIN_ERROR_EVENTS


@dataclass
class BerReport:
    config: SimConfig
    rows: list = field(default_factory=list)

    def find(self, detector, snr_db, budget_n=None):
        for row in self.rows:
            if row.detector == detector and row.snr_db == snr_db and (
                    budget_n is None or row.budget_n == budget_n):
                return row
        return None

    def series(self, detector, budget_n=None):
        return sorted(
            (r for r in self.rows
             if r.detector == detector and (budget_n is None or r.budget_n == budget_n)),
            key=lambda r: r.snr_db)


# --- channel and transmission -------------------------------------------------

def substream(seed, snr_index, trial_index):
    """Independent deterministic generator for one (SNR point, trial)."""
    return np.random.default_rng([int(seed), int(snr_index), int(trial_index)])


def snr_to_rho(snr_db, n_tx):
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return math.sqrt(n_tx / 10.0 ** (snr_db / 10.0))


def complex_normal(rng, shape):
    """CN(0, 1) samples: real and imaginary parts each of variance 1/2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def gen_rayleigh_channel(n_rx, n_tx, rng, batch=None):
    if n_rx < 1 or n_tx < 1:
        raise ValueError("channel dimensions must be positive")
    shape = (n_rx, n_tx) if batch is None else (batch, n_rx, n_tx)
    return complex_normal(rng, shape)


def transmit(h, c, rho, rng):
    """Send uniform random symbols through ``h``; returns ``(problem, bits)``."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    h = np.asarray(h, dtype=np.complex128)
    n, m = h.shape
    idx = rng.integers(c.order, size=m)
    y = h @ c.points[idx]
    if rho > 0:
        y = y + rho * complex_normal(rng, n)
    return DetectionProblem(h, y, rho), c.index_bits(idx)


def _draw_trial(rng, cfg, c, rho):
    k, n, m = cfg.k_batch, cfg.n_rx, cfg.n_tx
    h = gen_rayleigh_channel(n, m, rng, batch=k)
    idx = rng.integers(c.order, size=(k, m))
    noise = complex_normal(rng, (k, n))
    y = np.einsum("bij,bj->bi", h, c.points[idx]) + rho * noise
    return h, idx, y


# --- sweep ------------------------------------------------------------------

def _row_keys(cfg):
    keys = []
    for tag in cfg.detectors:
        if tag == "budgeted":
            keys.extend(("budgeted", n) for n in cfg.n_budget)
        elif tag == "zf":
            keys.append(("zf", 1.0))
        else:
            keys.append((tag, math.inf))
    return keys


def _slice_prepared(pb, lo, hi):
    kappa = pb.condition_numbers[lo:hi]
    return PreparedBatch(
        pb.h[lo:hi], pb.y[lo:hi], pb.s_hat[lo:hi], pb.r[lo:hi],
        pb.zf_indices[lo:hi], pb.zf_metrics[lo:hi], kappa,
        np.argsort(-kappa, kind="stable").tolist())


def _run_chunk(cfg, snr_index, t0, t1):
    """Tallies ``[bit_errors, bits, attempted, completed, nodes]`` per row key
    for trials ``t0..t1-1`` of one SNR point."""
    c = make_qam(cfg.qam_order)
    rho = snr_to_rho(cfg.snr_grid_db[snr_index], cfg.n_tx)
    draws = [_draw_trial(substream(cfg.seed, snr_index, t), cfg, c, rho) for t in range(t0, t1)]
    h = np.concatenate([d[0] for d in draws])
    truth = np.concatenate([d[1] for d in draws])
    y = np.concatenate([d[2] for d in draws])
    total = h.shape[0]
    bits = total * cfg.n_tx * c.bits_per_symbol
    keys = _row_keys(cfg)
    tally = {key: np.zeros(5, dtype=np.int64) for key in keys}

    pb = prepare_arrays(h, y, c, order="budgeted" in cfg.detectors)
    sd_cfg = SdConfig()
    cache = {}

    def uncapped(i):
        if i not in cache:
            idx, nodes, _ = sphere_search(pb.r[i], pb.s_hat[i], c, sd_cfg)
            cache[i] = (idx, nodes)
        return cache[i]

    for tag, n in keys:
        t = tally[(tag, n)]
        t[1] = bits
        if tag == "zf":
            t[0] = bit_errors(pb.zf_indices, truth)
        elif tag == "ml":
            idx, _ = ml_detect_batch(h, y, c)
            t[0] = bit_errors(idx, truth)
        elif tag == "sd_full":
            decided = np.empty_like(truth)
            for i in range(total):
                idx, nodes = uncapped(i)
                decided[i] = idx
                t[4] += nodes
            t[0] = bit_errors(decided, truth)
            t[2] = t[3] = total
        else:
            policy = BudgetPolicy(n, cfg.zf_cost_units, cfg.node_cost_units)
            k = cfg.k_batch
            for b in range(total // k):
                lo = b * k
                sub = _slice_prepared(pb, lo, lo + k)
                sub_cache = {i - lo: v for i, v in cache.items() if lo <= i < lo + k}
                res = detect_batch(None, c, policy, sd_cfg, prepared=sub, sd_cache=sub_cache)
                for i, v in sub_cache.items():
                    cache.setdefault(i + lo, v)
                decided = np.array([r.symbol_indices for r in res.results])
                t[0] += bit_errors(decided, truth[lo:lo + k])
                t[2] += sum(res.sd_attempted)
                t[3] += sum(res.sd_completed)
                t[4] += sum(r.nodes_visited for r in res.results)
    return tally


def _tasks(cfg):
    per = max(1, CHUNK_PROBLEMS // cfg.k_batch)
    return [(si, t0, min(t0 + per, cfg.trials))
            for si in range(len(cfg.snr_grid_db))
            for t0 in range(0, cfg.trials, per)]


def run_ber_sweep(cfg, workers=1):
    """Run every (SNR, detector, budget) cell of ``cfg``.

    The result is bit-identical for any ``workers``: chunks are keyed by
    trial index and only integer tallies are summed.
    """
    cfg.check_search_space()
    tasks = _tasks(cfg)
    keys = _row_keys(cfg)
    sums = {(si, key): np.zeros(5, dtype=np.int64)
            for si in range(len(cfg.snr_grid_db)) for key in keys}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_chunk, *zip(*[(cfg, *t) for t in tasks])))
    else:
        outs = (_run_chunk(cfg, *t) for t in tasks)
    done = {}
    for (si, _, _), tally in zip(tasks, outs):
        for key, v in tally.items():
            sums[(si, key)] += v
        done[si] = done.get(si, 0) + 1
        if done[si] == sum(1 for t in tasks if t[0] == si):
            errs = {f"{k[0]}@{k[1]:g}": int(sums[(si, k)][0]) for k in keys}
            log.info("snr %g dB done: bit errors %s", cfg.snr_grid_db[si], errs)

    problems = cfg.trials * cfg.k_batch
    rows = []
    for si, snr in enumerate(cfg.snr_grid_db):
        for tag, n in keys:
            errs, bits, att, comp, nodes = (int(v) for v in sums[(si, (tag, n))])
            rows.append(BerRow(snr, tag, n, errs, bits, errs / bits,
                               att / problems, comp / problems, nodes / problems))
    rows.sort(key=lambda r: (r.detector, r.budget_n, r.snr_db))
    return BerReport(cfg, rows)


# --- diversity ----------------------------------------------------------------

def estimate_diversity_slope(report, detector, snr_lo_db, snr_hi_db, budget_n=None):
    """BER decades lost per decade of SNR between two grid points."""
    lo = report.find(detector, snr_lo_db, budget_n)
    hi = report.find(detector, snr_hi_db, budget_n)
    for snr, row in ((snr_lo_db, lo), (snr_hi_db, hi)):
        if row is None:
            raise InsufficientData(f"no {detector} row at {snr} dB")
        if row.ber <= 0 or row.bit_errors < MIN_ERROR_EVENTS:
            raise InsufficientData(
                f"{detector} at {snr} dB has {row.bit_errors} error events (< {MIN_ERROR_EVENTS})")
    if snr_hi_db == snr_lo_db:
        raise InsufficientData("slope window has zero width")
    return -(math.log10(hi.ber) - math.log10(lo.ber)) / ((snr_hi_db - snr_lo_db) / 10.0)


def slope_window(report, detector, budget_n=None, ber_hi=1e-2, ber_lo=1e-4):
    """Widest pair of grid points whose BER lies in ``[ber_lo, ber_hi]`` with
    enough error events to trust."""
    pts = [r for r in report.series(detector, budget_n)
           if ber_lo <= r.ber <= ber_hi and not r.low_confidence and math.isfinite(r.snr_db)]
    if len(pts) < 2:
        raise InsufficientData(
            f"{detector}: need two SNR points with BER in [{ber_lo:g}, {ber_hi:g}], have {len(pts)}")
    return pts[0].snr_db, pts[-1].snr_db


def config_items(cfg):
    """``(name, value)`` pairs for every SimConfig field, in declaration order."""
    return [(f.name, getattr(cfg, f.name)) for f in fields(cfg)]
