"""Zero-forcing, exhaustive ML and sphere-decoding detectors.

All three work on the model ``y = H s + w`` with ``H`` tall (N x M) and
``s`` drawn from a QAM constellation on every stream.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from . import numkit
from .errors import RankDeficient, SearchSpaceTooLarge, ZeroNoise

MAX_SEARCH_SPACE = 2 ** 20
TIE_TOL = 1e-12
RADIUS_SLACK = 1e-9
ML_CHUNK_ELEMS = 2 ** 22

# Multiplier applied to the shrunk radius after each new candidate. Anything
# other than 1.0 breaks the search; only the verify command's fault toggle
# touches it.
_radius_fault = 1.0


@dataclass(frozen=True, eq=False)
class DetectionProblem:
    h: np.ndarray
    y: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        h = numkit.as_matrix(self.h)
        y = np.asarray(self.y, dtype=np.complex128).ravel()
        n, m = h.shape
        if n < m:
            raise ValueError(f"need N >= M, got {n}x{m}")
        if y.shape != (n,):
            raise ValueError(f"y has length {y.size}, expected {n}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        rho = float(self.rho)
        if not (rho >= 0 and math.isfinite(rho)):
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "rho", rho)

    @property
    def n_rx(self):
        return self.h.shape[0]

    @property
    def n_tx(self):
        return self.h.shape[1]


@dataclass(frozen=True)
class DetectionResult:
    symbol_indices: tuple
    metric: float
    nodes_visited: int = 0
    exact: bool = False


@dataclass(frozen=True)
class SdConfig:
    """Sphere decoder settings.

    ``strategy="babai"`` seeds the radius with the sliced ZF point.
    ``strategy="fixed"`` starts from ``r0**2`` and multiplies the squared
    radius by ``growth`` whenever the sphere turns out empty.
    ``node_cap`` bounds the number of node evaluations; ``None`` means
    run to completion.
    """

    strategy: str = "babai"
    r0: float | None = None
    growth: float | None = None
    node_cap: int | None = None

    def __post_init__(self):
        if self.strategy == "babai":
            pass
        elif self.strategy == "fixed":
            if self.r0 is None or not self.r0 > 0:
                raise ValueError("fixed strategy needs r0 > 0")
            if self.growth is None or not self.growth > 1:
                raise ValueError("fixed strategy needs growth > 1")
        else:
            raise ValueError(f"unknown radius strategy {self.strategy!r}")
        if self.node_cap is not None and self.node_cap < 0:
            raise ValueError("node_cap must be >= 0")

    @classmethod
    def fixed(cls, r0, growth, node_cap=None):
        return cls("fixed", r0, growth, node_cap)

    def with_cap(self, node_cap):
        return SdConfig(self.strategy, self.r0, self.growth, node_cap)


def residual_metric(h, y, points):
    """``||y - H s||^2`` for a symbol vector ``points``."""
    e = y - h @ points
    return float(np.real(np.vdot(e, e)))


# --- zero forcing -----------------------------------------------------------

def zf_estimate(p):
    """Unsliced least-squares estimate ``H^+ y``."""
    return numkit.pseudo_inverse(p.h) @ p.y


def zf_detect(p, c):
    s_hat = zf_estimate(p)
    idx = tuple(int(k) for k in c.slice_many(s_hat))
    return DetectionResult(idx, residual_metric(p.h, p.y, c.points[list(idx)]), 0, False)


def zf_estimate_batch(h, y, *, strict=True):
    """ZF estimates for a stack of problems; ``h`` is (B, N, M), ``y`` (B, N).

    Returns ``(s_hat, r)`` so callers can reuse the triangular factor. With
    ``strict=False`` rank-deficient members fall back to the truncated
    pseudo-inverse instead of raising.
    """
    f = numkit.householder_qr(h)
    pivots = np.diagonal(f.r, axis1=-2, axis2=-1).real
    scale = np.linalg.norm(h, axis=(-2, -1))
    deficient = np.min(pivots, axis=-1) < numkit.RANK_TOL * scale
    if np.any(deficient):
        if strict:
            raise RankDeficient("rank-deficient channel in batch")
        s_hat = np.empty(h.shape[:-2] + h.shape[-1:], dtype=np.complex128)
        ok = ~deficient
        if np.any(ok):
            qy = np.einsum("bij,bi->bj", f.q[ok].conj(), y[ok])
            s_hat[ok] = numkit.back_substitute(f.r[ok], qy)
        s_hat[deficient] = np.einsum(
            "bij,bj->bi", numkit.truncated_pseudo_inverse(h[deficient]), y[deficient])
        return s_hat, f.r
    qy = np.einsum("...ij,...i->...j", f.q.conj(), y)
    return numkit.back_substitute(f.r, qy), f.r


# --- exhaustive ML ----------------------------------------------------------

def _check_space(order, m):
    if order ** m > MAX_SEARCH_SPACE:
        raise SearchSpaceTooLarge(f"{order}^{m} candidates exceeds {MAX_SEARCH_SPACE}")


@lru_cache(maxsize=32)
def candidate_grid(order, m):
    """All index vectors in lexicographic order, shape (M, order**M).

    Column ``k`` spells ``k`` in base ``order`` with stream 0 most significant.
    """
    _check_space(order, m)
    k = np.arange(order ** m)
    digits = np.empty((m, k.size), dtype=np.int64)
    for i in range(m - 1, -1, -1):
        digits[i] = k % order
        k = k // order
    digits.setflags(write=False)
    return digits


def _all_metrics(h, y, c):
    """``||y - H s||^2`` over every candidate, for a stack of problems."""
    m = h.shape[-1]
    grid = candidate_grid(c.order, m)
    total = grid.shape[1]
    batch = h.shape[:-2]
    out = np.empty(batch + (total,))
    step = max(1, ML_CHUNK_ELEMS // (h.shape[-2] * max(1, int(np.prod(batch)))))
    for lo in range(0, total, step):
        s = c.points[grid[:, lo:lo + step]]
        e = y[..., :, None] - h @ s
        out[..., lo:lo + step] = np.sum(e.real ** 2 + e.imag ** 2, axis=-2)
    return out


def _first_min(metrics):
    best = np.min(metrics, axis=-1, keepdims=True)
    return np.argmax(metrics <= best + TIE_TOL, axis=-1)


def ml_detect(p, c):
    """Exhaustive argmin of ``||y - H s||^2``; ties go to the
    lexicographically smallest index vector."""
    idx, met = ml_detect_batch(p.h[None], p.y[None], c)
    return DetectionResult(tuple(int(v) for v in idx[0]), float(met[0]), 0, True)


def _split_metrics(h, y, c):
    """All candidate metrics via a split into leading/trailing streams.

    ``||a - b||^2 = ||a||^2 + ||b||^2 - 2 Re(a^H b)`` turns the search into
    one batched matrix product. Index ``lead * order**tail + trail`` is the
    lexicographic candidate index.
    """
    m = h.shape[-1]
    lead = m // 2
    ga = c.points[candidate_grid(c.order, lead)]
    gb = c.points[candidate_grid(c.order, m - lead)]
    a = y[..., :, None] - h[..., :, :lead] @ ga
    b = h[..., :, lead:] @ gb
    na = np.sum(a.real ** 2 + a.imag ** 2, axis=-2)
    nb = np.sum(b.real ** 2 + b.imag ** 2, axis=-2)
    cross = np.real(numkit.hermitian(a) @ b)
    out = na[..., :, None] + nb[..., None, :] - 2.0 * cross
    return out.reshape(*out.shape[:-2], -1)


def ml_detect_batch(h, y, c):
    """Vectorized ``ml_detect`` for (B, N, M) channels; returns
    ``(indices (B, M), metrics (B,))``.

    Candidates within a small window of the fast minimum are re-scored
    directly before the tie-break, so cancellation in the split form cannot
    change the decision.
    """
    b, n, m = h.shape
    _check_space(c.order, m)
    grid = candidate_grid(c.order, m)
    total = grid.shape[1]
    idx = np.empty((b, m), dtype=np.int64)
    met = np.empty(b)
    if m == 1:
        metric_fn = _all_metrics
    else:
        metric_fn = _split_metrics
    per = max(1, ML_CHUNK_ELEMS // (n * total))
    for lo in range(0, b, per):
        hh, yy = h[lo:lo + per], y[lo:lo + per]
        fast = metric_fn(hh, yy, c)
        k = np.argmin(fast, axis=-1)
        floor = np.take_along_axis(fast, k[:, None], axis=-1)
        window = 1e-9 * (1.0 + np.abs(floor) + np.sum(np.abs(yy) ** 2, axis=-1, keepdims=True))
        crowded = np.count_nonzero(fast <= floor + window, axis=-1) > 1
        best = grid[:, k].T
        e = yy - np.einsum("bij,bj->bi", hh, c.points[best])
        idx[lo:lo + per] = best
        met[lo:lo + per] = np.sum(e.real ** 2 + e.imag ** 2, axis=-1)
        for j in np.flatnonzero(crowded):
            near = np.flatnonzero(fast[j] <= floor[j] + window[j])
            e = yy[j][:, None] - hh[j] @ c.points[grid[:, near]]
            exact = np.sum(e.real ** 2 + e.imag ** 2, axis=0)
            kk = int(_first_min(exact))
            idx[lo + j] = grid[:, near[kk]]
            met[lo + j] = exact[kk]
    return idx, met


def ml_llr(p, c, bit_position):
    """Max-log LLR of one transmitted bit, positive when ``b = 1`` is more
    likely: ``(min_{b=0} - min_{b=1}) / rho^2``."""
    if p.rho == 0:
        raise ZeroNoise("LLR undefined for rho = 0")
    bps = c.bits_per_symbol
    if not 0 <= bit_position < p.n_tx * bps:
        raise IndexError(f"bit_position {bit_position} out of range")
    _check_space(c.order, p.n_tx)
    metrics = _all_metrics(p.h, p.y, c)
    stream, b = divmod(bit_position, bps)
    bit = c.labels[candidate_grid(c.order, p.n_tx)[stream], b]
    d0 = metrics[bit == 0].min()
    d1 = metrics[bit == 1].min()
    return float((d0 - d1) / p.rho ** 2)


# --- sphere decoding --------------------------------------------------------

def level_costs(r, center, s):
    """Per-level terms of the triangular expansion of ``||R (s_hat - s)||^2``:

    ``u_ii^2 |s_i - c_i + sum_{j>i} (u_ij/u_ii)(s_j - c_j)|^2``.
    """
    m = len(center)
    d = np.asarray(s) - np.asarray(center)
    out = np.empty(m)
    for i in range(m):
        u = r[i, i].real
        inner = d[i] + np.dot(r[i, i + 1:] / u, d[i + 1:])
        out[i] = u * u * abs(inner) ** 2
    return out


def babai_point(r, center, c):
    """Sliced ZF point and its cost ``||R (s_hat - s)||^2``."""
    idx = c.slice_many(center)
    e = r @ (center - c.points[idx])
    return tuple(int(k) for k in idx), float(np.real(np.vdot(e, e)))


def _shrink(cost):
    return (cost * (1.0 + RADIUS_SLACK) + TIE_TOL) * _radius_fault


def _search(r, center, c, radius_sq, best, node_cap, nodes, trace):
    """Depth-first Schnorr-Euchner enumeration from level M-1 down to 0.

    ``best`` is ``(cost, index_tuple)`` or ``None``. Returns
    ``(best, nodes, cut)`` where ``cut`` is true when ``node_cap`` stopped
    the search early. Costs are ``||R (s_hat - s)||^2``.
    """
    m = len(center)
    pts = c.points
    pts_list = pts.tolist()
    ctr = center.tolist()
    diag = r.diagonal().real
    d2 = (diag * diag).tolist()
    regular = (diag > numkit.RANK_TOL * max(np.linalg.norm(r), 1e-300)).tolist()
    coef = [[(r[i, j] / r[i, i] if regular[i] else r[i, j]) for j in range(m)] for i in range(m)]
    chosen = [0] * m
    diff = [0j] * m
    best_cost, best_seq = best if best is not None else (math.inf, None)

    def open_level(i, partial):
        acc = 0j
        for j in range(i + 1, m):
            acc += coef[i][j] * diff[j]
        if regular[i]:
            incs = d2[i] * np.abs(pts - (ctr[i] - acc)) ** 2
        else:
            # vanishing pivot: cost no longer depends on the per-level center
            incs = np.abs(r[i, i] * (pts - ctr[i]) + acc) ** 2
        return [i, partial, np.argsort(incs, kind="stable").tolist(), incs.tolist(), 0]

    stack = [open_level(m - 1, 0.0)]
    cut = False
    while stack:
        frame = stack[-1]
        i, partial, order, incs, pos = frame
        if pos >= len(order):
            stack.pop()
            continue
        if node_cap is not None and nodes >= node_cap:
            cut = True
            break
        k = order[pos]
        frame[4] = pos + 1
        nodes += 1
        cost = partial + incs[k]
        if cost >= radius_sq:
            # candidates are sorted, the rest of this level is no better
            stack.pop()
            continue
        chosen[i] = k
        diff[i] = pts_list[k] - ctr[i]
        if i:
            stack.append(open_level(i - 1, cost))
            continue
        seq = tuple(chosen)
        if (best_seq is None or cost < best_cost - TIE_TOL
                or (cost <= best_cost + TIE_TOL and seq < best_seq)):
            best_cost, best_seq = cost, seq
            radius_sq = _shrink(cost)
            if trace is not None:
                trace.append(cost)
        stack.pop()
    found = None if best_seq is None else (best_cost, best_seq)
    return found, nodes, cut


def sphere_search(r, center, c, cfg, *, trace=None):
    """Run the sphere decoder on a triangular factor.

    Returns ``(indices, nodes_visited, exact)``. Tolerates vanishing pivots
    in ``r`` (used by the batch scheduler's rank-deficient fallback).
    """
    center = np.asarray(center, dtype=np.complex128)
    babai = babai_point(r, center, c)
    cap = cfg.node_cap
    if cfg.strategy == "babai":
        seed = (babai[1], babai[0])
        if trace is not None:
            trace.append(babai[1])
        best, nodes, cut = _search(r, center, c, _shrink(babai[1]), seed, cap, 0, trace)
        return best[1], nodes, not cut

    radius_sq = float(cfg.r0) ** 2
    nodes = 0
    while True:
        best, nodes, cut = _search(r, center, c, radius_sq, None, cap, nodes, trace)
        if best is not None or cut:
            break
        radius_sq *= cfg.growth
    if cut:
        # cut off: never hand back anything worse than the Babai point
        if best is None or best[0] > babai[1] + TIE_TOL or (
                best[0] >= babai[1] - TIE_TOL and babai[0] < best[1]):
            best = (babai[1], babai[0])
    return best[1], nodes, not cut


def sd_detect(p, c, center=None, cfg=SdConfig()):
    """Sphere decoding around the ZF estimate ``center``.

    Run to completion the result is the ML decision (same tie-break as
    ``ml_detect``). With ``cfg.node_cap`` it returns the best point found
    so far, which is never worse than the Babai point.
    """
    f = numkit.qr_decompose(p.h)
    if center is None:
        center = numkit.back_substitute(f.r, f.q.conj().T @ p.y)
    center = np.asarray(center, dtype=np.complex128)
    if center.shape != (p.n_tx,):
        raise ValueError(f"center has shape {center.shape}, expected ({p.n_tx},)")
    idx, nodes, exact = sphere_search(f.r, center, c, cfg)
    return DetectionResult(idx, residual_metric(p.h, p.y, c.points[list(idx)]), nodes, exact)
