"""Small dense complex linear algebra.

Matrices are plain ``numpy`` complex arrays. Every routine accepts either a
single ``(rows, cols)`` matrix or a stack ``(..., rows, cols)`` so the
simulator can factor thousands of small channels in one call.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, RankDeficient

RANK_TOL = 1e-12
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


def as_matrix(h, *, stacked=False):
    """Validate ``h`` as a finite complex matrix (or stack of matrices)."""
    a = np.asarray(h, dtype=np.complex128)
    if stacked:
        if a.ndim < 2:
            raise ValueError(f"expected a stack of matrices, got shape {a.shape}")
    elif a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[-1] == 0 or a.shape[-2] == 0:
        raise ValueError("matrix must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def hermitian(a):
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class QrFactors:
    """Thin QR factors: ``q`` has orthonormal columns, ``r`` is upper
    triangular with a real nonnegative diagonal."""

    q: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray  # descending


def _unit_phase(z):
    """``z / |z|`` (1 where ``z == 0``). Parts are divided separately because
    complex division by a subnormal magnitude overflows to nan."""
    mag = np.abs(z)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, z.real / safe + 1j * (z.imag / safe), 1.0)


def householder_qr(h):
    """Thin Householder QR on a stack of tall matrices, no rank checks.

    Column phases are rotated afterwards so that ``diag(r)`` is real and
    nonnegative; entries below the diagonal are exact zeros.
    """
    a = np.array(h, dtype=np.complex128)
    *batch, n, m = a.shape
    if n < m:
        raise ValueError(f"QR needs rows >= cols, got {n}x{m}")
    q = np.broadcast_to(np.eye(n, dtype=np.complex128), (*batch, n, n)).copy()
    for k in range(m):
        x = a[..., k:, k]
        norm_x = np.linalg.norm(x, axis=-1)
        x0 = x[..., 0]
        phase = _unit_phase(x0)
        v = x.copy()
        v[..., 0] += phase * norm_x
        norm_v = np.linalg.norm(v, axis=-1)
        live = norm_v > 0
        v = v / np.where(live, norm_v, 1.0)[..., None]
        # reflector P = I - 2 v v^H applied to the trailing block and accumulated into q
        a[..., k:, :] -= 2.0 * v[..., :, None] * np.einsum("...i,...ij->...j", v.conj(), a[..., k:, :])[..., None, :]
        q[..., :, k:] -= 2.0 * np.einsum("...ij,...j->...i", q[..., :, k:], v)[..., :, None] * v.conj()[..., None, :]
    r = np.triu(a[..., :m, :])
    q = q[..., :, :m]
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    ph = _unit_phase(d)
    r = np.conj(ph)[..., :, None] * r
    q = q * ph[..., None, :]
    idx = np.arange(m)
    r[..., idx, idx] = mag
    return QrFactors(q=q, r=r)


def qr_decompose(h):
    """QR factorization of a tall, full-column-rank matrix.

    Raises ``RankDeficient`` when a pivot of ``r`` drops below
    ``1e-12 * ||h||_F``.
    """
    h = as_matrix(h)
    rows, cols = h.shape
    if rows < cols:
        raise ValueError(f"qr_decompose needs rows >= cols, got {rows}x{cols}")
    f = householder_qr(h)
    pivots = np.diagonal(f.r).real
    if np.min(pivots) < RANK_TOL * np.linalg.norm(h):
        raise RankDeficient(f"pivot {np.min(pivots):.3e} below rank threshold")
    return f


def jacobi_svd(h):
    """One-sided (Hestenes) Jacobi on a stack of matrices.

    Plane rotations are applied to the columns of ``h`` until they are
    mutually orthogonal, which diagonalizes ``h^H h``. Returns
    ``(values, v)`` with ``values`` descending and ``v`` the matching right
    singular vectors. Wide inputs are handled through ``h^H``.
    """
    a = np.array(h, dtype=np.complex128)
    if a.shape[-2] < a.shape[-1]:
        a = hermitian(a)
    *batch, _, m = a.shape
    v = np.broadcast_to(np.eye(m, dtype=np.complex128), (*batch, m, m)).copy()
    for _sweep in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                ap = a[..., :, p]
                aq = a[..., :, q]
                alpha = np.sum(np.abs(ap) ** 2, axis=-1)
                beta = np.sum(np.abs(aq) ** 2, axis=-1)
                gamma = np.sum(ap.conj() * aq, axis=-1)
                g = np.abs(gamma)
                active = g > JACOBI_TOL * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                g_safe = np.where(active, g, 1.0)
                e = np.where(active, gamma / g_safe, 1.0)
                zeta = (beta - alpha) / (2.0 * g_safe)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(active, c * t, 0.0)
                for mat in (a, v):
                    xp = mat[..., :, p].copy()
                    xq = mat[..., :, q] * np.conj(e)[..., None]
                    mat[..., :, p] = c[..., None] * xp - s[..., None] * xq
                    mat[..., :, q] = s[..., None] * xp + c[..., None] * xq
        if not rotated:
            break
    else:
        raise NoConvergence(f"Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    values = np.linalg.norm(a, axis=-2)
    order = np.argsort(-values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return values, v


def singular_values(h):
    """Singular values of ``h`` in descending order."""
    h = as_matrix(h)
    values, _ = jacobi_svd(h)
    return SingularSpectrum(values=values)


def condition_number(h, *, strict=True):
    """``sigma_max / sigma_min``.

    With ``strict=False`` a rank-deficient matrix reports ``inf`` instead of
    raising; this is what the batch scheduler uses so that such matrices sort
    first. Works on stacks when ``strict=False``.
    """
    if strict:
        h = as_matrix(h)
    else:
        h = as_matrix(h, stacked=True)
    values, _ = jacobi_svd(h)
    smax = values[..., 0]
    smin = values[..., -1]
    deficient = smin < RANK_TOL * smax
    if strict and np.any(deficient):
        raise RankDeficient("smallest singular value below rank threshold")
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(deficient, np.inf, smax / np.where(deficient, 1.0, smin))
    return float(kappa) if kappa.ndim == 0 else kappa


def back_substitute(r, b):
    """Solve ``r x = b`` for upper-triangular ``r`` (stacked).

    ``b`` may be a vector stack ``(..., m)`` or a matrix stack ``(..., m, k)``.
    """
    m = r.shape[-1]
    vector = b.ndim == r.ndim - 1
    x = np.array(b[..., None] if vector else b, dtype=np.complex128)
    for i in range(m - 1, -1, -1):
        acc = x[..., i, :]
        if i + 1 < m:
            acc = acc - np.einsum("...j,...jk->...k", r[..., i, i + 1:], x[..., i + 1:, :])
        d = r[..., i, i][..., None]
        # a real pivot divides part by part, which survives subnormal values
        x[..., i, :] = acc / d.real if not np.any(d.imag) else acc / d
    return x[..., 0] if vector else x


def pseudo_inverse(h):
    """Left pseudo-inverse ``R^{-1} Q^H`` of a tall full-column-rank matrix."""
    f = qr_decompose(h)
    return back_substitute(f.r, hermitian(f.q))


def truncated_pseudo_inverse(h, rcond=RANK_TOL):
    """Pseudo-inverse that drops singular directions below ``rcond * sigma_max``.

    Fallback for rank-deficient channels; gives the minimum-norm
    least-squares solution.
    """
    h = as_matrix(h, stacked=True)
    tall = h.shape[-2] >= h.shape[-1]
    values, v = jacobi_svd(h)
    keep = values > rcond * values[..., :1]
    inv_sq = np.where(keep, 1.0 / np.where(keep, values, 1.0) ** 2, 0.0)
    if tall:
        # h v = u diag(s)  =>  h^+ = v diag(1/s^2) (h v)^H
        hv = h @ v
        return (v * inv_sq[..., None, :]) @ hermitian(hv)
    # wide: jacobi ran on h^H, so v holds left singular vectors of h
    hhv = hermitian(h) @ v
    return hhv @ (inv_sq[..., :, None] * hermitian(v))
