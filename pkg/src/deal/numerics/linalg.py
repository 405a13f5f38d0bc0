"""Dense matrix helpers and the deterministic SVD.

Matrices are plain 2-D ``float64`` numpy arrays. ``as_matrix`` is the single
validation point: it enforces the 2-D shape and finiteness.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import InvalidOrder, NonConvergence, ShapeMismatch
from . import _backend

MAX_SWEEPS = 1000
_EPS = np.finfo(np.float64).eps


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.array(x, dtype=np.float64, copy=True)
    if m.ndim == 1:
        m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
    if m.ndim != 2:
        raise ShapeMismatch(f"{name}: expected a 2-D matrix, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"{name}: empty shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: contains non-finite entries")
    return m


def frobenius(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(m))))


def complete_basis(q: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Extend orthonormal columns ``q`` to ``dim`` orthonormal columns.

    New directions come from Gram-Schmidt (applied twice) over the standard
    basis in index order, so the completion is deterministic.
    """
    rows = q.shape[0]
    dim = rows if dim is None else dim
    cols = [q[:, j] for j in range(q.shape[1])]
    for i in range(rows):
        if len(cols) >= dim:
            break
        v = np.zeros(rows)
        v[i] = 1.0
        for _ in range(2):
            for c in cols:
                v = v - (c @ v) * c
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            cols.append(v / nrm)
    if len(cols) < dim:
        raise ValueError(f"cannot complete a basis of dimension {dim} in R^{rows}")
    return np.column_stack(cols) if cols else np.zeros((rows, 0))


class SvdResult(NamedTuple):
    """Thin SVD ``M = U @ diag(S) @ V.T`` with ``k = min(rows, cols)``."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def _svd_tall(m: np.ndarray, sweeps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = m.shape
    gt = np.ascontiguousarray(m.T)
    vt = np.eye(cols)
    tol = max(rows, 2) * _EPS
    # A column with norm below max(rows, cols) * eps * ||M||_F is round-off of a
    # rank-deficient input; the kernels stop rotating it (squared-norm floor).
    floor = (max(rows, cols) * _EPS) ** 2 * float(np.sum(gt * gt))
    used = sweeps(gt, vt, tol, MAX_SWEEPS, floor)
    if used < 0:
        raise NonConvergence(f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")
    s = np.sqrt(np.einsum("ij,ij->i", gt, gt))
    order = sorted(range(cols), key=lambda i: (-s[i], i))
    s = s[order]
    gt = gt[order]
    v = vt[order].T
    smax = s[0] if cols else 0.0
    null_cut = max(rows, cols) * _EPS * smax
    live = [i for i in range(cols) if s[i] > null_cut and s[i] > 0.0]
    u = np.zeros((rows, cols))
    for i in live:
        u[:, i] = gt[i] / s[i]
    if len(live) < cols:
        dead = [i for i in range(cols) if i not in live]
        filled = complete_basis(u[:, live], len(live) + len(dead))
        for k, i in enumerate(dead):
            u[:, i] = filled[:, len(live) + k]
    return u, s, v


def svd(m, *, backend: str | None = None) -> SvdResult:
    """Thin SVD by one-sided Jacobi rotations.

    Deterministic for identical input bits. Each left singular vector is
    signed so its largest-magnitude entry (first one on ties) is nonnegative.
    """
    m = as_matrix(m, "svd input")
    if backend is None:
        sweeps = _backend.jacobi_sweeps
    elif backend == "python":
        sweeps = _backend.python_jacobi_sweeps
    elif backend == "compiled":
        if _backend.compiled_jacobi_sweeps is None:
            raise RuntimeError("compiled Jacobi kernel is not available")
        sweeps = _backend.compiled_jacobi_sweeps
    else:
        raise ValueError(f"unknown backend {backend!r}")

    # Power-of-two rescale to unit magnitude: exact, and keeps squared norms
    # clear of underflow/overflow inside the sweeps.
    peak = float(np.max(np.abs(m))) if m.size else 0.0
    shift = math.frexp(peak)[1] if peak > 0 and np.isfinite(peak) else 0
    scaled = np.ldexp(m, -shift)
    if m.shape[0] >= m.shape[1]:
        u, s, v = _svd_tall(scaled, sweeps)
    else:
        v, s, u = _svd_tall(scaled.T, sweeps)
    s = np.ldexp(s, shift)
    for i in range(s.shape[0]):
        j = int(np.argmax(np.abs(u[:, i])))
        if u[j, i] < 0:
            u[:, i] = -u[:, i]
            v[:, i] = -v[:, i]
    return SvdResult(u, s, v)


def p_norm_pow(values: Sequence[float] | np.ndarray, p: float) -> float:
    """Sum of ``|v|**p``: the p-th power of the p-norm."""
    if not np.isfinite(p) or p < 1:
        raise InvalidOrder(f"order must be finite and >= 1, got {p}")
    v = np.abs(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        return 0.0
    if p == 1:
        return float(v.sum())
    if p == 2:
        return float(np.sum(v * v))
    return float(np.sum(v**p))
