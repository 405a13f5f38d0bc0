"""Low-rank estimation tools: truncation, projection, shrinkage, and the
perturbed-SVD construction showing that noise rotates the principal subspace.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, RankOutOfRange
from .numerics import Rng, as_matrix, svd

RANK_CUTOFF = 1e-10


def _check_k(k: int, y: np.ndarray, what: str = "k") -> int:
    k = int(k)
    if not 1 <= k <= min(y.shape):
        raise RankOutOfRange(f"{what}={k} outside [1, {min(y.shape)}] for a {y.shape[0]}x{y.shape[1]} matrix")
    return k


def truncated_approx(y, k: int) -> np.ndarray:
    """Best rank-``k`` approximation in Frobenius norm: keep the ``k`` leading singular triplets."""
    y = as_matrix(y)
    k = _check_k(k, y)
    u, s, v = svd(y)
    return (u[:, :k] * s[:k]) @ v[:, :k].T


def projector_estimate(y, x, *, pinv: bool = False) -> np.ndarray:
    """Project the columns of ``x`` onto ``col(y)``, i.e. ``Y (Y^T Y)^-1 Y^T X``.

    Evaluated through the left singular vectors of ``Y``. A column-rank-deficient
    ``Y`` raises RankDeficient unless ``pinv=True``, in which case directions with
    ``sigma / sigma_max <= 1e-10`` are dropped (pseudo-inverse semantics).
    """
    y, x = as_matrix(y), as_matrix(x)
    if x.shape[0] != y.shape[0]:
        from .errors import ShapeMismatch

        raise ShapeMismatch(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    u, s, _ = svd(y)
    smax = s[0] if s.size else 0.0
    keep = s > RANK_CUTOFF * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    if not pinv and (y.shape[1] > y.shape[0] or not keep.all()):
        raise RankDeficient("Y lacks full column rank; pass pinv=True for the pseudo-inverse projector")
    ub = u[:, keep]
    return ub @ (ub.T @ x)


def shrink_coefficients(s: np.ndarray, sigma_d_sq: float) -> np.ndarray:
    """``(s^2 - sigma_D^2) / s`` clamped at zero."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = (s[pos] ** 2 - sigma_d_sq) / s[pos]
    return np.maximum(out, 0.0)


def shrink(y, sigma_d_sq: float, rank_x: int) -> np.ndarray:
    """Singular-value shrinkage estimate of the clean rank-``rank_x`` signal in ``y``."""
    if sigma_d_sq < 0:
        raise ValueError("sigma_d_sq must be >= 0")
    y = as_matrix(y)
    k = _check_k(rank_x, y, "rank_x")
    u, s, v = svd(y)
    return (u[:, :k] * shrink_coefficients(s[:k], sigma_d_sq)) @ v[:, :k].T


@dataclass
class PerturbedDecomposition:
    P1: np.ndarray
    S1: np.ndarray
    Q1: np.ndarray
    P2: np.ndarray
    S2: np.ndarray
    Q2: np.ndarray
    V_x1: np.ndarray
    V_x2: np.ndarray
    U_x1: np.ndarray

    def reassemble(self) -> np.ndarray:
        """``[P1 P2] diag(S1, S2) [Q1^T V_x1^T; Q2^T V_x2^T]``."""
        left = np.hstack([self.P1 * self.S1, self.P2 * self.S2])
        right = np.vstack([self.Q1.T @ self.V_x1.T, self.Q2.T @ self.V_x2.T])
        return left @ right

    def cross_gram(self) -> float:
        """``||P1^T P2||_F``; zero when the two blocks live in orthogonal column spaces."""
        if self.P2.shape[1] == 0:
            return 0.0
        return float(np.linalg.norm(self.P1.T @ self.P2))


def numeric_rank(x: np.ndarray) -> int:
    s = svd(x).S
    return int(np.sum(s > RANK_CUTOFF * s[0])) if s.size and s[0] > 0 else 0


def perturbed_decomposition(x, d, rank_x: int | None = None) -> PerturbedDecomposition:
    """Split ``Y = X + D`` along the principal/complement right bases of ``X`` and SVD each block."""
    x, d = as_matrix(x), as_matrix(d)
    if x.shape != d.shape:
        from .errors import ShapeMismatch

        raise ShapeMismatch(f"X is {x.shape}, D is {d.shape}")
    ux, _, vx = svd(x)
    rk = numeric_rank(x) if rank_x is None else _check_k(rank_x, x, "rank_x")
    # Right singular basis of X, completed to a full basis of R^r.
    v_full = vx if vx.shape[1] == x.shape[1] else _complete(vx, x.shape[1])
    v1, v2 = v_full[:, :rk], v_full[:, rk:]
    p1, s1, q1 = svd(x @ v1 + d @ v1)
    if v2.shape[1]:
        p2, s2, q2 = svd(d @ v2)
        # Null directions of the noise block carry no signal; their left
        # vectors are an arbitrary completion, so drop them.
        live = s2 > RANK_CUTOFF * max(s2[0] if s2.size else 0.0, s1[0] if s1.size else 0.0)
        p2, s2, q2 = p2[:, live], s2[live], q2[:, live]
    else:
        p2, s2, q2 = np.zeros((x.shape[0], 0)), np.zeros(0), np.zeros((0, 0))
    return PerturbedDecomposition(p1, s1, q1, p2, s2, q2, v1, v2, ux[:, :rk])


def _complete(v: np.ndarray, dim: int) -> np.ndarray:
    from .numerics import complete_basis

    return complete_basis(v, dim)


def principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle between ``col(a)`` and ``col(b)`` (orthonormal inputs, equal width).

    Uses ``arcsin ||(I - a a^T) b||_2``, which stays accurate for tiny angles.
    """
    resid = b - a @ (a.T @ b)
    sin = svd(resid).S[0] if resid.size else 0.0
    return float(np.arcsin(min(1.0, sin)))


def theorem1_instance(n_x: int, r: int, rank_x: int, noise_std: float, rng: Rng):
    """Random rank-``rank_x`` ``X`` (n_x x r) and noise ``D`` obeying ``X^T D = 0``.

    ``D`` starts Gaussian, is projected off ``col(X)`` and, when
    ``n_x - rank_x >= r``, whitened to ``D^T D = noise_std^2 (n_x - rank_x) I``
    so the white-noise model holds exactly rather than in expectation.
    """
    if not 1 <= rank_x < min(n_x, r):
        raise ValueError("need 1 <= rank_x < min(n_x, r)")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    x = rng.spawn(0).normal((n_x, rank_x)) @ rng.spawn(1).normal((rank_x, r))
    d = noise_std * rng.spawn(2).normal((n_x, r))
    if noise_std == 0:
        return x, d
    ux = svd(x).U[:, :rank_x]
    d = d - ux @ (ux.T @ d)
    if n_x - rank_x >= r:
        q = svd(d).U[:, :r]
        d = noise_std * np.sqrt(n_x - rank_x) * q
    return x, d


def theorem1_demo(n_x: int, r: int, rank_x: int, noise_std: float, rng: Rng) -> float:
    """Largest principal angle (radians) between ``span(P1)`` and ``span(U_x1)`` for one noisy draw."""
    x, d = theorem1_instance(n_x, r, rank_x, noise_std, rng)
    dec = perturbed_decomposition(x, d, rank_x)
    return principal_angle(dec.U_x1, dec.P1[:, :rank_x])
