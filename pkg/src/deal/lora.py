"""LoRA adapters over a single frozen linear backbone."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankTooLarge, ShapeMismatch
from .numerics import Rng, as_matrix


@dataclass(frozen=True)
class FrozenBackbone:
    """Pre-trained weight ``W`` (m x n). The stored array is read-only."""

    W: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.W, "W")
        w.flags.writeable = False
        object.__setattr__(self, "W", w)

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class LoraAdapter:
    """``dW = A @ B.T`` with ``A`` m x r and ``B`` n x r."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.B = as_matrix(self.B, "B")
        if self.A.shape[1] != self.B.shape[1]:
            raise ShapeMismatch(f"rank mismatch: A {self.A.shape}, B {self.B.shape}")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape[0], self.B.shape[0]

    def copy(self) -> "LoraAdapter":
        return LoraAdapter(self.A.copy(), self.B.copy())


def check_rank(m: int, n: int, r: int) -> None:
    if r < 1 or 2 * r > min(m, n):
        raise RankTooLarge(f"rank {r} must satisfy 1 <= r <= min({m}, {n})/2")


def merge(adapter: LoraAdapter) -> np.ndarray:
    return adapter.A @ adapter.B.T


def forward(backbone: FrozenBackbone, adapter: LoraAdapter, x: np.ndarray) -> np.ndarray:
    """``(W + A B^T) x`` evaluated along the factored path ``W x + A (B^T x)``."""
    m, n = adapter.shape
    if backbone.W.shape != (m, n):
        raise ShapeMismatch(f"adapter {m}x{n} does not fit backbone {backbone.W.shape}")
    if x.ndim != 2 or x.shape[0] != n:
        raise ShapeMismatch(f"input must be {n} x batch, got {x.shape}")
    return backbone.W @ x + adapter.A @ (adapter.B.T @ x)


def init_adapter(m: int, n: int, r: int, rng: Rng) -> LoraAdapter:
    """Gaussian ``A`` with variance 1/r, zero ``B``: the initial update is exactly zero."""
    check_rank(m, n, r)
    a = rng.normal((m, r), 0.0, 1.0 / np.sqrt(r))
    return LoraAdapter(a, np.zeros((n, r)))


def materialize(a_new: np.ndarray, b_new: np.ndarray) -> LoraAdapter:
    """Freeze pipeline outputs into a plain adapter (no retention/updater at inference)."""
    a_new = as_matrix(a_new, "A'")
    b_new = as_matrix(b_new, "B'")
    if a_new.shape[1] != b_new.shape[1]:
        raise ShapeMismatch(f"A' {a_new.shape} and B' {b_new.shape} disagree on rank")
    return LoraAdapter(a_new, b_new)
