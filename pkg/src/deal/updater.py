"""Controlled-update network: ``O = act(omega @ H + b)`` per layer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import grad as ad
from .errors import ShapeMismatch


@dataclass
class UpdaterNet:
    """``omegas[k]`` is n x n (left-multiplies), ``biases[k]`` n x 1 (broadcast over columns)."""

    omegas: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "identity"

    def __post_init__(self):
        if len(self.omegas) < 1 or len(self.omegas) != len(self.biases):
            raise ValueError("UpdaterNet needs depth >= 1 with one bias per layer")
        for w, b in zip(self.omegas, self.biases):
            if w.ndim != 2 or w.shape[0] != w.shape[1] or b.shape != (w.shape[0], 1):
                raise ShapeMismatch(f"omega must be square with an n x 1 bias, got {w.shape}, {b.shape}")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, n: int, depth: int = 1, activation: str = "identity") -> "UpdaterNet":
        """Identity start (omega = I, b = 0): the untrained net passes its input through."""
        if depth < 1:
            raise ValueError("depth must be >= 1")
        return cls([np.eye(n) for _ in range(depth)], [np.zeros((n, 1)) for _ in range(depth)], activation)

    @property
    def depth(self) -> int:
        return len(self.omegas)

    def named_params(self, prefix: str) -> Iterator[tuple[str, np.ndarray]]:
        for k in range(self.depth):
            yield f"{prefix}.l{k}.omega", self.omegas[k]
            yield f"{prefix}.l{k}.bias", self.biases[k]

    def with_params(self, values: Mapping[str, np.ndarray], prefix: str) -> "UpdaterNet":
        return UpdaterNet(
            [np.array(values.get(f"{prefix}.l{k}.omega", w), dtype=np.float64) for k, w in enumerate(self.omegas)],
            [np.array(values.get(f"{prefix}.l{k}.bias", b), dtype=np.float64) for k, b in enumerate(self.biases)],
            self.activation,
        )


def updater_graph(h, net: UpdaterNet, nodes: Mapping[str, ad.Node], prefix: str) -> ad.Node:
    o = ad.const(h)
    act = ad.ACTIVATIONS[net.activation]
    for k in range(net.depth):
        w = nodes[f"{prefix}.l{k}.omega"]
        if w.shape[1] != o.shape[0]:
            raise ShapeMismatch(f"omega {w.shape} cannot act on input with {o.shape[0]} rows")
        o = act(ad.add(ad.matmul(w, o), nodes[f"{prefix}.l{k}.bias"]))
    return o


def updater_forward(h: np.ndarray, net: UpdaterNet) -> np.ndarray:
    o = np.asarray(h, dtype=np.float64)
    act = np.tanh if net.activation == "tanh" else (lambda z: z)
    for w, b in zip(net.omegas, net.biases):
        if w.shape[1] != o.shape[0]:
            raise ShapeMismatch(f"omega {w.shape} cannot act on input with {o.shape[0]} rows")
        o = act(w @ o + b)
    return o
