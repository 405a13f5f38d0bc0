"""Wavelet-kernel retention network.

Each layer filters the columns of ``H`` (n x r) through J heat kernels.
Kernel ``j`` reads column ``j mod r`` and forms the pointwise product
``phi_j(h) * g_j * phi_j^-(h) * h``, where ``phi_j^-`` is the heat kernel with
the sign of its exponent flipped. The J filtered columns are mixed back to r
columns by ``M`` (r x J), shifted by a scalar bias and squashed by the
activation. Kernel exponents are clipped to [-40, 40].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import grad as ad
from .errors import ShapeMismatch

EXP_CLAMP = 40.0
SIGMA0_SQ = 0.25


def width_ladder(j: int, sigma0_sq: float = SIGMA0_SQ) -> np.ndarray:
    """Dyadic widths ``sigma0^2 * 2**k`` for ``k = 0..j-1``, as a 1 x j row."""
    return (sigma0_sq * 2.0 ** np.arange(j, dtype=np.float64)).reshape(1, j)


def _exponent(x: np.ndarray, c, sigma_sq) -> np.ndarray:
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if np.any(sigma_sq <= 0):
        raise ValueError("kernel widths must be positive")
    d = np.asarray(x, dtype=np.float64) - c
    return np.clip(d * d * (1.0 / (2.0 * sigma_sq)), -EXP_CLAMP, EXP_CLAMP)


def heat_kernel(x: np.ndarray, c: float, sigma_sq: float) -> np.ndarray:
    """Elementwise ``exp(-(x - c)^2 / (2 sigma^2))``; values in (0, 1]."""
    return np.exp(-_exponent(x, c, sigma_sq))


def inverse_kernel(x: np.ndarray, c: float, sigma_sq: float) -> np.ndarray:
    """Elementwise ``exp(+(x - c)^2 / (2 sigma^2))``: the sign-flipped heat kernel."""
    return np.exp(_exponent(x, c, sigma_sq))


@dataclass
class WaveletBank:
    """Per-layer learnables for K wavelet layers over n x r inputs.

    ``centers[k]`` is 1 x J, ``gains[k]`` n x J (column j is the diagonal of
    g_j), ``mixing[k]`` r x J, ``bias[k]`` 1 x 1. ``sigma_sq`` (1 x J) is fixed.
    """

    centers: list[np.ndarray]
    gains: list[np.ndarray]
    mixing: list[np.ndarray]
    bias: list[np.ndarray]
    sigma_sq: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        k = len(self.centers)
        if k < 1 or not (len(self.gains) == len(self.mixing) == len(self.bias) == k):
            raise ValueError("WaveletBank needs K >= 1 layers with matching parameter lists")
        if self.sigma_sq.ndim != 2 or self.sigma_sq.shape[0] != 1 or np.any(self.sigma_sq <= 0):
            raise ValueError("sigma_sq must be a 1 x J row of positive widths")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, n: int, r: int, layers: int = 1, kernels: int | None = None,
             activation: str = "tanh", sigma0_sq: float = SIGMA0_SQ) -> "WaveletBank":
        """Near-identity start: c = 0, g = 1, M = I, bias = 0."""
        j = r if kernels is None else kernels
        if j < 1 or layers < 1:
            raise ValueError("need J >= 1 kernels and K >= 1 layers")
        return cls(
            centers=[np.zeros((1, j)) for _ in range(layers)],
            gains=[np.ones((n, j)) for _ in range(layers)],
            mixing=[np.eye(r, j) for _ in range(layers)],
            bias=[np.zeros((1, 1)) for _ in range(layers)],
            sigma_sq=width_ladder(j, sigma0_sq),
            activation=activation,
        )

    @property
    def layers(self) -> int:
        return len(self.centers)

    @property
    def kernels(self) -> int:
        return self.sigma_sq.shape[1]

    def named_params(self, prefix: str) -> Iterator[tuple[str, np.ndarray]]:
        for k in range(self.layers):
            yield f"{prefix}.l{k}.centers", self.centers[k]
            yield f"{prefix}.l{k}.gains", self.gains[k]
            yield f"{prefix}.l{k}.mixing", self.mixing[k]
            yield f"{prefix}.l{k}.bias", self.bias[k]

    def with_params(self, values: Mapping[str, np.ndarray], prefix: str) -> "WaveletBank":
        def pick(kind, k, old):
            return np.array(values.get(f"{prefix}.l{k}.{kind}", old), dtype=np.float64)

        return WaveletBank(
            centers=[pick("centers", k, v) for k, v in enumerate(self.centers)],
            gains=[pick("gains", k, v) for k, v in enumerate(self.gains)],
            mixing=[pick("mixing", k, v) for k, v in enumerate(self.mixing)],
            bias=[pick("bias", k, v) for k, v in enumerate(self.bias)],
            sigma_sq=self.sigma_sq.copy(),
            activation=self.activation,
        )

    def nodes(self, prefix: str = "bank") -> dict[str, ad.Node]:
        return {name: ad.const(v) for name, v in self.named_params(prefix)}


def _check_layer(h_shape, c_shape, g_shape, m_shape, b_shape, j: int) -> None:
    n, r = h_shape
    if c_shape != (1, j) or g_shape != (n, j) or m_shape != (r, j) or b_shape != (1, 1):
        raise ShapeMismatch(
            f"layer params do not fit input {n}x{r} with J={j}: centers {c_shape}, "
            f"gains {g_shape}, mixing {m_shape}, bias {b_shape}"
        )


def wavelet_layer(h, centers, gains, mixing, bias, sigma_sq: np.ndarray, activation: str = "tanh") -> ad.Node:
    """One retention layer on graph nodes (plain arrays are treated as constants)."""
    h, centers, gains, mixing, bias = (ad.const(v) for v in (h, centers, gains, mixing, bias))
    _check_layer(h.shape, centers.shape, gains.shape, mixing.shape, bias.shape, sigma_sq.shape[1])
    r = h.shape[1]
    j = sigma_sq.shape[1]
    hs = ad.take_cols(h, np.arange(j) % r)
    d = ad.sub(hs, centers)
    e = ad.clip(ad.mul(ad.mul(d, d), 1.0 / (2.0 * sigma_sq)), -EXP_CLAMP, EXP_CLAMP)
    phi = ad.exp(ad.scale(e, -1.0))
    phi_inv = ad.exp(e)
    filtered = ad.mul(ad.mul(ad.mul(phi, gains), phi_inv), hs)
    z = ad.add(ad.matmul(filtered, ad.transpose(mixing)), bias)
    return ad.ACTIVATIONS[activation](z)


def retention_graph(y, bank: WaveletBank, nodes: Mapping[str, ad.Node], prefix: str) -> ad.Node:
    h = ad.const(y)
    for k in range(bank.layers):
        h = wavelet_layer(
            h,
            nodes[f"{prefix}.l{k}.centers"],
            nodes[f"{prefix}.l{k}.gains"],
            nodes[f"{prefix}.l{k}.mixing"],
            nodes[f"{prefix}.l{k}.bias"],
            bank.sigma_sq,
            bank.activation,
        )
    return h


_NP_ACTIVATIONS = {"tanh": np.tanh, "identity": lambda z: z}


def wavelet_layer_array(h: np.ndarray, centers, gains, mixing, bias, sigma_sq: np.ndarray,
                        activation: str = "tanh") -> np.ndarray:
    """Array twin of :func:`wavelet_layer` (no graph recording)."""
    centers, gains, mixing, bias = (np.asarray(v, dtype=np.float64) for v in (centers, gains, mixing, bias))
    _check_layer(h.shape, centers.shape, gains.shape, mixing.shape, bias.shape, sigma_sq.shape[1])
    r = h.shape[1]
    hs = h[:, np.arange(sigma_sq.shape[1]) % r]
    e = np.clip((hs - centers) ** 2 / (2.0 * sigma_sq), -EXP_CLAMP, EXP_CLAMP)
    filtered = np.exp(-e) * gains * np.exp(e) * hs
    return _NP_ACTIVATIONS[activation](filtered @ mixing.T + bias)


def retention_forward(y: np.ndarray, bank: WaveletBank) -> np.ndarray:
    """Core-feature estimate ``H^K`` from ``H^0 = y``."""
    h = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise ValueError("retention input contains non-finite entries")
    for k in range(bank.layers):
        h = wavelet_layer_array(h, bank.centers[k], bank.gains[k], bank.mixing[k], bank.bias[k],
                                bank.sigma_sq, bank.activation)
    return h
