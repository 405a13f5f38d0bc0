"""Full-model gradient audit: reverse-mode DEAL gradients against central differences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grad as ad
from .lora import FrozenBackbone, LoraAdapter
from .numerics import Rng
from .training import DealModel, TrainConfig, deal_loss_arrays, deal_loss_graph

SIZES = ((4, 2), (16, 4), (32, 8))
LAYERS = (1, 2)
TOLERANCE = 1e-4
GRADCHECK_STREAM = 9100


@dataclass(frozen=True)
class GradCase:
    seed: int
    n: int
    r: int
    layers: int
    max_rel_error: float
    worst_param: str
    n_params: int


def random_model(n: int, r: int, layers: int, seed: int, batch: int = 6,
                 cfg: TrainConfig | None = None):
    """A DEAL model away from its init point, plus a batch ``(Q, G)`` and the config used."""
    rng = Rng(seed, (GRADCHECK_STREAM, n, r, layers))
    cfg = cfg or TrainConfig(rank=r, retention_layers=layers, seed=seed)
    backbone = FrozenBackbone(rng.spawn(0).normal((n, n), 0.0, 1.0 / np.sqrt(n)))
    base = LoraAdapter(rng.spawn(1).normal((n, r), 0.0, 0.5), rng.spawn(2).normal((n, r), 0.0, 0.5))
    model = DealModel.init(backbone, base, cfg)
    theta = model.theta()
    jitter = rng.spawn(3)
    model = model.with_theta({k: v + 0.1 * jitter.normal(v.shape) for k, v in theta.items()})
    q = rng.spawn(4).normal((n, batch))
    g = rng.spawn(5).normal((n, batch))
    return model, q, g, cfg


def check_case(n: int, r: int, layers: int, seed: int, epsilon: float = 1e-5) -> GradCase:
    model, q, g, cfg = random_model(n, r, layers, seed)
    theta = model.theta()
    tags = {k: theta.tag(k) for k in theta}

    def loss_fn(nodes):
        return deal_loss_graph(model, nodes, q, g, cfg, tags)

    analytic = ad.grad_of(loss_fn, theta)
    # The oracle runs the plain numpy forward, not the recorded graph.
    numeric = ad.finite_diff(lambda v: deal_loss_arrays(model, v, q, g, cfg), theta, epsilon, arrays=True)
    err, name = ad.relative_error(analytic, numeric, scaled=True)
    return GradCase(seed, n, r, layers, err, name, sum(v.size for v in theta.values()))


def run_suite(seeds=range(5), sizes=SIZES, layers=LAYERS) -> list[GradCase]:
    return [check_case(n, r, k, s) for s in seeds for (n, r) in sizes for k in layers]


def worst(cases: list[GradCase]) -> GradCase:
    return max(cases, key=lambda c: c.max_rel_error)
