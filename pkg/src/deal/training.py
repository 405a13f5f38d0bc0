"""DEAL loss, the training loop over retention/updater parameters, and the
SeqLoRA / PerTaskFT baselines.

Only the retention (theta1) and updater (theta2) parameters learn under DEAL;
the backbone ``W`` and the base adapter ``(A, B)`` stay frozen and are fed
through the pipeline on every batch.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import grad as ad
from .errors import ConfigError, NonFiniteLoss, ShapeMismatch
from .grad import ParamSet
from .lora import FrozenBackbone, LoraAdapter, materialize
from .numerics import Rng
from .retention import WaveletBank, retention_forward, retention_graph
from .updater import UpdaterNet, updater_forward, updater_graph

log = logging.getLogger(__name__)

STRATEGIES = ("both", "A-only", "B-only")
OPTIMIZERS = ("sgd", "adam")
INIT_STREAM = 7001
SHUFFLE_STREAM = 7002


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.01
    lambda2: float = 0.001
    a: float = 10.0
    b: float = 2.0
    learning_rate: float = 1e-3
    epochs: int = 1
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "sgd"
    update_strategy: str = "both"
    rank: int = 4
    retention_layers: int = 1
    kernels: int | None = None
    updater_depth: int = 1
    iterate_pipeline: bool = False
    anchored: bool = False

    def __post_init__(self):
        checks = [
            ("lambda1", self.lambda1 >= 0, "must be >= 0"),
            ("lambda2", self.lambda2 >= 0, "must be >= 0"),
            ("a", self.a >= 1, "must be >= 1"),
            ("b", self.b >= 1, "must be >= 1"),
            ("a", self.a >= self.b, f"regularization orders need a >= b (got a={self.a}, b={self.b})"),
            ("learning_rate", self.learning_rate > 0, "must be > 0"),
            ("epochs", self.epochs >= 0, "must be >= 0"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
            ("optimizer", self.optimizer in OPTIMIZERS, f"must be one of {OPTIMIZERS}"),
            ("update_strategy", self.update_strategy in STRATEGIES, f"must be one of {STRATEGIES}"),
            ("rank", self.rank >= 1, "must be >= 1"),
            ("retention_layers", self.retention_layers >= 1, "must be >= 1"),
            ("kernels", self.kernels is None or self.kernels >= 1, "must be >= 1"),
            ("updater_depth", self.updater_depth >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# ---- model ----------------------------------------------------------------

@dataclass
class DealModel:
    backbone: FrozenBackbone
    base: LoraAdapter
    retention_A: WaveletBank
    retention_B: WaveletBank
    updater_A: UpdaterNet
    updater_B: UpdaterNet
    update_strategy: str = "both"

    @classmethod
    def init(cls, backbone: FrozenBackbone, base: LoraAdapter, cfg: TrainConfig) -> "DealModel":
        m, n = base.shape
        r = base.rank
        return cls(
            backbone=backbone,
            base=base.copy(),
            retention_A=WaveletBank.init(m, r, cfg.retention_layers, cfg.kernels),
            retention_B=WaveletBank.init(n, r, cfg.retention_layers, cfg.kernels),
            updater_A=UpdaterNet.init(m, cfg.updater_depth),
            updater_B=UpdaterNet.init(n, cfg.updater_depth),
            update_strategy=cfg.update_strategy,
        )

    @property
    def updates_A(self) -> bool:
        return self.update_strategy in ("both", "A-only")

    @property
    def updates_B(self) -> bool:
        return self.update_strategy in ("both", "B-only")

    def theta(self) -> ParamSet:
        """Trainable parameters of the active paths."""
        ps = ParamSet()
        if self.updates_A:
            for name, v in self.retention_A.named_params("A.ret"):
                ps.add(name, v, "theta1")
            for name, v in self.updater_A.named_params("A.upd"):
                ps.add(name, v, "theta2")
        if self.updates_B:
            for name, v in self.retention_B.named_params("B.ret"):
                ps.add(name, v, "theta1")
            for name, v in self.updater_B.named_params("B.upd"):
                ps.add(name, v, "theta2")
        return ps

    def reference(self) -> dict[str, np.ndarray]:
        """Near-identity initial values of the active parameters (the anchored regularizer's origin)."""
        m, n = self.base.shape
        r = self.base.rank
        fresh = dataclasses.replace(
            self,
            retention_A=WaveletBank.init(m, r, self.retention_A.layers, self.retention_A.kernels),
            retention_B=WaveletBank.init(n, r, self.retention_B.layers, self.retention_B.kernels),
            updater_A=UpdaterNet.init(m, self.updater_A.depth),
            updater_B=UpdaterNet.init(n, self.updater_B.depth),
        )
        return dict(fresh.theta().items())

    def with_theta(self, values: Mapping[str, np.ndarray]) -> "DealModel":
        return dataclasses.replace(
            self,
            retention_A=self.retention_A.with_params(values, "A.ret"),
            retention_B=self.retention_B.with_params(values, "B.ret"),
            updater_A=self.updater_A.with_params(values, "A.upd"),
            updater_B=self.updater_B.with_params(values, "B.upd"),
        )

    def factor_nodes(self, nodes: Mapping[str, ad.Node]) -> tuple[ad.Node, ad.Node]:
        """``(A', B')``; an inactive path passes its base factor through unchanged."""
        if self.updates_A:
            a = updater_graph(retention_graph(self.base.A, self.retention_A, nodes, "A.ret"), self.updater_A, nodes, "A.upd")
        else:
            a = ad.const(self.base.A)
        if self.updates_B:
            b = updater_graph(retention_graph(self.base.B, self.retention_B, nodes, "B.ret"), self.updater_B, nodes, "B.upd")
        else:
            b = ad.const(self.base.B)
        return a, b

    def factors(self) -> tuple[np.ndarray, np.ndarray]:
        nodes = {k: ad.const(v) for k, v in self.theta().items()}
        a, b = self.factor_nodes(nodes)
        return a.value, b.value

    def delta_w(self) -> np.ndarray:
        a, b = self.factors()
        return a @ b.T

    def materialize(self) -> LoraAdapter:
        return materialize(*self.factors())

    def pipeline_forward(self, x: np.ndarray) -> np.ndarray:
        """Training-time forward ``W x + A' (B'^T x)``, recomputing the pipeline."""
        nodes = {k: ad.const(v) for k, v in self.theta().items()}
        return _predict(self.backbone, *self.factor_nodes(nodes), x).value


def _predict(backbone: FrozenBackbone, a: ad.Node, b: ad.Node, q) -> ad.Node:
    q = ad.const(q)
    # Same expression order as lora.forward, so materialized inference is bit-identical.
    return ad.add(ad.matmul(backbone.W, q), ad.matmul(a, ad.matmul(ad.transpose(b), q)))


def _check_batch(backbone: FrozenBackbone, q: np.ndarray, g: np.ndarray) -> None:
    m, n = backbone.W.shape
    if q.ndim != 2 or q.shape[0] != n:
        raise ShapeMismatch(f"queries must be {n} x batch, got {q.shape}")
    if g.shape != (m, q.shape[1]):
        raise ShapeMismatch(f"targets must be {m} x {q.shape[1]}, got {g.shape}")


def deal_loss_graph(model: DealModel, nodes: Mapping[str, ad.Node], q, g, cfg: TrainConfig,
                    tags: Mapping[str, str] | None = None) -> ad.Node:
    a, b = model.factor_nodes(nodes)
    loss = ad.mse(_predict(model.backbone, a, b, q), g)
    tags = tags if tags is not None else {k: model.theta().tag(k) for k in nodes}
    ref = model.reference() if cfg.anchored else {}
    for name, node in nodes.items():
        if name in ref:
            node = ad.sub(node, ad.const(ref[name]))
        if tags[name] == "theta1" and cfg.lambda1:
            loss = ad.add(loss, ad.scale(ad.pnorm_pow(node, cfg.a), cfg.lambda1))
        elif tags[name] == "theta2" and cfg.lambda2:
            loss = ad.add(loss, ad.scale(ad.pnorm_pow(node, cfg.b), cfg.lambda2))
    return loss


def deal_loss(model: DealModel, q: np.ndarray, g: np.ndarray, cfg: TrainConfig) -> float:
    """``MSE(W Q + A' B'^T Q, G) + lambda1 |theta1|_a^a + lambda2 |theta2|_b^b``."""
    _check_batch(model.backbone, q, g)
    theta = model.theta()
    tags = {k: theta.tag(k) for k in theta}
    nodes = {k: ad.const(v) for k, v in theta.items()}
    return float(deal_loss_graph(model, nodes, q, g, cfg, tags).value[0, 0])


def deal_loss_arrays(model: DealModel, values: Mapping[str, np.ndarray], q: np.ndarray, g: np.ndarray,
                     cfg: TrainConfig) -> float:
    """``deal_loss`` evaluated with plain numpy forwards at parameter ``values`` (no graph)."""
    m = model.with_theta(values)
    a = updater_forward(retention_forward(m.base.A, m.retention_A), m.updater_A) if m.updates_A else m.base.A
    b = updater_forward(retention_forward(m.base.B, m.retention_B), m.updater_B) if m.updates_B else m.base.B
    pred = m.backbone.W @ q + a @ (b.T @ q)
    return float(np.mean((pred - g) ** 2)) + regularizer_value(m, cfg)


def regularizer_value(model: DealModel, cfg: TrainConfig) -> float:
    from .numerics import p_norm_pow

    theta = model.theta()
    ref = model.reference() if cfg.anchored else {}
    total = 0.0
    for name in theta:
        v = theta[name] - ref[name] if name in ref else theta[name]
        if theta.tag(name) == "theta1":
            total += cfg.lambda1 * p_norm_pow(v, cfg.a)
        else:
            total += cfg.lambda2 * p_norm_pow(v, cfg.b)
    return total


# ---- optimizers -----------------------------------------------------------

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {k: params[k] - self.lr * grads[k] for k in params}


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        out = {}
        for k in params:
            g = grads[k]
            m = self.beta1 * self.m.get(k, np.zeros_like(g)) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(k, np.zeros_like(g)) + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            out[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


def step(params, grads, cfg: TrainConfig, state=None):
    """One optimizer update. Pass the returned-from ``make_optimizer`` state to keep Adam moments."""
    opt = state if state is not None else make_optimizer(cfg)
    return opt.step(params, grads)


# ---- loops ----------------------------------------------------------------

@dataclass
class History:
    losses: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.losses)


def batches(n_samples: int, cfg: TrainConfig, epoch: int, stream: int):
    """Seeded shuffle per epoch, then sequential slices."""
    order = Rng(cfg.seed, (SHUFFLE_STREAM, stream, epoch)).permutation(n_samples)
    for start in range(0, n_samples, cfg.batch_size):
        yield order[start:start + cfg.batch_size]


def _guard(loss: float, step_no: int, where: str, grads) -> None:
    if not math.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise NonFiniteLoss(
            f"{where}: non-finite loss/gradient at step {step_no} (loss={loss})",
            step=step_no,
            diagnostics={"loss": loss, "nonfinite_grads": bad},
        )


def train_deal(model: DealModel, dataset, cfg: TrainConfig, stream: int = 0) -> tuple[DealModel, History]:
    """Per batch rebuild A', B' from the frozen base, score, update theta."""
    q_all, g_all = dataset.Q_train, dataset.G_train
    if q_all.shape[1] == 0:
        raise ValueError("empty dataset")
    _check_batch(model.backbone, q_all, g_all)
    history = History()
    opt = make_optimizer(cfg)
    theta = model.theta()
    tags = {k: theta.tag(k) for k in theta}
    step_no = 0
    for epoch in range(cfg.epochs):
        for idx in batches(q_all.shape[1], cfg, epoch, stream):
            q, g = q_all[:, idx], g_all[:, idx]

            def loss_fn(nodes, model=model, q=q, g=g):
                return deal_loss_graph(model, nodes, q, g, cfg, tags)

            grads, loss = ad.grad_of(loss_fn, theta, return_loss=True)
            _guard(loss, step_no, "train_deal", grads)
            theta = theta.replace(opt.step(theta, grads))
            model = model.with_theta(theta)
            if cfg.iterate_pipeline:
                model = dataclasses.replace(model, base=model.materialize())
            history.losses.append(loss)
            step_no += 1
    return model, history


def _seq_loss(backbone: FrozenBackbone, q, g):
    def loss_fn(nodes):
        return ad.mse(_predict(backbone, nodes["A"], nodes["B"], q), g)

    return loss_fn


def train_seq_lora(backbone: FrozenBackbone, adapter: LoraAdapter, dataset, cfg: TrainConfig,
                   stream: int = 0) -> tuple[LoraAdapter, History]:
    """Plain MSE fine-tuning of A and B; no retention, updater or regularizers."""
    q_all, g_all = dataset.Q_train, dataset.G_train
    if q_all.shape[1] == 0:
        raise ValueError("empty dataset")
    _check_batch(backbone, q_all, g_all)
    params = ParamSet()
    params.add("A", adapter.A, "adapter")
    params.add("B", adapter.B, "adapter")
    opt = make_optimizer(cfg)
    history = History()
    step_no = 0
    for epoch in range(cfg.epochs):
        for idx in batches(q_all.shape[1], cfg, epoch, stream):
            grads, loss = ad.grad_of(_seq_loss(backbone, q_all[:, idx], g_all[:, idx]), params, return_loss=True)
            _guard(loss, step_no, "train_seq_lora", grads)
            params = params.replace(opt.step(params, grads))
            history.losses.append(loss)
            step_no += 1
    return LoraAdapter(params["A"], params["B"]), history


def initial_adapter(backbone: FrozenBackbone, cfg: TrainConfig) -> LoraAdapter:
    from .lora import init_adapter

    m, n = backbone.W.shape
    return init_adapter(m, n, cfg.rank, Rng(cfg.seed, (INIT_STREAM,)))


def train_per_task(backbone: FrozenBackbone, datasets, cfg: TrainConfig) -> list[LoraAdapter]:
    """One independent adapter per task, each from the same seeded initialization."""
    out = []
    for t, ds in enumerate(datasets):
        stream = getattr(ds, "index", t)
        adapter, _ = train_seq_lora(backbone, initial_adapter(backbone, cfg), ds, cfg, stream=stream)
        out.append(adapter)
    return out
