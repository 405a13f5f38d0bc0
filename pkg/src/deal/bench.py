"""Continual-learning protocol runner and metrics (accuracy matrix, AA, ROUGE-1)."""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .errors import IncompleteMatrix
from .lora import FrozenBackbone, LoraAdapter, forward
from .numerics import Rng
from .training import (
    DealModel,
    TrainConfig,
    initial_adapter,
    train_deal,
    train_seq_lora,
)

METHODS = ("deal", "seq_lora", "per_task")
BACKBONE_STREAM = 7000

# Desk-scale training recipe shared by every method in the comparison runs.
DESK_TRAIN = dict(optimizer="sgd", learning_rate=0.05, epochs=20, batch_size=16, rank=4)


def make_backbone(m: int, n: int, seed: int, scale: float = 0.05) -> FrozenBackbone:
    """Random frozen ``W`` with entries ``N(0, scale^2 / n)``."""
    return FrozenBackbone(Rng(seed, (BACKBONE_STREAM,)).normal((m, n), 0.0, scale / np.sqrt(n)))


def accuracy(backbone: FrozenBackbone, adapter: LoraAdapter, q: np.ndarray, g: np.ndarray) -> float:
    """Percent of columns whose argmax output (lowest index on ties) matches the one-hot target."""
    pred = np.argmax(forward(backbone, adapter, q), axis=0)
    return 100.0 * float(np.mean(pred == np.argmax(g, axis=0)))


def average_accuracy(matrix: Sequence[Sequence[float | None]], T: int | None = None) -> float:
    """Mean of column ``T`` (1-based, default last) over tasks ``1..T``."""
    T = len(matrix) if T is None else T
    if T < 1 or T > len(matrix):
        raise IncompleteMatrix(f"no column {T} in a {len(matrix)}-task matrix")
    col = [matrix[i][T - 1] if T - 1 < len(matrix[i]) else None for i in range(T)]
    if any(v is None for v in col):
        raise IncompleteMatrix(f"column {T} is not fully populated")
    return float(sum(col) / T)


def rouge1(pred: Sequence[str], ref: Sequence[str]) -> float:
    """Unigram F1 with clipped (multiset) overlap."""
    if not pred or not ref:
        return 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    p = overlap / len(pred)
    r = overlap / len(ref)
    return 2 * p * r / (p + r)


def label_tokens(label: int, vocabulary: Sequence[str] | None = None) -> list[str]:
    """Token list emitted for a class in token-emission mode."""
    if vocabulary is not None:
        return str(vocabulary[label]).split()
    return ["class", str(label)]


def rouge1_mean(backbone, adapter, q, g) -> float:
    pred = np.argmax(forward(backbone, adapter, q), axis=0)
    gold = np.argmax(g, axis=0)
    return 100.0 * float(np.mean([rouge1(label_tokens(p), label_tokens(t)) for p, t in zip(pred, gold)]))


@dataclass
class RunReport:
    method: str
    accuracy_matrix: list[list[float | None]]
    AA: float
    seed: int
    rouge1: float | None = None
    loss_curves: list[list[float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    adapter: LoraAdapter | None = field(default=None, repr=False, compare=False)

    def to_record(self, include_curves: bool = False) -> dict:
        rec = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "adapter"}
        rec["accuracy_matrix"] = [list(row) for row in self.accuracy_matrix]
        if not include_curves:
            rec["loss_curves"] = [
                {"steps": len(c), "first": c[0] if c else None, "last": c[-1] if c else None} for c in self.loss_curves
            ]
        return rec


class _Holder:
    """Keeps exactly one task's training split reachable by the runner."""

    def __init__(self, hook: Callable[[str, int], None] | None):
        self.current = None
        self.hook = hook

    def load(self, task, index: int):
        self.current = task
        if self.hook:
            self.hook("load", index)
        return task

    def release(self, index: int):
        self.current = None
        if self.hook:
            self.hook("release", index)


def run_continual(method: str, sequence, cfg: TrainConfig, *, backbone: FrozenBackbone | None = None,
                  backbone_scale: float = 0.05, emit_rouge: bool = False, deal_mode: str = "carry",
                  hook: Callable[[str, int], None] | None = None) -> RunReport:
    """Train on ``sequence`` in order; after task t evaluate every task i <= t on its test split.

    ``deal`` fits a plain LoRA adapter on the first task (the pre-trained
    adapter DEAL starts from), then trains retention/updater parameters over
    that frozen adapter on every later task. ``per_task`` trains an isolated
    adapter per task and scores each task on its own adapter.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if not sequence:
        raise ValueError("empty task sequence")
    if deal_mode not in ("carry", "rebase"):
        raise ValueError(f"unknown deal_mode {deal_mode!r}")
    t0 = time.perf_counter()
    tasks = list(sequence)
    T = len(tasks)
    m, n = tasks[0].G_train.shape[0], tasks[0].Q_train.shape[0]
    backbone = backbone if backbone is not None else make_backbone(m, n, cfg.seed, backbone_scale)
    matrix: list[list[float | None]] = [[None] * T for _ in range(T)]
    curves: list[list[float]] = []
    holder = _Holder(hook)
    adapters: list[LoraAdapter] = []
    adapter = initial_adapter(backbone, cfg)
    model: DealModel | None = None

    for t, task in enumerate(tasks):
        ds = holder.load(task, t)
        if method == "seq_lora" or (method == "deal" and t == 0):
            adapter, hist = train_seq_lora(backbone, adapter, ds, cfg, stream=t)
        elif method == "per_task":
            # keyed by the task itself, so each adapter is independent of the order
            stream = getattr(task, "index", t)
            adapter, hist = train_seq_lora(backbone, initial_adapter(backbone, cfg), ds, cfg, stream=stream)
        else:
            if model is None or deal_mode == "rebase":
                model = DealModel.init(backbone, adapter, cfg)
            model, hist = train_deal(model, ds, cfg, stream=t)
            adapter = model.materialize()
        holder.release(t)
        curves.append(list(hist.losses))
        adapters.append(adapter)
        for i in range(t + 1):
            ad_i = adapters[i] if method == "per_task" else adapter
            matrix[i][t] = accuracy(backbone, ad_i, tasks[i].Q_test, tasks[i].G_test)

    rouge = None
    if emit_rouge:
        final = [adapters[i] if method == "per_task" else adapter for i in range(T)]
        rouge = float(np.mean([rouge1_mean(backbone, final[i], tasks[i].Q_test, tasks[i].G_test) for i in range(T)]))
    return RunReport(
        method=method,
        accuracy_matrix=matrix,
        AA=average_accuracy(matrix, T),
        seed=cfg.seed,
        rouge1=rouge,
        loss_curves=curves,
        config=asdict(cfg),
        wall_time=time.perf_counter() - t0,
        adapter=adapter,
    )
