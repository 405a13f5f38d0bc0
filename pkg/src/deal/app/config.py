"""Flat ``key = value`` experiment configs and grid expansion.

Values are JSON scalars or lists (``0.05``, ``true``, ``[1, 5, 10]``,
``[[0,1,2,3], [2,1,3,0]]``); anything that is not valid JSON is read as a bare
string, and ``[a, b]`` with bare words becomes a list of strings. ``#`` starts
a comment. Keys naming a TrainConfig field may hold a list, which turns that
field into a grid axis.
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, RankTooLarge
from ..lora import check_rank
from ..tasks import SequenceSpec
from ..training import TrainConfig

log = logging.getLogger(__name__)

TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
SEQUENCE_KEYS = {f.name for f in dataclasses.fields(SequenceSpec)} - {"seed", "order"}
RUN_KEYS = {"name", "methods", "seeds", "orders", "out_dir", "backbone_scale", "deal_mode",
            "emit_rouge", "workers", "checkpoints"}
GRID_AXES = ("a", "b", "rank", "update_strategy", "lambda1", "lambda2", "learning_rate")


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [parse_value(part) for part in inner.split(",")] if inner else []
    return text


def parse_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", key=line)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key", key="")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key=key)
        out[key] = parse_value(value)
    return out


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    methods: list[str] = field(default_factory=lambda: ["deal", "seq_lora", "per_task"])
    seeds: list[int] = field(default_factory=lambda: [0])
    orders: list[list[int]] | None = None
    out_dir: str = "deal_out"
    backbone_scale: float = 0.05
    deal_mode: str = "carry"
    emit_rouge: bool = False
    workers: int = 1
    checkpoints: bool = False
    sequence: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, value in raw.items():
            if key in RUN_KEYS:
                setattr(cfg, key, value)
            elif key in SEQUENCE_KEYS:
                cfg.sequence[key] = value
            elif key in TRAIN_KEYS:
                cfg.train[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}", key=key)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}", key="<file>") from e
        return cls.from_mapping(parse_text(text))

    def _validate(self) -> None:
        from ..bench import METHODS

        if isinstance(self.methods, str):
            self.methods = [self.methods]
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods: unknown {bad or 'empty list'}; choose from {METHODS}", key="methods")
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds: need a non-empty list of non-negative integers", key="seeds")
        if self.deal_mode not in ("carry", "rebase"):
            raise ConfigError("deal_mode: must be carry or rebase", key="deal_mode")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers: must be a positive integer", key="workers")
        try:
            spec = self.sequence_spec(self.seeds[0], None)
        except ValueError as e:
            raise ConfigError(f"sequence: {e}", key="sequence") from e
        if self.orders is not None:
            if not isinstance(self.orders, list) or not self.orders:
                raise ConfigError("orders: need a list of permutations", key="orders")
            if all(isinstance(i, int) for i in self.orders):
                self.orders = [self.orders]
            for order in self.orders:
                if sorted(order) != list(range(spec.task_count)):
                    raise ConfigError(f"orders: {order} is not a permutation of 0..{spec.task_count - 1}", key="orders")
        for key, value in self.train.items():
            if isinstance(value, list) and key not in GRID_AXES:
                raise ConfigError(f"{key}: lists are only allowed for grid axes {GRID_AXES}", key=key)

    def sequence_spec(self, seed: int, order) -> SequenceSpec:
        return SequenceSpec(**self.sequence, seed=seed, order=None if order is None else tuple(order))

    def cells(self) -> list[dict]:
        """Valid TrainConfig overrides, one per grid cell, in deterministic order.

        Cells with ``a < b`` or a rank above ``min(m, n) / 2`` are skipped and
        logged; an empty result is a configuration error.
        """
        axes = [(k, v if isinstance(v, list) else [v]) for k, v in self.train.items()]
        keys = [k for k, _ in axes]
        spec = self.sequence_spec(self.seeds[0], None)
        out, skipped = [], []
        for combo in itertools.product(*(v for _, v in axes)):
            cell = dict(zip(keys, combo))
            probe = dict(cell)
            a, b = probe.get("a", TrainConfig.a), probe.get("b", TrainConfig.b)
            if a < b:
                skipped.append((cell, f"a={a} < b={b}"))
                continue
            try:
                check_rank(spec.output_dim, spec.input_dim, probe.get("rank", TrainConfig.rank))
            except RankTooLarge as e:
                skipped.append((cell, str(e)))
                continue
            try:
                TrainConfig(**probe)
            except ConfigError as e:
                raise ConfigError(f"grid cell {cell}: {e}", key=e.key) from e
            out.append(cell)
        for cell, why in skipped:
            log.warning("skipping grid cell %s: %s", cell, why)
        if not out:
            reasons = "; ".join(sorted({why for _, why in skipped}))
            key = "a" if any("a=" in why for _, why in skipped) else "rank"
            raise ConfigError(f"every grid cell is invalid ({reasons})", key=key)
        return out


def config_hash(record_config: dict) -> str:
    """Content hash of a cell's full configuration (canonical JSON, sha256)."""
    blob = json.dumps(record_config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
