"""Grid execution: one job per (cell, order, seed), JSON Lines out, summary table."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable

import numpy as np

from ..bench import run_continual
from ..errors import DealError
from ..tasks import make_sequence
from ..training import TrainConfig
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, config_hash

log = logging.getLogger(__name__)

OUT_ENV = "DEAL_OUT_DIR"
RESULTS = "results.jsonl"
SUMMARY = "summary.txt"


class CellFailure(DealError, RuntimeError):
    def __init__(self, cell_id: str, cause: BaseException):
        super().__init__(f"cell {cell_id} failed: {type(cause).__name__}: {cause}")
        self.cell_id = cell_id


def out_dir_for(cfg: ExperimentConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUT_ENV) or cfg.out_dir)


def _jobs(cfg: ExperimentConfig) -> list[dict]:
    orders = cfg.orders or [None]
    jobs = []
    for ci, cell in enumerate(cfg.cells()):
        for oi, order in enumerate(orders):
            for seed in cfg.seeds:
                jobs.append({
                    "cell_id": f"c{ci}-o{oi}-s{seed}",
                    "cell": cell,
                    "order": order,
                    "seed": seed,
                })
    return jobs


def _run_job(cfg: ExperimentConfig, job: dict, out: Path) -> list[dict]:
    seed, order, cell = job["seed"], job["order"], job["cell"]
    try:
        spec = cfg.sequence_spec(seed, order)
        train_cfg = TrainConfig(**cell, seed=seed)
        sequence = make_sequence(spec)
        records = []
        for method in cfg.methods:
            rep = run_continual(method, sequence, train_cfg, backbone_scale=cfg.backbone_scale,
                                emit_rouge=cfg.emit_rouge, deal_mode=cfg.deal_mode)
            full_config = {
                "train": dataclasses.asdict(train_cfg),
                "sequence": dataclasses.asdict(spec),
                "method": method,
                "backbone_scale": cfg.backbone_scale,
                "deal_mode": cfg.deal_mode,
                "emit_rouge": cfg.emit_rouge,
            }
            rec = {
                "run": cfg.name,
                "cell_id": job["cell_id"],
                "method": method,
                "seed": seed,
                "order": list(order) if order is not None else None,
                "cell": cell,
                "AA": rep.AA,
                "accuracy_matrix": rep.accuracy_matrix,
                "rouge1": rep.rouge1,
                "loss_curves": rep.to_record()["loss_curves"],
                "config": full_config,
                "config_hash": config_hash(full_config),
                "wall_time": rep.wall_time,
            }
            if cfg.checkpoints and rep.adapter is not None:
                path = out / "checkpoints" / f"{job['cell_id']}-{method}.ckpt"
                save_checkpoint(path, {"A": rep.adapter.A, "B": rep.adapter.B}, config=full_config, seed=seed)
                rec["checkpoint"] = str(path.relative_to(out))
            records.append(rec)
    except Exception as e:  # noqa: BLE001 - reported with the failing cell's id
        raise CellFailure(job["cell_id"], e) from e
    cell_file = out / "cells" / f"{job['cell_id']}.json"
    cell_file.parent.mkdir(parents=True, exist_ok=True)
    cell_file.write_text(json.dumps(records, sort_keys=True) + "\n", encoding="utf-8")
    return records


def _run_job_star(args):
    return _run_job(*args)


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> list[dict]:
    """Execute every grid job; append records to ``results.jsonl`` in job order and write the summary."""
    out = out_dir_for(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = _jobs(cfg)
    args = [(cfg, job, out) for job in jobs]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(_run_job_star, args))
    else:
        batches = [_run_job(*a) for a in args]
    records = [rec for batch in batches for rec in batch]
    with open(out / RESULTS, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    table = summary_table(records)
    (out / SUMMARY).write_text(table + "\n", encoding="utf-8")
    return records


def read_records(path: str | os.PathLike) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def summary_table(records: Iterable[dict]) -> str:
    """Mean/std/min/max AA per (run, method, cell), one row each."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        key = (rec.get("run", ""), rec["method"], json.dumps(rec.get("cell", {}), sort_keys=True))
        groups.setdefault(key, []).append(float(rec["AA"]))
    header = f"{'run':<14} {'method':<9} {'cell':<40} {'n':>3} {'AA mean':>8} {'std':>6} {'min':>6} {'max':>6}"
    lines = [header, "-" * len(header)]
    for (run, method, cell), vals in sorted(groups.items()):
        v = np.asarray(vals)
        lines.append(f"{run[:14]:<14} {method:<9} {cell[:40]:<40} {v.size:>3} {v.mean():>8.2f} "
                     f"{v.std():>6.2f} {v.min():>6.2f} {v.max():>6.2f}")
    return "\n".join(lines)


def strip_volatile(record: dict) -> dict:
    """Record without fields that legitimately differ between reruns."""
    return {k: v for k, v in record.items() if k not in ("wall_time", "checkpoint")}
