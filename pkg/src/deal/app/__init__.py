"""Operational surface: config files, checkpoints, experiment grids and the CLI."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, parse_text
from .experiment import run_experiment, summary_table

__all__ = ["Checkpoint", "ExperimentConfig", "load_checkpoint", "parse_text", "run_experiment",
           "save_checkpoint", "summary_table"]
