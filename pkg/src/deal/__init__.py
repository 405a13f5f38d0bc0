"""Continual LoRA fine-tuning with a wavelet-kernel retention network and a
regularized updater, plus the synthetic benchmark used to study forgetting."""
from .bench import RunReport, average_accuracy, rouge1, run_continual
from .lora import FrozenBackbone, LoraAdapter, forward, init_adapter, materialize, merge
from .numerics import BACKEND, Rng, svd
from .retention import WaveletBank, heat_kernel, inverse_kernel, retention_forward, wavelet_layer
from .svd_analysis import projector_estimate, shrink, theorem1_demo, truncated_approx
from .tasks import SequenceSpec, TaskDataset, make_sequence
from .training import DealModel, TrainConfig, deal_loss, train_deal, train_per_task, train_seq_lora
from .updater import UpdaterNet, updater_forward

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DealModel",
    "FrozenBackbone",
    "LoraAdapter",
    "Rng",
    "RunReport",
    "SequenceSpec",
    "TaskDataset",
    "TrainConfig",
    "UpdaterNet",
    "WaveletBank",
    "average_accuracy",
    "deal_loss",
    "forward",
    "heat_kernel",
    "init_adapter",
    "inverse_kernel",
    "make_sequence",
    "materialize",
    "merge",
    "projector_estimate",
    "retention_forward",
    "rouge1",
    "run_continual",
    "shrink",
    "svd",
    "theorem1_demo",
    "train_deal",
    "train_per_task",
    "train_seq_lora",
    "truncated_approx",
    "updater_forward",
    "wavelet_layer",
]
