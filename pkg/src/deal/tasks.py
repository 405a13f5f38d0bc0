"""Synthetic continual classification tasks.

Task ``t`` is labelled by a hidden linear map ``T_t`` (classes x n):
``T_0`` is a fresh Gaussian map and ``T_t = s * T_{t-1} + (1 - s) * F_t`` with
``F_t`` fresh, so ``s`` controls how much consecutive tasks share. Rows of each
map are rescaled to unit norm so every task has the same logit scale. A sample
is labelled ``argmax(T_t x + noise)``; classes are drawn to exact quotas by
rejection so every split is class-balanced.

Inputs are Gaussian with a task-specific covariance ``U_t U_t^T + eps^2 I``:
``U_t`` (n x d, orthonormal) is the task's input domain and drifts with the
same rule as the hidden map, so low similarity also means domain shift.
``domain_dim = None`` (the default) gives isotropic inputs for every task.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPermutation
from .numerics import Rng

MAP_STREAM = 11
DATA_STREAM = 12
DOMAIN_STREAM = 13
TRAIN, TEST = 0, 1

# Three reference orders over a 4-task suite (0-based task indices).
STANDARD_ORDERS = ((0, 1, 2, 3), (0, 1, 3, 2), (2, 1, 3, 0))


@dataclass(frozen=True)
class SequenceSpec:
    task_count: int = 3
    input_dim: int = 32
    output_dim: int = 8
    classes: int = 4
    train_samples: int = 2048
    test_samples: int = 256
    similarity: float = 0.5
    label_noise: float = 0.05
    domain_dim: int | None = None
    background: float = 0.1
    order: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.task_count < 1:
            raise ValueError("task_count must be >= 1")
        if not 0.0 <= self.similarity <= 1.0:
            raise ValueError("similarity must lie in [0, 1]")
        if not 2 <= self.classes <= self.output_dim:
            raise ValueError("need 2 <= classes <= output_dim")
        if self.train_samples < self.classes or self.test_samples < self.classes:
            raise ValueError("each split needs at least one sample per class")
        if self.domain_dim is not None and not 1 <= self.domain_dim <= self.input_dim:
            raise ValueError("need 1 <= domain_dim <= input_dim")
        if self.background < 0:
            raise ValueError("background must be >= 0")
        if self.label_noise < 0:
            raise ValueError("label_noise must be >= 0")
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(i) for i in self.order))


@dataclass
class TaskDataset:
    name: str
    Q_train: np.ndarray
    G_train: np.ndarray
    Q_test: np.ndarray
    G_test: np.ndarray
    class_count: int
    generator_seed: int
    hidden_map: np.ndarray = field(repr=False, default=None)
    domain: np.ndarray = field(repr=False, default=None)
    index: int = 0

    @property
    def labels_train(self) -> np.ndarray:
        return np.argmax(self.G_train, axis=0)

    @property
    def labels_test(self) -> np.ndarray:
        return np.argmax(self.G_test, axis=0)


def _unit_rows(t: np.ndarray) -> np.ndarray:
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def hidden_map(spec: SequenceSpec, task_index: int, rng: Rng) -> np.ndarray:
    shape = (spec.classes, spec.input_dim)
    t = _unit_rows(rng.spawn(MAP_STREAM, 0).normal(shape))
    s = spec.similarity
    if s == 1.0:
        return t
    for i in range(1, task_index + 1):
        fresh = _unit_rows(rng.spawn(MAP_STREAM, i).normal(shape))
        t = _unit_rows(s * t + (1.0 - s) * fresh)
    return t


def _orth(x: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(x)
    return q * np.sign(np.diag(r))


def input_domain(spec: SequenceSpec, task_index: int, rng: Rng) -> np.ndarray:
    """Orthonormal n x d basis of task ``task_index``'s input domain."""
    n = spec.input_dim
    d = n if spec.domain_dim is None else spec.domain_dim
    if d == n:
        return np.eye(n)
    u = _orth(rng.spawn(DOMAIN_STREAM, 0).normal((n, d)))
    s = spec.similarity
    if s == 1.0:
        return u
    for i in range(1, task_index + 1):
        fresh = _orth(rng.spawn(DOMAIN_STREAM, i).normal((n, d)))
        u = _orth(s * u + (1.0 - s) * fresh)
    return u


def _draw_split(t: np.ndarray, u: np.ndarray, n_samples: int, spec: SequenceSpec,
                rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    c, n = t.shape
    quota = np.full(c, n_samples // c)
    quota[: n_samples % c] += 1
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    filled = np.zeros(c, dtype=int)
    while filled.sum() < n_samples:
        batch = 4 * n_samples
        if u.shape[1] == n:
            x = rng.normal((n, batch))
        else:
            x = u @ rng.normal((u.shape[1], batch)) + spec.background * rng.normal((n, batch))
        logits = t @ x + spec.label_noise * rng.normal((c, x.shape[1]))
        lab = np.argmax(logits, axis=0)
        for k in range(c):
            need = quota[k] - filled[k]
            if need <= 0:
                continue
            take = np.flatnonzero(lab == k)[:need]
            xs.append(x[:, take])
            ys.append(np.full(take.size, k))
            filled[k] += take.size
    x = np.concatenate(xs, axis=1)
    y = np.concatenate(ys)
    perm = rng.permutation(n_samples)
    x, y = x[:, perm], y[perm]
    g = np.zeros((spec.output_dim, n_samples))
    g[y, np.arange(n_samples)] = 1.0
    return x, g


def gen_task(spec: SequenceSpec, task_index: int, rng: Rng) -> TaskDataset:
    t = hidden_map(spec, task_index, rng)
    u = input_domain(spec, task_index, rng)
    q_tr, g_tr = _draw_split(t, u, spec.train_samples, spec, rng.spawn(DATA_STREAM, task_index, TRAIN))
    q_te, g_te = _draw_split(t, u, spec.test_samples, spec, rng.spawn(DATA_STREAM, task_index, TEST))
    return TaskDataset(
        name=f"task{task_index}",
        Q_train=q_tr,
        G_train=g_tr,
        Q_test=q_te,
        G_test=g_te,
        class_count=spec.classes,
        generator_seed=spec.seed,
        hidden_map=t,
        domain=u,
        index=task_index,
    )


def check_order(order, task_count: int) -> tuple[int, ...]:
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(task_count)):
        raise InvalidPermutation(f"order {order} is not a permutation of 0..{task_count - 1}")
    return order


def make_sequence(spec: SequenceSpec) -> list[TaskDataset]:
    """Generate every task, then apply ``spec.order`` (0-based indices)."""
    order = tuple(range(spec.task_count)) if spec.order is None else check_order(spec.order, spec.task_count)
    rng = Rng(spec.seed)
    tasks = [gen_task(spec, i, rng) for i in range(spec.task_count)]
    return [tasks[i] for i in order]


def bayes_accuracy(ds: TaskDataset, split: str = "test") -> float:
    """Accuracy (%) of the noiseless rule ``argmax(T x)`` against the noisy labels."""
    q, g = (ds.Q_test, ds.G_test) if split == "test" else (ds.Q_train, ds.G_train)
    pred = np.argmax(ds.hidden_map @ q, axis=0)
    return 100.0 * float(np.mean(pred == np.argmax(g, axis=0)))


def least_squares_accuracy(ds: TaskDataset) -> float:
    """Test accuracy (%) of a full-rank least-squares classifier fit on the train split."""
    w, *_ = np.linalg.lstsq(ds.Q_train.T, ds.G_train.T, rcond=None)
    pred = np.argmax(w.T @ ds.Q_test, axis=0)
    return 100.0 * float(np.mean(pred == ds.labels_test))
