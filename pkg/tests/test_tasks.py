import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deal.errors import InvalidPermutation
from deal.numerics import Rng
from deal.tasks import (
    STANDARD_ORDERS,
    SequenceSpec,
    bayes_accuracy,
    check_order,
    hidden_map,
    input_domain,
    least_squares_accuracy,
    make_sequence,
)

SMALL = dict(train_samples=200, test_samples=80)


@given(st.integers(0, 1000), st.floats(0, 1), st.integers(2, 8))
def test_targets_one_hot_and_balanced(seed, similarity, classes):
    for ds in make_sequence(SequenceSpec(task_count=2, classes=classes, similarity=similarity, seed=seed, **SMALL)):
        for g, n in ((ds.G_train, 200), (ds.G_test, 80)):
            assert g.shape == (8, n)
            assert set(np.unique(g)) <= {0.0, 1.0}
            assert np.array_equal(g.sum(axis=0), np.ones(n))
            counts = g.sum(axis=1)[:classes]
            assert np.all(np.abs(counts - n / classes) <= 0.2 * n / classes + 1)
            assert np.all(g[classes:] == 0)


def test_similarity_one_keeps_the_label_function():
    spec = SequenceSpec(task_count=2, similarity=1.0, seed=4)
    t1, t2 = make_sequence(spec)
    assert np.array_equal(t1.hidden_map, t2.hidden_map)
    rule = lambda q: np.argmax(t1.hidden_map @ q, axis=0)  # noqa: E731
    acc1 = np.mean(rule(t1.Q_test) == t1.labels_test)
    acc2 = np.mean(rule(t2.Q_test) == t2.labels_test)
    assert abs(acc1 - acc2) <= 0.05


def test_similarity_zero_gives_uncorrelated_maps():
    spec = SequenceSpec(task_count=2, similarity=0.0)
    corrs = []
    for seed in range(20):
        rng = Rng(seed)
        a, b = hidden_map(spec, 0, rng).ravel(), hidden_map(spec, 1, rng).ravel()
        corrs.append(np.corrcoef(a, b)[0, 1])
    assert abs(np.mean(corrs)) <= 0.1


def test_similarity_drift_is_monotone():
    def corr(s):
        spec = SequenceSpec(task_count=2, similarity=s)
        return np.mean([np.corrcoef(hidden_map(spec, 0, Rng(k)).ravel(), hidden_map(spec, 1, Rng(k)).ravel())[0, 1]
                        for k in range(10)])
    assert corr(0.2) < corr(0.5) < corr(0.8) < corr(1.0)


def test_reproducible_bytes():
    spec = SequenceSpec(seed=9, **SMALL)
    a, b = make_sequence(spec), make_sequence(spec)
    for x, y in zip(a, b):
        for f in ("Q_train", "G_train", "Q_test", "G_test"):
            assert getattr(x, f).tobytes() == getattr(y, f).tobytes()
    other = make_sequence(SequenceSpec(seed=10, **SMALL))
    assert a[0].Q_train.tobytes() != other[0].Q_train.tobytes()


def test_train_and_test_differ():
    ds = make_sequence(SequenceSpec(task_count=1, **SMALL))[0]
    assert not np.array_equal(ds.Q_train[:, :80], ds.Q_test)


def test_orders_permute_the_same_datasets():
    base = make_sequence(SequenceSpec(task_count=3, seed=1, **SMALL))
    assert [t.name for t in base] == ["task0", "task1", "task2"]
    perm = make_sequence(SequenceSpec(task_count=3, seed=1, order=(2, 0, 1), **SMALL))
    assert [t.name for t in perm] == ["task2", "task0", "task1"]
    assert perm[0].Q_train.tobytes() == base[2].Q_train.tobytes()
    four = make_sequence(SequenceSpec(task_count=4, seed=1, **SMALL))
    for order in STANDARD_ORDERS:
        seq = make_sequence(SequenceSpec(task_count=4, seed=1, order=order, **SMALL))
        for pos, i in enumerate(order):
            assert seq[pos].G_test.tobytes() == four[i].G_test.tobytes()


@pytest.mark.parametrize("order", [(0, 1), (0, 1, 1), (1, 2, 3), (0, 0, 2)])
def test_invalid_permutation(order):
    with pytest.raises(InvalidPermutation):
        check_order(order, 3)


@pytest.mark.parametrize("bad", [dict(task_count=0), dict(similarity=1.5), dict(classes=9), dict(classes=1),
                                 dict(domain_dim=0), dict(train_samples=2)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        SequenceSpec(**bad)


@pytest.mark.parametrize("similarity", [0.0, 0.5, 0.9])
def test_tasks_are_solvable(similarity):
    for seed in range(3):
        for ds in make_sequence(SequenceSpec(task_count=3, similarity=similarity, seed=seed)):
            assert least_squares_accuracy(ds) >= 85.0
            assert bayes_accuracy(ds) >= 90.0


def test_domain_option_gives_orthonormal_drifting_bases():
    spec = SequenceSpec(task_count=3, domain_dim=8, similarity=0.5)
    rng = Rng(0)
    u0, u1 = input_domain(spec, 0, rng), input_domain(spec, 1, rng)
    assert np.allclose(u0.T @ u0, np.eye(8), atol=1e-12)
    assert not np.allclose(u0, u1)
    assert np.array_equal(input_domain(SequenceSpec(), 0, rng), np.eye(32))
    ds = make_sequence(SequenceSpec(task_count=1, domain_dim=8, **SMALL))[0]
    # most energy sits inside the task's domain
    inside = np.linalg.norm(ds.domain.T @ ds.Q_train) ** 2
    assert inside / np.linalg.norm(ds.Q_train) ** 2 >= 0.8
