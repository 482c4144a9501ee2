import dataclasses

import numpy as np
import pytest

from taep.core import normalize_rows, validate
from taep.synth import SynthConfig, generate, prototype_similarity


def arrays_of(task):
    return [task.train.features, task.train.labels, task.test_features, task.test_truth,
            task.labels.embeddings, task.prototypes, task.blend, task.feature_map]


def test_same_seed_bit_identical():
    a, b = generate(SynthConfig(seed=9)), generate(SynthConfig(seed=9))
    assert all(np.array_equal(x, y) for x, y in zip(arrays_of(a), arrays_of(b)))
    c = generate(SynthConfig(seed=10))
    assert not np.array_equal(a.prototypes, c.prototypes)


def test_more_instances_keep_prototypes():
    a, b = generate(SynthConfig(seed=1, n_train=10)), generate(SynthConfig(seed=1, n_train=200))
    assert np.array_equal(a.prototypes, b.prototypes)
    assert np.array_equal(a.feature_map, b.feature_map)


def test_noiseless_single_label_feature():
    task = generate(SynthConfig(seed=4, noise_scale=0.0, label_density=0.05, n_train=200))
    rows = np.flatnonzero(task.train.labels.sum(axis=1) == 1)
    assert rows.size > 0
    for i in rows[:10]:
        j = int(np.argmax(task.train.labels[i]))
        expected = normalize_rows(task.feature_map @ task.prototypes[j])[0]
        assert np.allclose(task.train.features[i], expected, atol=1e-14)


def test_sparse_density_still_has_positives():
    task = generate(SynthConfig(seed=2, label_density=0.01, n_train=50, n_test=50))
    assert np.all(task.train.labels.sum(axis=1) >= 1)
    assert np.all(task.test_truth.sum(axis=1) >= 1)
    assert np.all(task.train.labels.sum(axis=1) < task.labels.seen_count)


@pytest.mark.parametrize("seed", range(5))
def test_output_validates(seed):
    task = generate(SynthConfig(seed=seed, clusters=3, embedding_noise=0.5))
    assert validate(task.train, task.labels) == []


def test_tight_transfer_lies_in_hull():
    task = generate(SynthConfig(seed=6, transfer_tightness=1.0, noise_scale=0.0, m=20))
    Ls = task.labels.seen_count
    P_s, P_u = task.prototypes[:Ls], task.prototypes[Ls:]
    for target in P_u:
        # least squares with the sum-to-one row appended, then check nonnegativity
        A = np.vstack([P_s.T, 100.0 * np.ones(Ls)])
        w = np.linalg.lstsq(A, np.append(target, 100.0), rcond=None)[0]
        assert np.allclose(P_s.T @ w, target, atol=1e-10)
        assert w.min() >= -1e-10 and w.sum() == pytest.approx(1.0)


@pytest.mark.parametrize(
    "change",
    [dict(n_train=0), dict(L_unseen=1), dict(label_density=1.0), dict(noise_scale=-1.0),
     dict(transfer_tightness=1.5), dict(clusters=7), dict(blend_concentration=0.0)],
)
def test_invalid_config(change):
    with pytest.raises(ValueError):
        SynthConfig(**change)


def test_prototype_similarity_forms():
    task = generate(SynthConfig(seed=0))
    dense = prototype_similarity(task)
    assert np.all(dense >= 0) and np.allclose(dense, dense.T) and np.all(np.diag(dense) == 1.0)
    knn = prototype_similarity(task, neighbours=2)
    off = knn - np.diag(np.diag(knn))
    assert np.all((off > 0).sum(axis=1) >= 2) and np.allclose(knn, knn.T)
    noisy = prototype_similarity(task, noise=0.2, seed=1)
    assert np.allclose(noisy, noisy.T) and noisy.min() >= 0
    assert np.array_equal(noisy, prototype_similarity(task, noise=0.2, seed=1))
    with pytest.raises(ValueError):
        prototype_similarity(task, neighbours=-1)


def test_config_is_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        SynthConfig().seed = 3
