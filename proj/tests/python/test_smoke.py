# SPDX-License-Identifier: Apache-2.0
"""End-to-end smoke tests of the python surface."""

import json
import math

import numpy as np
import pytest

import cricbench as cb


def test_split_counts():
    assert cb.split_counts(188) == (131, 29, 28)
    assert cb.split_counts(10) == (7, 2, 1)


def test_sample_indices():
    idx = cb.sample_indices(100, 25, "evenly_spaced")
    assert len(idx) == 25
    assert idx[0] == 0 and idx[-1] == 99
    assert idx == sorted(idx)
    drawn = cb.sample_indices(100, 25, "random", seed=5)
    assert drawn == cb.sample_indices(100, 25, "random", seed=5)
    with pytest.raises(cb.CricbenchError):
        cb.sample_indices(100, 25, "random")  # no seed


def test_metrics_worked_example():
    m = cb.compute_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert m["accuracy"] == 0.75
    assert math.isclose(m["weighted_precision"], 5 / 6, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(m["weighted_f1"], 11 / 15, rel_tol=0, abs_tol=1e-15)
    assert m["weighted_recall"] == m["accuracy"]


def test_model_forward_and_checkpoint(tmp_path):
    assert len(cb.all_arch_ids()) == 10
    model = cb.build_model(
        "cnn_rnn_bhat", 10, {"backbone_scale": 0.125, "gru_hidden": 32}
    )
    x = np.random.default_rng(0).uniform(-1, 1, (2, 25, 3, 100, 100)).astype(np.float32)
    logits = model.forward(x)
    assert logits.shape == (2, 10)
    assert np.isfinite(logits).all()

    total, trainable = model.count_parameters()
    assert total == trainable > 0

    ckpt = str(tmp_path / "m.ckpt")
    model.save_checkpoint(ckpt)
    restored = cb.Model.load_checkpoint(ckpt)
    np.testing.assert_array_equal(logits, restored.forward(x))


def test_synth_manifest_pipeline(tmp_path):
    manifest = cb.generate_synthetic(
        str(tmp_path / "clips"), n_classes=2, clips_per_class=3, frames=8, seed=4
    )
    assert len(manifest.entries) == 6
    split = cb.stratified_split(manifest, [0.70, 0.15, 0.15], 27)
    # per class of n=3: train floor(2.1)=2, val ceil(1/2)=1, test 0
    assert sorted(e.split for e in split.entries) == sorted(
        ["train", "train", "val", "train", "train", "val"]
    )
    seq = cb.preprocess_file(split.entries[0].path, "bhat")
    assert seq.shape == (25, 3, 100, 100)
    assert np.isfinite(seq).all()


def test_train_and_evaluate(tmp_path):
    manifest = cb.generate_synthetic(
        str(tmp_path / "clips"), n_classes=2, clips_per_class=3, frames=8, seed=4
    )
    split = cb.stratified_split(manifest, [0.70, 0.15, 0.15], 27)
    manifest_path = str(tmp_path / "manifest.jsonl")
    split.save(manifest_path)
    cfg = {
        "model": {
            "arch_id": "cnn_rnn_bhat",
            "num_classes": 2,
            "hyper": {"backbone_scale": 0.125, "gru_hidden": 16},
        },
        "pipeline": "bhat",
        "max_epochs": 1,
        "batch_size": 2,
        "learning_rate": 1e-3,
        "weight_decay": 1e-4,
        "early_stop_patience": 5,
        "seed": 3,
        "run_dir": str(tmp_path / "run"),
    }
    result = cb.train(json.dumps(cfg), manifest_path)
    assert result["epochs_run"] == 1
    metrics = cb.evaluate(result["checkpoint_path"], manifest_path, "val")
    assert 0.0 <= metrics["accuracy"] <= 1.0
    assert metrics["n_samples"] == 2


def test_run_study(tmp_path):
    journal = str(tmp_path / "journal.jsonl")

    def objective(params):
        lr = params["learning_rate"]
        return 1.0 - (lr - 0.003) ** 2

    res = cb.run_study(10, objective, 27, journal)
    assert res["n_trials"] == 10
    assert 1e-5 <= res["best_params"]["learning_rate"] <= 1e-2
