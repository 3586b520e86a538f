"""Smoke tests for the pybind module (built in-tree; PYTHONPATH set by ctest)."""

import math
import tempfile

import numpy as np
import pytest

import _iic


def test_mutual_information_diagonal():
    for C in range(2, 6):
        P = np.eye(C) / C
        out = _iic.mutual_information(P)
        assert out["mi"] == pytest.approx(math.log(C), abs=1e-9)
        assert out["h_z_given_zt"] == pytest.approx(0.0, abs=1e-9)


def test_joint_matrix_symmetry_and_loss_symmetry():
    rng = np.random.default_rng(0)
    z = rng.uniform(0.01, 1.0, size=(16, 4))
    z /= z.sum(axis=1, keepdims=True)
    zt = rng.uniform(0.01, 1.0, size=(16, 4))
    zt /= zt.sum(axis=1, keepdims=True)
    P = _iic.joint_matrix(z, zt, 1e-10)
    assert np.allclose(P, P.T, atol=1e-12)
    assert _iic.iic_loss(z, zt) == pytest.approx(_iic.iic_loss(zt, z), abs=1e-12)
    # lambda=1 loss equals negative MI of the joint.
    assert _iic.iic_loss(z, zt) == pytest.approx(-_iic.mutual_information(P)["mi"], abs=1e-12)


def test_gradient_oracle_uniform():
    P = np.full((3, 3), 1.0 / 9.0)
    g = _iic.mi_gradient_oracle(P, 1e-10)
    assert np.allclose(g, -1.0, atol=1e-9)


def test_hungarian_and_majority():
    counts = np.array([[0, 10], [10, 0]], dtype=float)
    assert _iic.hungarian_match(counts) == [1, 0]
    counts = np.array([[9, 1], [2, 8], [5, 5], [0, 0]], dtype=float)
    assert _iic.majority_map(counts) == [0, 1, 0, 0]
    acc = _iic.accuracy([0, 1, 2], [0, 1, 0], [0, 1, 0], 2)
    assert acc == pytest.approx(1.0)


def test_sobel_constant_is_zero():
    img = np.full((8, 8), 0.5, dtype=np.float32)
    out = _iic.sobel(img)
    assert out.shape == (2, 8, 8)
    assert np.allclose(out, 0.0)


def test_seg_joint_uniform():
    y = np.full((1, 2, 4, 4), 0.5)
    joint = _iic.seg_joint(y, y, 1, 0.0)
    assert joint.shape == (2, 2, 3, 3)
    assert np.allclose(joint, 0.25)


def test_select_subhead():
    assert _iic.select_subhead([-0.5, -0.7, -0.6]) == 1


def test_tiny_training_run_beats_chance():
    out = tempfile.mkdtemp(prefix="iicpy_train_")
    config = "\n".join(
        [
            "task = cluster",
            "dataset = gauss",
            "preset = mlp-small",
            "gauss_n_per_cluster = 120",
            "k_gt = 3",
            "k_aux = 9",
            "h = 2",
            "epochs = 40",
            "batch_size = 64",
            "lr = 0.001",
            "seed = 3",
            f"out_dir = {out}",
        ]
    )
    report = _iic.train(config)
    assert report["acc_best"] > 0.5  # well above the 1/3 chance level
    ckpt_report = _iic.evaluate(report["final_checkpoint"], config)
    # Per-head accuracies reproduce from the checkpoint (head selection may
    # differ: checkpoints carry no training losses, so evaluate ranks heads by
    # the identical-pair loss instead).
    assert ckpt_report["per_head_accuracy"] == pytest.approx(report["per_head_accuracy"])
    assert ckpt_report["acc_avg"] == pytest.approx(report["acc_avg"])
