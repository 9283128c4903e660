import math
import os
import subprocess

import numpy as np
import pytest

import retinagan as rg


def test_phantom_scan():
    image, labels = rg.generate_scan(height=224, width=160, seed=3)
    assert image.shape == (224, 160) and labels.shape == (224, 160)
    assert image.dtype == np.float64 and labels.dtype == np.uint8
    assert 0.0 <= image.min() and image.max() <= 1.0
    assert set(np.unique(labels)) == set(range(rg.NUM_CLASSES))
    again, _ = rg.generate_scan(height=224, width=160, seed=3)
    assert np.array_equal(image, again)


def test_preprocessing_ops():
    impulse = np.zeros((5, 5))
    impulse[2, 2] = 1.0
    assert not rg.median_filter3(impulse).any()
    flat = np.full((8, 8), 0.4)
    assert np.allclose(rg.unsharp_mask(flat, 1.0, 2.0), 0.4)
    block = np.tile(np.arange(16).reshape(4, 4) / 15.0, (56, 56))
    assert np.allclose(rg.downsample4(block), 0.5)
    ramp = np.tile(np.arange(12, dtype=float), (3, 1))
    assert np.array_equal(rg.bicubic_upsample(ramp, 1), ramp)
    assert rg.bicubic_upsample(ramp, 4).shape == (12, 48)
    assert len(rg.patch_offsets(448, 448)) == 25
    assert rg.patch_offsets(280, 224) == [(0, 0), (56, 0)]


def test_metrics_and_palette():
    pred = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    gt = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    report = rg.miou(pred, gt)
    assert math.isclose(report["per_class_dice"][1], 0.5)
    assert math.isclose(report["per_class_iou"][1], 1 / 3)
    assert rg.dice_coefficient(gt, gt) == 1.0
    labels = np.arange(rg.NUM_CLASSES, dtype=np.uint8).reshape(2, 4)
    assert np.array_equal(rg.decode_rgb(rg.render_rgb(labels)), labels)
    assert len(rg.palette()) == len(rg.class_names()) == rg.NUM_CLASSES


def test_discriminator_geometry_and_grid():
    assert rg.receptive_field() == 70
    assert rg.score_map_size(224) == 26
    rows = rg.grid_rows()
    assert len(rows) == 16
    best = next(r for r in rows if r["id"] == "joint-resnet-subpixel-dice")
    assert (best["published_dice"], best["published_miou"]) == (0.867, 0.765)


@pytest.mark.skipif("RETINAGAN_CLI" not in os.environ, reason="needs the retinagan CLI")
def test_checkpoint_from_cli(tmp_path):
    cli = os.environ["RETINAGAN_CLI"]

    def run(*args):
        subprocess.run([cli, *args], check=True, capture_output=True)

    run("generate-data", "--out", str(tmp_path / "scans"), "--patients", "6", "--height", "280", "--width", "280")
    run("preprocess", "--data", str(tmp_path / "scans"), "--out", str(tmp_path / "store"))
    run("train", "--data", str(tmp_path / "store"), "--out", str(tmp_path / "run"), "--epochs", "1",
        "--base-width", "8", "--depth", "2", "--disc-width", "8", "--batch-size", "4", "--quiet")
    ckpt = tmp_path / "run" / "final.ckpt"
    report = rg.evaluate(ckpt, tmp_path / "store", "test", 4)
    assert 0.0 <= report["dice"] <= 1.0
    assert rg.evaluate(ckpt, tmp_path / "store", "test", 1)["dice"] == report["dice"]
    labels = rg.predict(ckpt, np.random.default_rng(0).random((56, 56)))
    assert labels.shape == (224, 224) and labels.max() < rg.NUM_CLASSES
