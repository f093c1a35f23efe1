import json
import os
import pathlib
import subprocess

import numpy as np
import pytest

import ost3d

CONFIG_DIR = pathlib.Path(os.environ.get("OST3D_CONFIG_DIR", pathlib.Path(__file__).parents[2] / "configs"))
CLI = os.environ.get("OST3D_CLI")


def test_iou_and_empty_masks():
    assert ost3d.iou(np.array([1, 1, 0], np.uint8), np.array([0, 1, 1], np.uint8)) == pytest.approx(1 / 3)
    assert ost3d.iou(np.zeros(4, np.uint8), np.zeros(4, np.uint8)) == 1.0
    with pytest.raises(ost3d.ShapeError):
        ost3d.iou(np.zeros(3, np.uint8), np.zeros(4, np.uint8))


def test_dbscan_and_box():
    pts = np.array([[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [5, 5, 5]], dtype=float)
    assert ost3d.dbscan(pts, 0.05, 3) == [0, 0, 0, -1]
    lo, hi = ost3d.mask_to_box(np.ones(4, np.uint8), pts, 0.05, 3)
    assert hi == pytest.approx([0.02, 0, 0])
    assert ost3d.mask_to_box(np.zeros(4, np.uint8), pts) is None
    assert ost3d.box_iou([0, 0, 0], [1, 1, 1], [0, 0, 0], [2, 1, 1]) == pytest.approx(0.5)


def test_hungarian():
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    pairs = ost3d.hungarian(cost)
    assert sum(cost[i, j] for i, j in pairs) == pytest.approx(5.0)


def test_generate_scene_is_deterministic():
    a, b = ost3d.generate_scene(3), ost3d.generate_scene(3)
    assert a["coords"].shape[1] == 3
    assert np.array_equal(a["coords"], b["coords"])
    assert len(a["instance_labels"]) == a["coords"].shape[0]


def test_config_errors():
    resolved = json.loads(ost3d.resolve_config('{"seed": 3}', ["train.epochs=2"]))
    assert resolved["seed"] == 3 and resolved["train"]["epochs"] == 2
    with pytest.raises(ost3d.ConfigError):
        ost3d.resolve_config('{"bogus": 1}')
    with pytest.raises(ost3d.ParseError):
        ost3d.parse_prompt('{"type": "scribble"}')


def test_pretrain_infer_evaluate(tmp_path):
    cfg = (CONFIG_DIR / "tiny.json").read_text()
    report = ost3d.pretrain(cfg, tmp_path / "run", ["data.train_scenes=2", "data.val_scenes=1", "data.referring_scenes=2"])
    assert np.isfinite(report["val_mean_iou"])
    scene = tmp_path / "scene"
    ost3d.gen(cfg, scene, ["data.train_scenes=1", "data.val_scenes=1", "data.referring_scenes=1"])
    (tmp_path / "req.json").write_text(
        json.dumps({"scene": "scene/val_0000.ply", "template": "<PC> please segment the chair .", "prompts": []})
    )
    text, mask = ost3d.infer(tmp_path / "run" / "model.ckpt", tmp_path / "req.json", tmp_path / "out")
    assert text == "sorry , i cannot find this object ."
    assert mask.sum() == 0
    res = ost3d.evaluate(tmp_path / "out", tmp_path / "out", tmp_path / "eval")
    assert res["miou"] == 1.0


@pytest.mark.skipif(CLI is None, reason="OST3D_CLI not set")
def test_cli_exit_codes(tmp_path):
    assert subprocess.run([CLI, "--help"], capture_output=True).returncode == 0
    assert subprocess.run([CLI, "no-such-command"], capture_output=True).returncode == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"unknown_key": 1}')
    r = subprocess.run([CLI, "gen", "--config", str(bad), "--out", str(tmp_path / "g")], capture_output=True)
    assert r.returncode == 1
    r = subprocess.run([CLI, "infer", "--checkpoint", str(tmp_path / "none.ckpt"),
                        "--request", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")], capture_output=True)
    assert r.returncode == 1
