import json

import numpy as np
import pytest

from panomesh.cli import main
from panomesh.formats import read_sfck, read_sfdm, read_sfmf, read_sfmh, write_sfdm, write_sfmf
from panomesh.icosphere import face_count


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, [json.loads(line) for line in out if line.startswith("{")]


def test_synth_writes_scene(tmp_path, capsys):
    code, payloads = run(capsys, "synth", "--height", 16, "--seed", 3, "-o", tmp_path)
    assert code == 0
    info = payloads[0]
    assert 0.1 < info["min_depth"] < info["max_depth"] < 10.0
    depth = read_sfdm(tmp_path / "depth.sfdm")
    assert depth.shape == (16, 32)
    assert (tmp_path / "rgb.png").exists()


def test_mesh_info_and_dump(tmp_path, capsys):
    dump = tmp_path / "mesh.sfmh"
    code, payloads = run(capsys, "mesh", "info", 3, "--dump", dump)
    assert code == 0
    info = payloads[0]
    assert info["faces"] == 1280
    assert info["vertices"] == 642
    mesh = read_sfmh(dump)
    assert mesh.n_faces == 1280
    assert mesh.faf.shape == (1280, 3)


def test_project_roundtrip_with_ref(tmp_path, capsys):
    code, _ = run(capsys, "synth", "--height", 32, "--seed", 0, "-o", tmp_path)
    assert code == 0
    sfmf = tmp_path / "depth.sfmf"
    code, payloads = run(capsys, "project", "e2s", tmp_path / "depth.sfdm", "--mr", 4, "-o", sfmf)
    assert code == 0
    assert payloads[0]["faces"] == face_count(4)
    mr, values = read_sfmf(sfmf)
    assert mr == 4 and values.shape == (face_count(4), 1)

    back = tmp_path / "back.sfdm"
    code, payloads = run(
        capsys, "project", "s2e", sfmf, "--height", 32, "-o", back,
        "--ref", tmp_path / "depth.sfdm",
    )
    assert code == 0
    assert payloads[0]["rmse"] < 0.5
    assert read_sfdm(back).shape == (32, 64)


def test_pointcloud_from_grid(tmp_path, capsys):
    run(capsys, "synth", "--height", 16, "--seed", 1, "-o", tmp_path)
    ply = tmp_path / "cloud.ply"
    code, payloads = run(
        capsys, "pointcloud", tmp_path / "depth.sfdm", "--rgb", tmp_path / "rgb.png", "-o", ply
    )
    assert code == 0
    assert payloads[0]["points"] == 16 * 32
    header = ply.read_text().splitlines()[:12]
    assert "property uchar red" in header


def test_pointcloud_from_mesh(tmp_path, capsys):
    sfmf = tmp_path / "faces.sfmf"
    write_sfmf(sfmf, 2, np.full((face_count(2), 1), 2.0, dtype=np.float32))
    code, payloads = run(capsys, "pointcloud", sfmf, "-o", tmp_path / "c.ply")
    assert code == 0
    assert payloads[0]["points"] == face_count(2)


def test_eval_json(tmp_path, capsys):
    gt = np.full((8, 16), 2.0, dtype=np.float32)
    pred = gt * 1.1
    write_sfdm(tmp_path / "gt.sfdm", gt)
    write_sfdm(tmp_path / "pred.sfdm", pred)
    code, payloads = run(capsys, "eval", tmp_path / "pred.sfdm", tmp_path / "gt.sfdm")
    assert code == 0
    r = payloads[0]
    assert r["n_valid"] == 128
    assert abs(r["mae"] - 0.2) < 1e-6
    assert r["delta1"] == 1.0


def test_eval_exit_codes(tmp_path, capsys):
    write_sfdm(tmp_path / "gt0.sfdm", np.zeros((4, 8), dtype=np.float32))
    write_sfdm(tmp_path / "p.sfdm", np.ones((4, 8), dtype=np.float32))
    code, _ = run(capsys, "eval", tmp_path / "p.sfdm", tmp_path / "gt0.sfdm")
    assert code == 4  # nothing valid to score

    write_sfdm(tmp_path / "small.sfdm", np.ones((2, 4), dtype=np.float32))
    code, _ = run(capsys, "eval", tmp_path / "p.sfdm", tmp_path / "small.sfdm")
    assert code == 3  # shape mismatch

    code, _ = run(capsys, "eval", tmp_path / "missing.sfdm", tmp_path / "gt0.sfdm")
    assert code == 2  # I/O

    code, _ = run(capsys, "eval", tmp_path / "p.txt", tmp_path / "gt0.sfdm")
    assert code == 2  # unknown extension


def test_config_init_show_roundtrip(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    code, _ = run(capsys, "config", "init", "--preset", "toy", "-o", cfg)
    assert code == 0
    code, payloads = run(capsys, "config", "show", "--config", cfg)
    assert code == 0
    assert payloads[0]["fusion"] == "gate"
    assert payloads[0]["scales"] == "4"


def test_config_bad_preset(tmp_path, capsys):
    code, _ = run(capsys, "config", "init", "--preset", "galactic", "-o", tmp_path / "x.cfg")
    assert code == 2


def test_train_toy_short(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "image_h = 16\nimage_w = 32\nmr_hi = 2\nmr_lo = 1\nchannels = 4,8\n"
        "fusion = gate\nloss_weights = 1.0,0.5\nlr = 0.01\nseed = 0\n"
    )
    out = tmp_path / "run"
    code, payloads = run(
        capsys, "train-toy", "--config", cfg, "--steps", 3, "--log-every", 0, "-o", out
    )
    assert code == 0
    summary = payloads[0]
    assert summary["steps"] == 3
    assert summary["final_loss"] < summary["initial_loss"]
    ck = read_sfck(out / "checkpoint.sfck")
    assert any(name.startswith("head") for name in ck)
    assert read_sfdm(out / "pred.sfdm").shape == (16, 32)
    history = json.loads((out / "history.json").read_text())
    assert len(history) == 3


def test_train_toy_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("image_h = 16\nimage_w = 99\n")
    code, _ = run(capsys, "train-toy", "--config", cfg, "--steps", 1, "-o", tmp_path / "r")
    assert code == 2


def test_bench_faf(capsys):
    code, payloads = run(capsys, "bench", "faf", "--mr", 3, "--repeats", 1)
    assert code == 0
    row = payloads[0]
    assert row["cached_s"] <= row["uncached_s"]


def test_bench_kernels(capsys):
    code, payloads = run(capsys, "bench", "kernels", "--mr", 3, "--points", 2000, "--repeats", 1)
    assert code == 0
    assert {row["backend"] for row in payloads} == {"numba", "numpy"}


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["project", "e2s"])  # missing required arguments
    assert exc.value.code == 2
