import numpy as np
import pytest

import ucomp


def test_hand_chamfer_values():
    a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    b = np.array([[0.0, 0.0, 0.0]])
    assert ucomp.full_chamfer(a, b, "sum") == 1.0
    assert ucomp.full_chamfer(a, b) == 0.5
    assert ucomp.eval_metric(a, b) == 5000.0
    assert ucomp.partial_chamfer(np.zeros((1, 3)), np.array([[3.0, 4.0, 0.0]])) == 5.0


def test_chamfer_against_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(-0.5, 0.5, (30, 3)), rng.uniform(-0.5, 0.5, (20, 3))
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    expect = d.min(1).mean() + d.min(0).mean()
    assert ucomp.full_chamfer(a, b) == pytest.approx(expect, rel=1e-12)


def test_bad_shapes_raise():
    with pytest.raises(ValueError):
        ucomp.full_chamfer(np.zeros((4, 2)), np.zeros((4, 3)))


def test_partials_are_subsets():
    full = ucomp.generate_complete("chair", 256, seed=4)
    assert full.shape == (256, 3)
    assert np.all(np.abs(full) <= 0.5 + 1e-12)
    for view in ucomp.view_directions():
        part = ucomp.make_partial(full, view, 0.5, seed=1)
        assert part.shape == (256, 3)
        assert ucomp.partial_chamfer(part, full) == 0.0


def test_file_round_trip(tmp_path):
    cloud = ucomp.generate_complete("box", 64, seed=2)
    ucomp.write_xyz(str(tmp_path / "c.xyz"), cloud)
    np.testing.assert_allclose(ucomp.read_xyz(str(tmp_path / "c.xyz")), cloud, rtol=1e-8, atol=1e-9)
    ucomp.write_ply(str(tmp_path / "c.ply"), cloud)
    assert ucomp.read_ply(str(tmp_path / "c.ply")).shape == (64, 3)
    with pytest.raises(OSError):
        ucomp.read_xyz(str(tmp_path / "missing.xyz"))


def test_cli_train_and_complete(tmp_path):
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    code, _, err = ucomp.run_cli(["gen-data", "--out", data, "--count", "8", "--points", "32"])
    assert code == 0, err
    code, _, err = ucomp.run_cli(["train", "--data", data, "--out", run, "--steps", "4", "--pretrain-steps",
                                  "2", "--d-r", "8", "--d-z", "4", "--batch", "2", "--log-every", "0"])
    assert code == 0, err
    model = ucomp.Model.load(run + "/final.bin")
    assert model.points == 32 and model.code_dim == 4
    partial = ucomp.make_partial(ucomp.generate_complete("box", 32, seed=5), (1.0, 1.0, 1.0), 0.5)
    (done,) = model.complete([partial])
    assert done.shape == (32, 3) and np.all(np.isfinite(done))
    codes = np.full((1, 4), 0.5)
    (pred,) = model.predict_incomplete([done], codes)
    assert pred.shape == (32, 3)
    assert model.complete_representation([done]).shape == (1, 8)
    assert ucomp.run_cli(["eval", "--data", data])[0] == 1
