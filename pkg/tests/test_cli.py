import csv

import pytest

from hypertrack.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from hypertrack.metrics import evaluate
from hypertrack.scenarios import load_scenario, rows_to_frames
from hypertrack.mot_io import read_mot

CLEAN = ["--set", "sigma_jitter=0", "--set", "p_miss=0", "--set", "fp_rate=0", "--set", "score_true=[0.9, 1.0]"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def scene(tmp_path, capsys):
    d = tmp_path / "lin"
    code, out, _ = run(capsys, "generate", "linear", "--out", d, "--seed", 2, "--set", "frames=40", *CLEAN)
    assert code == EXIT_OK and out.startswith("# hypertrack generate seed=2")
    return d


def test_track_then_eval_noise_free(scene, tmp_path, capsys):
    res = tmp_path / "res.txt"
    assert run(capsys, "track", scene, "--motion", "kalman", "--out", res)[0] == EXIT_OK
    code, out, _ = run(capsys, "eval", res, scene / "gt.txt")
    assert code == EXIT_OK
    assert "mota=1.000000" in out and "idf1=1.000000" in out and "id_switches=0" in out


def test_track_is_byte_identical(scene, tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for p in (a, b):
        assert run(capsys, "track", scene, "--motion", "kalman", "--out", p, "--seed", 5)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_train_track_with_checkpoint(scene, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("layers = 1\nembed_dim = 4\nstate_dim = 4\nepochs = 2\nbatch = 16\n")
    ckpt = tmp_path / "m.ckpt"
    code, out, _ = run(capsys, "train", scene, "--out", ckpt, "--config", cfg)
    assert code == EXIT_OK and "model=hyperssm epochs=2" in out
    assert len((tmp_path / "m.ckpt.loss").read_text().splitlines()) == 2
    res = tmp_path / "r.txt"
    assert run(capsys, "track", scene, "--checkpoint", ckpt, "--out", res)[0] == EXIT_OK
    sc = load_scenario(scene)
    rep = evaluate(rows_to_frames(read_mot(res), sc.image_size), sc.gt)
    assert rep.mota > 0.9


def test_compare_tables(scene, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("layers = 1\nembed_dim = 4\nstate_dim = 4\nepochs = 1\nbatch = 32\n")
    out_dir = tmp_path / "cmp"
    code, out, _ = run(capsys, "compare", scene, "--train", scene, "--out", out_dir, "--config", cfg,
                       "--thetas", "0.5,0.8", "--layer-counts", "1,2")
    assert code == EXIT_OK
    with open(out_dir / "models.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["model"] for r in rows] == ["Kalman", "SSM", "HyperSSM"]
    assert all(v not in ("", "nan") for r in rows for v in r.values())
    assert len(list(csv.DictReader(open(out_dir / "theta.csv")))) == 2
    assert (out_dir / "compare.txt").read_text().startswith("# seed=0")


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == EXIT_OK and "FAIL" not in out


def test_usage_errors(scene, tmp_path, capsys):
    assert run(capsys, "track", scene, "--out", tmp_path / "x")[0] == EXIT_USAGE
    assert run(capsys, "generate", "linear", "--out", tmp_path / "g", "--set", "bogus=1")[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lr = 2\n")
    assert run(capsys, "verify", "--config", cfg)[0] == EXIT_USAGE


def test_io_errors(tmp_path, capsys):
    assert run(capsys, "eval", tmp_path / "missing.txt", tmp_path / "gt.txt")[0] == EXIT_IO
    bad = tmp_path / "bad.txt"
    bad.write_text("1,2,3\n")
    assert run(capsys, "eval", bad, bad)[0] == EXIT_IO
