import subprocess
import sys

import numpy as np
import pytest

from taep import io
from taep.cli import main
from taep.core import ModelParams


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--seed", "1", "--n-train", "40", "--n-test", "25", "--aux-noise", "0.05",
                 "--aux-neighbours", "3", "--out-dir", str(out)]) == 0
    return out


def train_args(d, *extra):
    return ["train", "--features", str(d / "train_features.txt"), "--labels", str(d / "train_labels.txt"),
            "--embeddings", str(d / "embeddings.txt"), "--seen-count", "6", "--r", "3",
            "--max-iters", "10", *extra]


def test_train_reload_and_determinism(synth_dir, tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(train_args(synth_dir, "--out", str(a), "--trace", str(tmp_path / "t.txt"))) == 0
    out = capsys.readouterr().out
    assert "dual=" in out and "primal=" in out
    assert main(train_args(synth_dir, "--out", str(b))) == 0
    assert a.read_bytes() == b.read_bytes()
    model = io.read_model(a)
    assert model.orthonormality_error() <= 1e-10
    trace = (tmp_path / "t.txt").read_text().splitlines()
    assert trace[0].startswith("#") and len(trace) >= 2 and len(trace[1].split()) == 4


def test_lambda_without_similarity(synth_dir, tmp_path, capsys):
    code = main(train_args(synth_dir, "--lambda", "0.1", "--out", str(tmp_path / "m.txt")))
    assert code == 1
    assert "auxiliary" in capsys.readouterr().err


def test_invalid_data_exit_code(synth_dir, tmp_path, capsys):
    Y = io.read_matrix(synth_dir / "train_labels.txt")
    Y[0] = 1
    io.write_matrix(tmp_path / "y.txt", Y)
    args = train_args(synth_dir, "--out", str(tmp_path / "m.txt"))
    args[args.index("--labels") + 1] = str(tmp_path / "y.txt")
    assert main(args) == 2
    assert "empty negative set" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--features", "x"])
    assert info.value.code == 1


def test_train_with_similarity_and_predict_round_trip(synth_dir, tmp_path, capsys):
    model = tmp_path / "m.txt"
    assert main(train_args(synth_dir, "--gamma", "10", "--lambda", "1", "--aux-sim",
                           str(synth_dir / "aux_sim.txt"), "--out", str(model))) == 0
    preds = tmp_path / "p.txt"
    common = ["--model", str(model), "--mode", "generalized"]
    assert main(["predict", *common, "--features", str(synth_dir / "test_features.txt"),
                 "--embeddings", str(synth_dir / "embeddings.txt"), "--out", str(preds)]) == 0
    lines = preds.read_text().splitlines()
    assert len(lines) == 25
    capsys.readouterr()
    assert main(["evaluate", *common, "--truth", str(synth_dir / "test_truth.txt"),
                 "--features", str(synth_dir / "test_features.txt"),
                 "--embeddings", str(synth_dir / "embeddings.txt")]) == 0
    direct = capsys.readouterr().out
    assert main(["evaluate", *common, "--truth", str(synth_dir / "test_truth.txt"),
                 "--predictions", str(preds)]) == 0
    assert "miap=" in direct and capsys.readouterr().out == direct


def _model_file(path, seen=1, unseen=4, d=2, W=None, W0=None):
    names = [f"s{i}" for i in range(seen)] + [f"u{i}" for i in range(unseen)]
    W = np.zeros((d, 1)) if W is None else W
    W0 = np.zeros(d) if W0 is None else W0
    io.write_model(path, ModelParams(W, W0, np.array([[1.0]]), 1.0, 0.0, 0.0, 1, names, seen))
    return names


def test_zero_model_predictions(tmp_path):
    names = _model_file(tmp_path / "m.txt")
    io.write_embeddings(tmp_path / "e.txt", names, np.ones((5, 1)))
    io.write_matrix(tmp_path / "x.txt", np.ones((3, 2)))
    assert main(["predict", "--model", str(tmp_path / "m.txt"), "--features", str(tmp_path / "x.txt"),
                 "--embeddings", str(tmp_path / "e.txt"), "--out", str(tmp_path / "p.txt")]) == 0
    lines = (tmp_path / "p.txt").read_text().splitlines()
    assert len(lines) == 3
    for line in lines:
        fields = line.split("\t")
        assert fields[0] == "t=0" and fields[-1] == "positives="
        assert all(f.endswith("=0") for f in fields[1:-1])


def _evaluate(tmp_path, capsys, preds, truth, mode="zeroshot"):
    (tmp_path / "p.txt").write_text("\n".join(preds) + "\n")
    io.write_matrix(tmp_path / "t.txt", truth)
    code = main(["evaluate", "--model", str(tmp_path / "m.txt"), "--truth", str(tmp_path / "t.txt"),
                 "--predictions", str(tmp_path / "p.txt"), "--mode", mode])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_evaluate_hand_example(tmp_path, capsys):
    _model_file(tmp_path / "m.txt")
    # true labels u0 and u2 land at ranks 1 and 3
    line = "t=0.5\tu0=0.9\tu1=0.8\tu2=0.7\tu3=0.1\tpositives=u0,u1,u2"
    code, out, _ = _evaluate(tmp_path, capsys, [line], np.array([[1, 0, 1, 0]]))
    assert code == 0
    assert "MiAP         83.33" in out and "Hamming      25.00" in out
    assert "miap=0.83333333333333326" in out


def test_evaluate_perfect(tmp_path, capsys):
    _model_file(tmp_path / "m.txt")
    lines = ["t=0\tu0=1\tu1=-1\tu2=-1\tu3=1\tpositives=u0,u3", "t=0\tu0=-1\tu1=1\tu2=-1\tu3=-1\tpositives=u1"]
    code, out, _ = _evaluate(tmp_path, capsys, lines, np.array([[1, 0, 0, 1], [0, 1, 0, 0]]))
    assert code == 0
    assert "MiAP        100.00" in out and "Hamming       0.00" in out


def test_evaluate_generalized_shape_error(tmp_path, capsys):
    _model_file(tmp_path / "m.txt")
    line = "t=0\ts0=0\tu0=1\tu1=0\tu2=0\tu3=0\tpositives=u0"
    code, _, err = _evaluate(tmp_path, capsys, [line], np.array([[1, 0, 0, 0]]), mode="generalized")
    assert code == 2 and "does not match" in err


def test_bad_predictions_file(tmp_path, capsys):
    _model_file(tmp_path / "m.txt")
    code, _, err = _evaluate(tmp_path, capsys, ["u0=1\tpositives="], np.array([[1, 0, 0, 0]]))
    assert code == 2 and ":1:" in err


def test_sim_build(tmp_path, capsys):
    (tmp_path / "labels.txt").write_text("a\nb\nc\n")
    (tmp_path / "h.tsv").write_text("a\tb\nb\tc\n")
    assert main(["sim-build", "--source", "hierarchy", "--input", str(tmp_path / "h.tsv"),
                 "--labels", str(tmp_path / "labels.txt"), "--out", str(tmp_path / "r.txt")]) == 0
    R = io.read_matrix(tmp_path / "r.txt")
    assert np.allclose(R, [[1, 0.5, 1 / 3], [0.5, 1, 0.5], [1 / 3, 0.5, 1]], rtol=0, atol=1e-16)
    assert io.read_similarity_labels(tmp_path / "r.txt") == ["a", "b", "c"]

    (tmp_path / "labels.txt").write_text("a\nb\n")
    (tmp_path / "c.tsv").write_text("a\t40\nb\t60\na\tb\t10\n")
    assert main(["sim-build", "--source", "counts", "--input", str(tmp_path / "c.tsv"),
                 "--labels", str(tmp_path / "labels.txt"), "--out", str(tmp_path / "r.txt")]) == 0
    assert io.read_matrix(tmp_path / "r.txt")[0, 1] == pytest.approx(0.1)

    (tmp_path / "c.tsv").write_text("a\t40\na\tb\t10\n")
    capsys.readouterr()
    assert main(["sim-build", "--source", "counts", "--input", str(tmp_path / "c.tsv"),
                 "--labels", str(tmp_path / "labels.txt"), "--out", str(tmp_path / "r.txt")]) == 2
    assert "'b'" in capsys.readouterr().err


def test_sweep_cli(synth_dir, tmp_path, capsys):
    base = train_args(synth_dir)[1:]
    args = ["sweep", *base, "--eval-features", str(synth_dir / "test_features.txt"),
            "--eval-truth", str(synth_dir / "test_truth.txt")]
    assert main([*args, "--param", "lambda", "--aux-sim", str(synth_dir / "aux_sim.txt")]) == 1
    assert "base value" in capsys.readouterr().err
    assert main([*args, "--param", "gamma", "--gamma", "100", "--svg", str(tmp_path / "s.svg")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [float(line.split()[0]) for line in out[1:5]] == [1.0, 0.1, 0.01, 0.001]
    assert (tmp_path / "s.svg").read_text().startswith("<svg")


def test_tune_cli(synth_dir, tmp_path, capsys):
    base = train_args(synth_dir)[1:]
    args = ["tune", *base, "--beta-grid", "2", "--gamma-grid", "10", "--out", str(tmp_path / "m.txt")]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert "beta=2" in first and "gamma=10" in first and "lambda=0" in first
    assert io.read_model(tmp_path / "m.txt").gamma == 10.0
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "taep", "synth", "--n-train", "5", "--n-test", "5",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and "seen_count=6" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "taep", "synth", "--unseen", "1", "--out-dir", str(tmp_path)],
                         capture_output=True, text=True)
    assert bad.returncode == 1
