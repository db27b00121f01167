import json

import numpy as np
import pytest

import oracles
from conftest import gate_joint
from infomorph.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, RunConfig, main, parse_goal
from infomorph.dataset import write_idx
from infomorph.grad import NumericalError
from infomorph.lattice import build_lattice


@pytest.fixture
def mnist_dir(tmp_path):
    rng = np.random.default_rng(0)

    def make(n):
        labels = rng.integers(0, 10, n).astype(np.uint8)
        images = rng.integers(0, 60, (n, 28, 28)).astype(np.uint8)
        for k in range(10):
            images[labels == k, 2 * k:2 * k + 3, :] = 255
        return images, labels

    d = tmp_path / "mnist"
    d.mkdir()
    for stem, n in (("train", 300), ("t10k", 100)):
        img, lab = make(n)
        write_idx(d / f"{stem}-images-idx3-ubyte", img)
        write_idx(d / f"{stem}-labels-idx1-ubyte", lab)
    return d


def quick(mnist_dir, out, *extra):
    args = ["--set", f"mnist_dir={mnist_dir}", "--set", f"output_dir={out}", "--set", "n_hidden=10",
            "--set", "batch_size=100", "--set", "epochs=2"]
    return args + list(extra)


def test_train_writes_artifacts(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train"] + quick(mnist_dir, out, "--set", "seed=1")) == EXIT_OK
    for name in ("checkpoint.infm", "report.json", "metrics.csv", "learning_curve.svg", "resolved_config.ini"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 1 and len(report["epochs"]) == 2
    assert "seed = 1" in (out / "resolved_config.ini").read_text()
    assert (out / "learning_curve.svg").read_text().startswith("<svg")
    assert "test accuracy" in capsys.readouterr().out


def test_config_file_and_setup2(mnist_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"[network]\nn_hidden = 12\nsetup = 2\nmax_lateral = 4\nepochs = 1\nbatch_size = 100\n"
                   f"[data]\nmnist_dir = {mnist_dir}\noutput_dir = {tmp_path / 'out'}\n")
    assert main(["train", "--config", str(cfg)]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["config"]["setup"] == 2 and report["config"]["max_lateral"] == 4


def test_eval_prints_accuracy(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    main(["train"] + quick(mnist_dir, out))
    capsys.readouterr()
    ckpt = out / "checkpoint.infm"
    assert main(["eval", str(ckpt), "--set", f"mnist_dir={mnist_dir}", "--split", "validation"]) == EXIT_OK
    line = capsys.readouterr().out.strip()
    acc = float(line.split()[-1])
    assert line.startswith("accuracy") and len(line.split()[-1].split(".")[1]) == 4 and 0 <= acc <= 1
    result = json.loads(ckpt.with_suffix(".eval.json").read_text())
    assert result["split"] == "validation" and result["n"] == 60


def test_eval_corrupted_checkpoint(mnist_dir, tmp_path, capsys):
    bad = tmp_path / "bad.infm"
    bad.write_bytes(b"INFM\x05\x00\x00\x00{nope")
    assert main(["eval", str(bad), "--set", f"mnist_dir={mnist_dir}"]) == EXIT_DATA
    assert "corrupted" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["--set", "bogus=1"], ["--set", "setup=7"], ["--set", "epochs=abc"],
                                  ["--set", "novalue"], ["--config", "/nonexistent.cfg"]])
def test_config_errors(args, tmp_path):
    assert main(["train", "--set", f"output_dir={tmp_path}"] + args) == EXIT_CONFIG


def test_missing_dataset(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("INFOMORPH_MNIST_DIR", raising=False)
    assert main(["train", "--set", f"output_dir={tmp_path}"]) == EXIT_DATA
    assert main(["train", "--set", f"mnist_dir={tmp_path / 'none'}"]) == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_env_fallback(mnist_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("INFOMORPH_MNIST_DIR", str(mnist_dir))
    assert main(["train", "--set", f"output_dir={tmp_path}", "--set", "n_hidden=4", "--set", "epochs=1"]) == EXIT_OK


def test_numerical_failure_exit_code(mnist_dir, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("non-finite goal", 3)

    monkeypatch.setattr("infomorph.cli.train", boom)
    assert main(["train"] + quick(mnist_dir, tmp_path)) == EXIT_NUMERIC


def _write_csv(path, rows, header="y,f,c"):
    path.write_text(header + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


def test_pid_xor_matches_oracle(tmp_path, capsys):
    path = tmp_path / "xor.csv"
    _write_csv(path, [(1 if f ^ c else -1, f, c) for f in (0, 1) for c in (0, 1)])
    assert main(["pid", str(path), "--json", str(tmp_path / "a.json")]) == EXIT_OK
    values = json.loads((tmp_path / "a.json").read_text())["atoms"]["values"]
    p = gate_joint((0, 1, 1, 0))
    expected = {oracles.label(a, "FC"): v for a, v in oracles.atoms(p).items()}
    for label, v in zip(build_lattice(2).labels, values):
        assert v == pytest.approx(expected[label], abs=1e-12)
    out = capsys.readouterr().out
    assert "{FC}" in out and "I(Y;FC)" in out


def test_pid_constant_target(tmp_path):
    path = tmp_path / "c.csv"
    rng = np.random.default_rng(0)
    _write_csv(path, [(1, *rng.normal(size=3)) for _ in range(50)], "y,f,c,l")
    main(["pid", str(path), "--json", str(tmp_path / "a.json")])
    data = json.loads((tmp_path / "a.json").read_text())
    assert len(data["atoms"]["values"]) == 19 and np.allclose(data["atoms"]["values"], 0)
    assert len(data["residuals"]) == 7


def test_pid_bivariate_has_five_values(tmp_path):
    path = tmp_path / "b.csv"
    rng = np.random.default_rng(1)
    _write_csv(path, [(int(rng.choice([-1, 1])), *rng.normal(size=2)) for _ in range(50)])
    main(["pid", str(path), "--json", str(tmp_path / "a.json")])
    data = json.loads((tmp_path / "a.json").read_text())
    assert len(data["atoms"]["values"]) == 5 and len(data["residuals"]) == 3
    assert max(abs(r) for r in data["residuals"]) < 1e-10


def test_pid_reports_bad_lines(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("y,f,c\n1,0,0\n0,1,1\n1,2\n-1,a,1\n")
    assert main(["pid", str(path)]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "line 3" in err and "line 4" in err and "line 5" in err and "line 2" not in err


def test_search_writes_trial_log(mnist_dir, tmp_path):
    out = tmp_path / "s"
    assert main(["search", "--sampler", "random", "--budget", "3"]
                + quick(mnist_dir, out, "--set", "trial_epochs=1")) == EXIT_OK
    lines = (out / "trials.jsonl").read_text().splitlines()
    assert len(lines) == 3 and all("gamma" in json.loads(l) for l in lines)
    assert json.loads((out / "best_goal.json").read_text())["kind"] == "goal"
    assert (out / "search.svg").exists()
    summary = json.loads((out / "search_summary.json").read_text())
    assert summary["resolved_config"]["search"]["budget"] == 3


def test_search_budget_error(mnist_dir, tmp_path):
    assert main(["search", "--budget", "2"] + quick(mnist_dir, tmp_path, "--set", "trial_epochs=1")) == EXIT_CONFIG


def test_ablate_modes(mnist_dir, tmp_path):
    out = tmp_path / "a"
    base = quick(mnist_dir, out, "--set", "trial_epochs=1")
    assert main(["ablate", "--mode", "individual"] + base) == EXIT_OK
    assert len((out / "ablation_individual.csv").read_text().splitlines()) == 20
    assert main(["ablate", "--mode", "cumulative", "--set",
                 f"individual_csv={out / 'ablation_individual.csv'}"] + base) == EXIT_OK
    rows = (out / "ablation_cumulative.csv").read_text().splitlines()
    assert rows[0] == "step,zeroed,remaining,accuracy" and len(rows) == 6
    assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(5))
    assert (out / "ablation_cumulative.svg").exists()


def test_parse_goal_forms(tmp_path):
    assert parse_goal("heuristic")[3] == 1.0
    assert len(parse_goal("optimized")) == 19
    assert parse_goal("{F}{C}:0.5")[3] == 0.5
    assert parse_goal(",".join(["0"] * 19)) == (0.0,) * 19
    with pytest.raises(ValueError):
        parse_goal("{Q}:1")


def test_resolved_config_lists_every_key():
    text = RunConfig().to_ini()
    for key in ("n_hidden", "lr_hidden", "output_context_gain", "mnist_dir", "budget", "mode"):
        assert f"{key} = " in text
