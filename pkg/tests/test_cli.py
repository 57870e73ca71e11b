import json

import pytest

from hyperfscil.cli import main
from hyperfscil.config import ExperimentConfig, parse_config, parse_config_text
from hyperfscil.data import generate_synthetic, load_csv_dataset
from hyperfscil.errors import ConfigError
from hyperfscil.experiment import emit_results, run_experiment, run_sweep, sweep_csv
from hyperfscil.protocol import SessionReport, average_accuracy, performance_drop

REFERENCE_RUN = [63.55, 62.88, 61.05, 58.13, 55.68, 54.59, 52.93, 50.39, 49.48]

FAST_TEXT = """\
# quick toy run
num_classes = 8
train_per_class = 20
test_per_class = 5
base_classes = 4
sessions = 2
base_epochs = 8
base_milestones = 6:0.1
incremental_epochs = 4
"""


@pytest.fixture()
def fast_cfg():
    return parse_config_text(FAST_TEXT)


def _report(accs):
    return SessionReport(
        accuracies=list(accs),
        novel_accuracies=[None] + [50.0] * (len(accs) - 1),
        known_accuracy=63.55,
        unknown_accuracy=70.25,
        closed_set_accuracy=80.0,
        performance_drop=performance_drop(accs),
        average_accuracy=average_accuracy(accs),
    )


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    assert (cfg.beta, cfg.curvature, cfg.tau, cfg.eta, cfg.threshold) == (0.7, 0.1, 1.0, 1.0, 0.75)
    assert cfg == ExperimentConfig()


def test_config_constraint_messages():
    with pytest.raises(ConfigError, match=r"beta must lie in \[0,1\]"):
        parse_config_text("beta = 1.2")
    assert parse_config_text("beta = 0.5").gamma == pytest.approx(0.5)
    with pytest.raises(ConfigError, match="unknown key 'alpha'"):
        parse_config_text("alpha = 1")
    with pytest.raises(ConfigError, match="line 2: duplicate"):
        parse_config_text("tau = 1\ntau = 2")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("tau 1")
    with pytest.raises(ConfigError, match="curvature"):
        parse_config_text("curvature = 0")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/path.cfg")


def test_list_keys_round_trip(fast_cfg):
    cfg = parse_config_text("hidden_dims = 16,8\nbase_milestones = 10:0.1,20:0.5")
    assert cfg.hidden_dims == (16, 8)
    assert cfg.base_milestones == ((10, 0.1), (20, 0.5))
    assert parse_config_text(cfg.to_text()) == cfg
    assert ExperimentConfig.from_mapping(fast_cfg.to_mapping()) == fast_cfg


def test_emit_results_reference_sequence(tmp_path):
    cfg = ExperimentConfig()
    csv_path, json_path = emit_results(_report(REFERENCE_RUN), cfg, tmp_path)
    summary = json.loads(open(json_path).read())
    assert round(summary["performance_drop"], 2) == 14.07
    assert round(summary["average_accuracy"], 2) == 56.52
    assert ExperimentConfig.from_mapping(summary["config"]) == cfg
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "session,overall_acc,novel_acc,known_acc,unknown_acc"
    assert lines[1] == "1,63.55,,63.55,70.25"
    assert lines[2] == "2,62.88,50.00,,"
    assert len(lines) == 10


def test_emit_single_session_and_overwrite(tmp_path):
    emit_results(_report(REFERENCE_RUN), ExperimentConfig(), tmp_path)
    csv_path, _ = emit_results(_report([71.0]), ExperimentConfig(), tmp_path)
    assert len(open(csv_path).read().splitlines()) == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["sessions.csv", "summary.json"]


def test_sweep_rows_and_equivalences(fast_cfg):
    data = generate_synthetic(8, 20, 5, 8, 8.0, 0)
    rows = run_sweep(fast_cfg, "beta", [0.0, 0.3, 0.7, 1.0], dataset=data)
    assert [r[0] for r in rows] == [0.0, 0.3, 0.7, 1.0]
    euclid = run_experiment(fast_cfg.replace(beta=1.0), data)
    assert rows[-1][1:] == (euclid.final_accuracy, euclid.performance_drop, euclid.average_accuracy)
    single = run_sweep(fast_cfg, "tau", [1.0], dataset=data)
    plain = run_experiment(fast_cfg, data)
    assert single == [(1.0, plain.final_accuracy, plain.performance_drop, plain.average_accuracy)]
    assert sweep_csv(single).splitlines()[0] == "value,final_acc,pd,average_acc"


def test_sweep_validates_before_running(fast_cfg, monkeypatch):
    import hyperfscil.experiment as experiment

    monkeypatch.setattr(experiment, "run_experiment", lambda *a, **k: pytest.fail("ran before validation"))
    with pytest.raises(ConfigError, match="beta"):
        run_sweep(fast_cfg, "beta", [0.5, 1.5])
    with pytest.raises(ConfigError, match="sweepable"):
        run_sweep(fast_cfg, "eta", [0.5])


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "blobs.csv"
    assert main(["gen-data", "--classes", "8", "--train", "20", "--test", "5", "--dim", "8",
                 "--sep", "8", "--seed", "0", "--out", str(data)]) == 0
    assert load_csv_dataset(data) == generate_synthetic(8, 20, 5, 8, 8.0, 0)

    cfg = tmp_path / "run.cfg"
    cfg.write_text(FAST_TEXT + f"dataset = {data}\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "sessions.csv").read_bytes()
    assert first == (tmp_path / "b" / "sessions.csv").read_bytes()
    assert len(first.splitlines()) == 4

    sweep_out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(cfg), "--param", "threshold", "--values", "0.5,0.9",
                 "--out", str(sweep_out)]) == 0
    assert len(sweep_out.read_text().splitlines()) == 3
    capsys.readouterr()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("beta = 1.2\n")
    assert main(["run", "--config", str(bad)]) == 2

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("split,class,f0,f1\ntrain,0,1,2\ntrain,0,1\n")
    cfg = tmp_path / "data.cfg"
    cfg.write_text(f"dataset = {ragged}\n")
    assert main(["run", "--config", str(cfg)]) == 3
    assert "line 3" in capsys.readouterr().err

    few = tmp_path / "few.cfg"
    few.write_text("num_classes = 6\nbase_classes = 6\nsessions = 2\n")
    assert main(["run", "--config", str(few)]) == 5

    assert main(["sweep", "--config", str(few), "--param", "tau", "--values", "a,b"]) == 2

    blowup = tmp_path / "blowup.cfg"
    blowup.write_text("base_lr = 1e30\nmax_grad_norm = 0\nbase_epochs = 3\nnum_classes = 8\nbase_classes = 4\n")
    assert main(["run", "--config", str(blowup), "--out", str(tmp_path / "x")]) == 4
    assert "non-finite" in capsys.readouterr().err


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--seed", "0", "--fixtures", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok") == 5
