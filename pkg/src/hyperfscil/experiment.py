"""Running configured experiments and writing their results to disk."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

from .config import SWEEPABLE
from .data import generate_synthetic, load_csv_dataset
from .errors import ConfigError
from .protocol import build_sessions, run_protocol

RESULT_COLUMNS = ("session", "overall_acc", "novel_acc", "known_acc", "unknown_acc")
SWEEP_COLUMNS = ("value", "final_acc", "pd", "average_acc")


def load_dataset(cfg):
    if cfg.dataset == "synthetic":
        return generate_synthetic(
            cfg.num_classes, cfg.train_per_class, cfg.test_per_class, cfg.dim, cfg.separation, cfg.seed
        )
    return load_csv_dataset(cfg.dataset)


def run_experiment(cfg, dataset=None, **kwargs):
    """Build the session plan for ``cfg`` and run the full protocol."""
    dataset = load_dataset(cfg) if dataset is None else dataset
    plan = build_sessions(dataset, cfg.base_classes, cfg.ways, cfg.shots, cfg.sessions, cfg.seed)
    return run_protocol(dataset, plan, cfg.model_config(dataset.dim), cfg.seed, **kwargs)


def _cell(value):
    return "" if value is None else f"{value:.2f}"


def results_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in report.rows():
        writer.writerow([row["session"]] + [_cell(row[c]) for c in RESULT_COLUMNS[1:]])
    return buf.getvalue()


def summary_dict(report, cfg):
    return {
        "performance_drop": report.performance_drop,
        "average_accuracy": report.average_accuracy,
        "final_accuracy": report.final_accuracy,
        "accuracies": report.accuracies,
        "novel_accuracies": report.novel_accuracies,
        "known_accuracy": report.known_accuracy,
        "unknown_accuracy": report.unknown_accuracy,
        "closed_set_accuracy": report.closed_set_accuracy,
        "session_classes": report.session_classes,
        "seed": cfg.seed,
        "config": cfg.to_mapping(),
    }


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_results(report, cfg, out_dir):
    """Write ``sessions.csv`` (2-decimal rounding) and ``summary.json`` (full precision).

    Returns the two paths. Existing files are replaced atomically.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sessions.csv")
    json_path = os.path.join(out_dir, "summary.json")
    _atomic_write(csv_path, results_csv(report))
    _atomic_write(json_path, json.dumps(summary_dict(report, cfg), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def run_sweep(cfg, param, values, dataset=None):
    """One protocol run per value of ``param`` with everything else fixed.

    All values are validated before the first run starts. Returns rows of
    (value, final accuracy, PD, average accuracy).
    """
    if param not in SWEEPABLE:
        raise ConfigError(f"{param}: not sweepable (choose from {', '.join(SWEEPABLE)})")
    configs = [cfg.replace(**{param: float(v)}) for v in values]
    dataset = load_dataset(cfg) if dataset is None else dataset
    rows = []
    for value, point in zip(values, configs):
        report = run_experiment(point, dataset)
        rows.append((float(value), report.final_accuracy, report.performance_drop, report.average_accuracy))
    return rows


def sweep_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for value, final, pd, avg in rows:
        writer.writerow([repr(value), f"{final:.2f}", f"{pd:.2f}", f"{avg:.2f}"])
    return buf.getvalue()


def write_sweep(rows, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    _atomic_write(path, sweep_csv(rows))
    return path

