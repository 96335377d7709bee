"""Run a whole class-incremental experiment and persist its outputs.

Output layout per run::

    <output_dir>/<run-id>/
        config.echo       resolved configuration (re-loadable)
        matrix.csv        one row per finished task, rewritten after each task
        baseline.csv      untrained-model accuracy per task
        metrics.json      FA / CA / forgetting / forward transfer + run identity
        run.json          metadata that may vary between runs (timestamps)
        checkpoints/      task_<t>.ckpt after each task
        plots/            SVG charts
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfgmod
from .config import ExperimentConfig
from .continual import LambdaSchedule, TaskContext, new_ssl_state, train_task
from .dataio import (ReplayBuffer, TaskSpec, Window, apply_normalization, canonical_wisdm_task_spec,
                     fit_normalization, make_task_spec, parse_wisdm, read_window_cache, split_subjects, stack,
                     synth_har, window_signal)
from .metrics import (evaluate, matrix_csv_text, metrics_json, read_baseline_csv, read_matrix_csv, summarize,
                      write_baseline_csv)
from .model import Model, save_checkpoint
from .plots import emit_plots, grouped_bar_chart

log = logging.getLogger(__name__)

OUTPUT_ENV = "CSSL_HAR_OUT"


@dataclass
class PreparedData:
    spec: TaskSpec
    train: list[tuple[np.ndarray, np.ndarray]]  # per task, labels as output indices
    test: list[tuple[np.ndarray, np.ndarray]]
    train_windows: list[list[Window]]


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "out"))


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def load_windows(cfg: ExperimentConfig, seed: int) -> list[Window]:
    d = cfg.data
    if d.source == "synthetic":
        return synth_har(d.n_classes, d.n_subjects, d.windows_per_class, seed=seed, length=d.window_length,
                         noise=d.noise)
    if d.source == "wisdm":
        windows = []
        for rec in parse_wisdm(d.path):
            windows.extend(window_signal(rec, d.window_length))
        return windows
    if d.source == "cache":
        return read_window_cache(d.path)
    raise ValueError(f"unknown data source {d.source!r}")


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    data_seed, split_seed, task_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.run.seed).spawn(3))
    if cfg.data.source == "synthetic":
        # the dataset itself stays fixed across run seeds
        data_seed = 0
    windows = load_windows(cfg, data_seed)
    if not windows:
        raise ValueError("dataset produced no windows")
    train, test = split_subjects(windows, cfg.data.holdout_fraction, seed=split_seed)
    stats = fit_normalization(train)
    train = [apply_normalization(w, stats) for w in train]
    test = [apply_normalization(w, stats) for w in test]

    classes = sorted({w.label for w in windows if w.label is not None})
    if cfg.tasks.source == "canonical":
        spec = canonical_wisdm_task_spec()
        missing = set(spec.classes) - set(classes)
        if missing:
            raise ValueError(f"canonical task split needs all 18 WISDM classes; missing ids {sorted(missing)}")
    else:
        spec = make_task_spec(classes, cfg.tasks.n_tasks, seed=task_seed)
    index = spec.output_index()

    def per_task(ws: list[Window]):
        out, raw = [], []
        for group in spec.tasks:
            sel = [Window(w.values, index[w.label], w.subject_id) for w in ws if w.label in group]
            x, y, _ = stack(sel)
            out.append((x, y))
            raw.append(sel)
        return out, raw

    tr, raw = per_task(train)
    te, _ = per_task(test)
    for t, (x, _) in enumerate(te, start=1):
        if len(x) == 0:
            raise ValueError(f"task {t} has no test windows; adjust the holdout fraction or data")
    return PreparedData(spec, tr, te, raw)


def random_baseline(cfg: ExperimentConfig, data: PreparedData, n_seeds: int, seed: int) -> np.ndarray:
    """Accuracy of untrained models with a task-1-width head, averaged over seeds."""
    rows = []
    for rng in _streams(seed, n_seeds):
        m = Model.build(cfg.model, rng)
        m.grow_classifier(len(data.spec.tasks[0]), rng)
        rows.append(evaluate(m, data.test))
    return np.mean(rows, axis=0)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def run_experiment(cfg: ExperimentConfig, out_root: str | Path | None = None) -> Path:
    """Train tasks 1..T; after each, checkpoint and append a matrix row."""
    root = Path(out_root or cfg.run.output_dir or default_output_root())
    run_dir = root / cfg.run_id()
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / "config.echo").write_text(cfgmod.dumps(cfg))
    started = time.time()

    data = prepare_data(cfg)
    init_rng, train_rng, base_seed = _streams(cfg.run.seed, 3)
    T = len(data.spec)
    baseline = random_baseline(cfg, data, cfg.run.baseline_seeds, int(base_seed.integers(2**31)))
    write_baseline_csv(run_dir / "baseline.csv", baseline)

    model = Model.build(cfg.model, init_rng)
    model.metadata.update({"augment_composition": "rotation>scaling>warp",
                           "replay_feeds_ssl": True, "distill_predictor": "separate"})
    ssl_state = new_ssl_state(model, cfg.train)
    replay = ReplayBuffer(cfg.run.replay_fraction)
    teacher = None
    rows: list[np.ndarray] = []
    for t in range(1, T + 1):
        log.info("task %d/%d (%s)", t, T, cfg.train.mode)
        model.grow_classifier(len(data.spec.tasks[t - 1]), init_rng)
        x, y = data.train[t - 1]
        ctx = TaskContext(t, data.spec.tasks[t - 1], replay, teacher)
        res = train_task(model, ctx, x, y, cfg.train, ssl_state, train_rng, task_windows=data.train_windows[t - 1])
        teacher, replay = res.teacher, res.replay
        save_checkpoint(run_dir / "checkpoints" / f"task_{t}.ckpt", teacher)
        rows.append(evaluate(model, data.test))
        _atomic_write(run_dir / "matrix.csv", matrix_csv_text(np.array(rows)))

    A = np.array(rows)
    metrics = summarize(A, baseline)
    metrics.update({"lambda_schedule": str(cfg.train.schedule), "mode": cfg.train.mode,
                    "ssl_method": cfg.train.ssl_method, "seed": cfg.run.seed})
    _atomic_write(run_dir / "metrics.json", metrics_json(metrics))
    emit_plots(run_dir, baseline)
    run_meta = {"started": started, "finished": time.time(), "tasks": data.spec.tasks, "run_id": cfg.run_id(),
                "model_metadata": model.metadata}
    (run_dir / "run.json").write_text(json.dumps(run_meta, indent=2) + "\n")
    return run_dir


def read_metrics(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "metrics.json").read_text())


def sweep(base: ExperimentConfig, schedules: Sequence[LambdaSchedule], out_root: str | Path | None = None) -> Path:
    """One run per schedule (same seed and data); writes comparison.csv and a bar chart.

    A failing schedule is recorded in the CSV with its error and the sweep
    continues, so finished runs are never lost.
    """
    if not schedules:
        raise ValueError("sweep needs at least one schedule")
    root = Path(out_root or base.run.output_dir or default_output_root())
    sweep_dir = root / f"sweep-{base.train.mode}-{base.train.ssl_method}-s{base.run.seed}"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for i, sched in enumerate(schedules):
        cfg = cfgmod.override(base, {"train.schedule": sched, "run.run_id": f"{i:02d}-l{sched}"})
        try:
            run_dir = run_experiment(cfg, sweep_dir)
        except Exception as exc:  # keep partial results
            log.error("schedule %s failed: %s", sched, exc)
            failures.append((str(sched), str(exc)))
            continue
        m = read_metrics(run_dir)
        rows.append((str(sched), m["fa"], m["ca"], m["forgetting"], m["forward_transfer"]))
        _write_comparison(sweep_dir, rows, failures)
    _write_comparison(sweep_dir, rows, failures)
    if rows:
        (sweep_dir / "comparison.svg").write_text(grouped_bar_chart(
            "Importance coefficient schedules", [r[0] for r in rows], ["FA", "CA", "F", "FT"],
            [r[1:] for r in rows]))
    if failures and not rows:
        raise RuntimeError(f"every schedule failed; first error: {failures[0][1]}")
    return sweep_dir


def _write_comparison(sweep_dir: Path, rows, failures) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schedule", "fa", "ca", "forgetting", "forward_transfer"])
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
    for sched, err in failures:
        w.writerow([sched, "error", err, "", ""])
    _atomic_write(sweep_dir / "comparison.csv", buf.getvalue())


def metrics_from_matrix(matrix_path: str | Path, baseline_path: str | Path | None = None) -> dict:
    A = read_matrix_csv(matrix_path)
    if baseline_path is None:
        candidate = Path(matrix_path).with_name("baseline.csv")
        baseline_path = candidate if candidate.exists() else None
    b = read_baseline_csv(baseline_path) if baseline_path else np.zeros(A.shape[1])
    return summarize(A, b)
