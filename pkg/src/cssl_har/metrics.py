"""Accuracy matrix and the four continual-learning summary metrics.

``A[i, j]`` (0-based here) is the test accuracy on task ``j`` after training
through task ``i``. Columns for tasks not yet trained are still evaluated so
forward transfer can be read off the super-diagonal.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx


def predict(model, x: np.ndarray, batch: int = 256) -> np.ndarray:
    with nx.no_grad():
        logits = [model.classify(model.encode(x[i:i + batch])).data for i in range(0, len(x), batch)]
    return np.concatenate(logits).argmax(axis=1)


def accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        raise ValueError("empty test set")
    return float(np.mean(pred == labels))


def evaluate(model, task_test_sets: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """One matrix row: per-task accuracy of argmax over every class seen so far."""
    row = []
    for x, y in task_test_sets:
        if len(y) == 0:
            raise ValueError("empty test set")
        if model.classifier.n_classes == 0:
            row.append(0.0)
            continue
        row.append(accuracy(predict(model, x), y))
    return np.array(row)


def final_accuracy(A) -> float:
    A = np.asarray(A, dtype=np.float64)
    return float(A[-1].mean())


def continual_accuracy(A) -> float:
    A = np.asarray(A, dtype=np.float64)
    T = A.shape[0]
    return float(np.mean([A[i, :i + 1].mean() for i in range(T)]))


def forgetting(A) -> float:
    A = np.asarray(A, dtype=np.float64)
    T = A.shape[0]
    if T < 2:
        raise ValueError("forgetting needs at least two tasks")
    drops = [A[j:T - 1, j].max() - A[T - 1, j] for j in range(T - 1)]
    return float(np.mean(drops))


def forward_transfer(A, b) -> float:
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    T = A.shape[0]
    if T < 2:
        raise ValueError("forward transfer needs at least two tasks")
    return float(np.mean([A[j - 1, j] - b[j] for j in range(1, T)]))


def summarize(A, b) -> dict:
    return {
        "fa": final_accuracy(A),
        "ca": continual_accuracy(A),
        "forgetting": forgetting(A) if len(A) > 1 else 0.0,
        "forward_transfer": forward_transfer(A, b) if len(A) > 1 else 0.0,
    }


# ---------------------------------------------------------------------------
# serialisation

def matrix_header(n_tasks: int) -> list[str]:
    return ["after_task"] + [f"task_{j + 1}" for j in range(n_tasks)]


def format_row(i: int, row: Sequence[float]) -> list[str]:
    return [str(i)] + [repr(float(v)) for v in row]


def matrix_csv_text(A) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(matrix_header(A.shape[1]))
    for i, row in enumerate(A, start=1):
        w.writerow(format_row(i, row))
    return buf.getvalue()


def write_matrix_csv(path: str | Path, A) -> None:
    Path(path).write_text(matrix_csv_text(A))


def read_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "after_task":
        raise ValueError(f"{path} is not an accuracy matrix")
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64).reshape(-1, len(rows[0]) - 1)


def metrics_json(metrics: dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"


def write_baseline_csv(path: str | Path, b) -> None:
    b = np.asarray(b, dtype=np.float64)
    header = ",".join(f"task_{j + 1}" for j in range(len(b)))
    Path(path).write_text(header + "\n" + ",".join(repr(float(v)) for v in b) + "\n")


def read_baseline_csv(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text().split()
    return np.array([float(v) for v in lines[1].split(",")], dtype=np.float64)
