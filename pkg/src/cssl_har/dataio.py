"""WISDM parsing, windowing, normalisation, subject/task splits and replay."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WINDOW_LENGTH = 384
N_CHANNELS = 3

# WISDM2019 activity letters in the dataset documentation order ('N' unused).
ACTIVITY_CODES = "ABCDEFGHIJKLMOPQRS"
ACTIVITY_NAMES = (
    "Walking",
    "Jogging",
    "Stairs",
    "Sitting",
    "Standing",
    "Typing",
    "Brushing Teeth",
    "Eating Soup",
    "Eating Chips",
    "Eating Pasta",
    "Drinking from Cup",
    "Eating Sandwich",
    "Kicking (Soccer Ball)",
    "Playing Catch with Tennis Ball",
    "Dribbling (Basketball)",
    "Writing",
    "Clapping",
    "Folding Clothes",
)
ACTIVITY_TO_CLASS = {code: i for i, code in enumerate(ACTIVITY_CODES)}

_CANONICAL_TASKS = (
    ("Folding Clothes", "Stairs", "Walking"),
    ("Sitting", "Drinking from Cup", "Eating Chips"),
    ("Standing", "Eating Sandwich", "Clapping"),
    ("Brushing Teeth", "Jogging", "Eating Pasta"),
    ("Eating Soup", "Writing", "Typing"),
    ("Playing Catch with Tennis Ball", "Kicking (Soccer Ball)", "Dribbling (Basketball)"),
)

CACHE_MAGIC = b"CSSLHAR1"


class WisdmParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class RawRecording:
    subject_id: int
    activity: int
    samples: np.ndarray  # (T, 4): timestamp, x, y, z

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class Window:
    values: np.ndarray
    label: int | None
    subject_id: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[1:] != (N_CHANNELS,) or self.values.ndim != 2:
            raise ValueError(f"window must be (T, 3), got {self.values.shape}")


@dataclass
class TaskSpec:
    tasks: list[list[int]]

    def __post_init__(self):
        seen: set[int] = set()
        for group in self.tasks:
            if seen.intersection(group):
                raise ValueError("task class sets overlap")
            seen.update(group)

    @property
    def classes(self) -> list[int]:
        return [c for group in self.tasks for c in group]

    def __len__(self) -> int:
        return len(self.tasks)

    def output_index(self) -> dict[int, int]:
        """Class id -> classifier output position (task order)."""
        return {c: i for i, c in enumerate(self.classes)}


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class ReplayBuffer:
    fraction: float = 0.01
    windows: list[Window] = field(default_factory=list)
    contributed: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.windows)


# ---------------------------------------------------------------------------
# parsing and windowing

def parse_wisdm(path: str | Path) -> list[RawRecording]:
    """Read a WISDM raw accelerometer file.

    Lines look like ``1600,A,252207666810782,-0.36,8.79,1.05;``. Consecutive
    lines with the same subject and activity form one recording; a timestamp
    that fails to increase also starts a new one.
    """
    recordings: list[RawRecording] = []
    key = None
    rows: list[tuple[float, float, float, float]] = []
    last_ts = None

    def flush():
        if rows:
            recordings.append(RawRecording(key[0], key[1], np.array(rows, dtype=np.float64)))

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.endswith(";"):
                line = line[:-1]
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 6 or any(p == "" for p in parts):
                raise WisdmParseError(line_no, f"expected 6 fields, found {len(parts)}")
            try:
                subject = int(parts[0])
                ts = float(parts[2])
                xyz = tuple(float(p) for p in parts[3:])
            except ValueError as exc:
                raise WisdmParseError(line_no, str(exc)) from None
            code = parts[1]
            if code not in ACTIVITY_TO_CLASS:
                raise WisdmParseError(line_no, f"unknown activity code {code!r}")
            if not all(math.isfinite(v) for v in xyz):
                raise WisdmParseError(line_no, "non-finite sensor value")
            new_key = (subject, ACTIVITY_TO_CLASS[code])
            if new_key != key or (last_ts is not None and ts <= last_ts):
                flush()
                key, rows = new_key, []
            rows.append((ts, *xyz))
            last_ts = ts
    flush()
    return recordings


def window_signal(rec: RawRecording, length: int = WINDOW_LENGTH) -> list[Window]:
    """Non-overlapping windows; the trailing partial window is dropped."""
    if length < 1:
        raise ValueError("window length must be >= 1")
    xyz = rec.samples[:, 1:4]
    n = len(xyz) // length
    return [Window(xyz[i * length:(i + 1) * length].copy(), rec.activity, rec.subject_id) for i in range(n)]


def stack(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Windows -> (values (N, T, 3), labels with -1 for unlabelled, subjects)."""
    if not windows:
        return np.zeros((0, WINDOW_LENGTH, N_CHANNELS)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    x = np.stack([w.values for w in windows])
    y = np.array([-1 if w.label is None else w.label for w in windows], dtype=np.int64)
    s = np.array([w.subject_id for w in windows], dtype=np.int64)
    return x, y, s


# ---------------------------------------------------------------------------
# normalisation

def fit_normalization(train: Sequence[Window]) -> NormalizationStats:
    if len(train) == 0:
        raise ValueError("cannot fit normalisation on an empty set")
    allv = np.concatenate([w.values for w in train], axis=0)
    return NormalizationStats(allv.mean(axis=0), allv.std(axis=0))


def _guard(std: np.ndarray) -> np.ndarray:
    return np.maximum(std, 1e-8)


def apply_normalization(w: Window, s: NormalizationStats) -> Window:
    return Window((w.values - s.mean) / _guard(s.std), w.label, w.subject_id)


def denormalize(w: Window, s: NormalizationStats) -> Window:
    return Window(w.values * _guard(s.std) + s.mean, w.label, w.subject_id)


# ---------------------------------------------------------------------------
# splits

def split_subjects(windows: Sequence[Window], holdout_fraction: float = 0.22, seed=0) -> tuple[list[Window], list[Window]]:
    """Hold out whole subjects; ``round(fraction * n_subjects)`` go to test."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout fraction must lie in (0, 1)")
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) < 2:
        raise ValueError("need at least two subjects to split")
    n_test = min(max(round(holdout_fraction * len(subjects)), 1), len(subjects) - 1)
    rng = np.random.default_rng(seed)
    test_subjects = set(rng.permutation(subjects)[:n_test].tolist())
    train = [w for w in windows if w.subject_id not in test_subjects]
    test = [w for w in windows if w.subject_id in test_subjects]
    return train, test


def make_task_spec(class_ids: Iterable[int], n_tasks: int, seed=None, assignment: Sequence[Sequence[int]] | None = None) -> TaskSpec:
    """Partition classes into ``n_tasks`` equal groups, randomly or as given."""
    classes = sorted(set(class_ids))
    if assignment is not None:
        spec = TaskSpec([list(g) for g in assignment])
        if sorted(spec.classes) != classes:
            raise ValueError("explicit assignment does not cover the class set")
        return spec
    if n_tasks < 1 or len(classes) % n_tasks:
        raise ValueError(f"{len(classes)} classes cannot be split evenly into {n_tasks} tasks")
    per = len(classes) // n_tasks
    order = np.random.default_rng(seed).permutation(classes).tolist()
    return TaskSpec([order[i * per:(i + 1) * per] for i in range(n_tasks)])


def canonical_wisdm_task_spec() -> TaskSpec:
    """The six three-class WISDM2019 tasks used in the reference study."""
    by_name = {name: i for i, name in enumerate(ACTIVITY_NAMES)}
    return TaskSpec([[by_name[n] for n in group] for group in _CANONICAL_TASKS])


# ---------------------------------------------------------------------------
# replay

def replay_quota(fraction: float, n: int) -> int:
    # tolerance keeps e.g. 0.07 * 100 from rounding up to 8
    return int(math.ceil(fraction * n - 1e-9)) if fraction > 0 else 0


def extend_replay(buffer: ReplayBuffer, task_windows: Sequence[Window], seed=0) -> ReplayBuffer:
    """Return a buffer holding the old exemplars plus this task's share.

    ``ceil(fraction * len(task_windows))`` windows are drawn, stratified by
    class: every class gets one exemplar while the quota allows, the rest is
    split in proportion to class size.
    """
    if any(w.label is None for w in task_windows):
        raise ValueError("replay only stores labelled windows")
    quota = min(replay_quota(buffer.fraction, len(task_windows)), len(task_windows))
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, w in enumerate(task_windows):
        by_class.setdefault(w.label, []).append(i)
    labels = sorted(by_class)
    counts = np.array([len(by_class[c]) for c in labels])

    alloc = np.zeros(len(labels), dtype=int)
    if quota >= len(labels):
        alloc[:] = 1
        rest = quota - len(labels)
        if rest:
            share = (counts - 1) / max((counts - 1).sum(), 1) * rest
            alloc += np.floor(share).astype(int)
            left = rest - (alloc.sum() - len(labels))
            for j in np.argsort(-(share - np.floor(share)), kind="stable")[:left]:
                alloc[j] += 1
        alloc = np.minimum(alloc, counts)
    elif quota > 0:
        alloc[rng.choice(len(labels), size=quota, replace=False)] = 1

    picked: list[Window] = []
    for c, n in zip(labels, alloc):
        if n:
            idx = rng.choice(by_class[c], size=n, replace=False)
            picked.extend(task_windows[i] for i in sorted(idx))
    return ReplayBuffer(buffer.fraction, list(buffer.windows) + picked, list(buffer.contributed) + [len(picked)])


# ---------------------------------------------------------------------------
# synthetic data

def synth_har(n_classes: int, n_subjects: int, windows_per_class: int, seed=0, length: int = WINDOW_LENGTH,
              noise: float = 0.3) -> list[Window]:
    """Tri-axial activity-like signals, one parametric family per class.

    Each class has its own gravity direction, base frequency, per-axis
    amplitudes, second-harmonic weight and phase-noise level. Subjects
    perturb amplitude and tempo slightly. Windows are spread round-robin
    over subjects.
    """
    if min(n_classes, n_subjects, windows_per_class, length) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    gravity = rng.normal(size=(n_classes, 3))
    gravity /= np.linalg.norm(gravity, axis=1, keepdims=True)
    base_freq = 0.4 + 2.6 * (rng.permutation(n_classes) + rng.uniform(0.1, 0.9, n_classes)) / n_classes  # Hz at 20 Hz sampling
    amps = rng.uniform(0.3, 1.5, size=(n_classes, 3))
    harmonic = rng.uniform(0.0, 0.6, size=n_classes)
    phase_noise = rng.uniform(0.005, 0.08, size=n_classes)
    subj_amp = rng.uniform(0.85, 1.15, size=n_subjects)
    subj_tempo = rng.uniform(0.93, 1.07, size=n_subjects)

    t = np.arange(length) / 20.0
    out: list[Window] = []
    for c in range(n_classes):
        for i in range(windows_per_class):
            s = i % n_subjects
            phase = rng.uniform(0, 2 * np.pi, size=3)[None, :] + np.cumsum(rng.normal(0, phase_noise[c], size=(length, 3)), axis=0)
            arg = 2 * np.pi * base_freq[c] * subj_tempo[s] * t[:, None] + phase
            sig = amps[c] * subj_amp[s] * (np.sin(arg) + harmonic[c] * np.sin(2 * arg))
            vals = gravity[c] + sig + rng.normal(0, noise, size=(length, 3))
            out.append(Window(vals, c, s))
    return out


# ---------------------------------------------------------------------------
# binary window cache

def write_window_cache(path: str | Path, windows: Sequence[Window]) -> None:
    """Header (magic, count, length, channels) + float64 LE blob, JSON sidecar."""
    path = Path(path)
    x, y, s = stack(windows)
    n = len(windows)
    length = x.shape[1] if n else 0
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<QQQ", n, length, N_CHANNELS))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    sidecar = {"labels": [None if w.label is None else int(w.label) for w in windows],
               "subject_ids": s.tolist()}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def read_window_cache(path: str | Path) -> list[Window]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != CACHE_MAGIC:
        raise ValueError(f"{path} is not a window cache (bad magic)")
    n, length, channels = struct.unpack_from("<QQQ", raw, 8)
    data = np.frombuffer(raw, dtype="<f8", offset=32, count=n * length * channels)
    data = data.reshape(n, length, channels).astype(np.float64)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return [Window(data[i].copy(), meta["labels"][i], meta["subject_ids"][i]) for i in range(n)]
