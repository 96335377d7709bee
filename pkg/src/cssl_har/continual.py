"""Kaizen, CaSSLe and no-distillation training on a class-incremental stream.

Four loss terms are combined per mode:

* ``fe_ct``  new-task SSL loss of the feature extractor
* ``fe_kd``  SSL-style distillation from the previous feature extractor
* ``clf_ct`` cross-entropy of the classifier on labelled windows (incl. replay)
* ``clf_kd`` cross-entropy against the previous classifier's soft predictions,
  weighted by the importance coefficient ``lambda(t) = a + b * (t - 1)``
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .augment import AugmentConfig, two_view_batch
from .dataio import ReplayBuffer, Window, extend_replay, stack
from .model import Model, snapshot
from .numerics import Tensor
from .ssl import NORM_FLOOR, ByolState, MoCoState, byol_loss, byol_step, infonce_in_batch, moco_step

MODES = ("kaizen", "cassle", "no_distill")
SSL_METHODS = ("byol", "mocov2p")


@dataclass(frozen=True)
class LambdaSchedule:
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("schedule coefficients must be non-negative")

    @classmethod
    def parse(cls, text: str) -> LambdaSchedule:
        """Parse ``"a+b"`` (also accepts the ``a⊕b`` spelling)."""
        m = re.fullmatch(r"\s*([0-9.eE+-]+?)\s*(?:\+|⊕)\s*([0-9.eE+-]+)\s*", text)
        if not m:
            raise ValueError(f"cannot parse lambda schedule {text!r}; expected 'a+b'")
        return cls(float(m.group(1)), float(m.group(2)))

    def __str__(self) -> str:
        return f"{self.a:.2f}+{self.b:.2f}"


def lambda_at(s: LambdaSchedule, t: int) -> float:
    if t < 1:
        raise ValueError(f"task index starts at 1, got {t}")
    return s.a + s.b * (t - 1)


@dataclass
class ContinualConfig:
    mode: str = "kaizen"
    ssl_method: str = "byol"
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    epochs_per_task: int = 50
    classifier_epochs: int = 50
    batch_size: int = 32
    replay_batch_size: int = 16
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    classifier_learning_rate: float = 1e-2
    weight_decay: float = 0.0
    temperature: float = 0.1
    queue_size: int = 1024
    momentum: float = 0.99
    classifier_input: str = "clean"  # clean | view
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        self.mode = self.mode.replace("-", "_")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ssl_method not in SSL_METHODS:
            raise ValueError(f"unknown SSL method {self.ssl_method!r}")
        if self.classifier_input not in ("clean", "view"):
            raise ValueError(f"classifier_input must be 'clean' or 'view', got {self.classifier_input!r}")


@dataclass
class TaskContext:
    t: int
    classes_in_task: list[int]
    replay: ReplayBuffer
    frozen_teacher: Model | None = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("task index starts at 1")


def new_ssl_state(model: Model, cfg: ContinualConfig):
    if cfg.ssl_method == "byol":
        return ByolState.from_model(model, cfg.momentum)
    return MoCoState.from_model(model, cfg.queue_size, cfg.temperature, cfg.momentum)


# ---------------------------------------------------------------------------
# loss terms

def fe_ct_loss(views, model: Model, ssl_state, features=None, training: bool = False, rng=None) -> Tensor:
    v1, v2 = views
    if isinstance(ssl_state, MoCoState):
        return moco_step(ssl_state, model, v1, v2, features, training, rng)
    return byol_step(ssl_state, model, v1, v2, features, training, rng)


def teacher_features(teacher: Model, x: np.ndarray) -> np.ndarray:
    with nx.no_grad():
        return teacher.encode(x).data


def fe_kd_loss(views, model: Model, frozen_teacher: Model | None, ssl_method: str = "byol",
               features=None, temperature: float = 0.1, training: bool = False, rng=None,
               targets=None) -> Tensor:
    """Distil the previous encoder: predict its features from the current ones.

    Live features go through ``model.distill_predictor`` and are contrasted
    with the teacher's features of the same view using the configured SSL
    loss (BYOL cosine, or InfoNCE with the batch's other teacher features as
    negatives). Averaged over both views.
    """
    if frozen_teacher is None:
        raise ValueError("feature distillation needs a previous-task teacher")
    if features is None:
        features = tuple(model.encode(v, training, rng) for v in views)
    if targets is None:
        targets = [teacher_features(frozen_teacher, v) for v in views]
    terms = []
    for target, h in zip(targets, features):
        pred = model.distill_predictor(h)
        if ssl_method == "byol":
            terms.append(byol_loss(pred, target, NORM_FLOOR))
        else:
            unit = target / np.maximum(np.linalg.norm(target, axis=1, keepdims=True), NORM_FLOOR)
            terms.append(infonce_in_batch(nx.l2_normalize(pred, floor=NORM_FLOOR), unit, temperature))
    return (terms[0] + terms[1]) * 0.5


def clf_ct_loss(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    n_out = logits.shape[1]
    if len(labels) == 0:
        raise ValueError("classifier loss needs at least one labelled sample")
    if labels.min() < 0 or labels.max() >= n_out:
        raise ValueError(f"label outside the {n_out} classes seen so far")
    return nx.cross_entropy(logits, labels)


def clf_kd_loss(live_logits: Tensor, teacher_logits: np.ndarray) -> Tensor:
    """Soft-label cross-entropy on the teacher's (old) classes only.

    ``-sum_c p_teacher(c) log p_live(c)``, both softmaxes taken over the first
    ``teacher_logits.shape[1]`` outputs, averaged over the batch.
    """
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    n_old = teacher_logits.shape[1]
    if n_old == 0:
        raise ValueError("teacher has no classes to distil")
    target = nx.softmax(teacher_logits, axis=1)
    lp = nx.log_softmax(live_logits[:, :n_old], axis=1)
    return -(lp * target).sum(axis=1).mean()


def required_terms(mode: str, t: int) -> tuple[str, ...]:
    if mode == "kaizen":
        return ("fe_ct", "fe_kd", "clf_ct", "clf_kd") if t > 1 else ("fe_ct", "clf_ct")
    if mode == "cassle":
        return ("fe_ct", "fe_kd") if t > 1 else ("fe_ct",)
    if mode == "no_distill":
        return ("fe_ct",)
    raise ValueError(f"unknown mode {mode!r}")


def total_loss(components: dict, lam: float, mode: str, t: int = 2):
    """Combine the active terms for ``mode`` at task ``t``; ``lam`` weights only clf_kd."""
    terms = required_terms(mode, t)
    missing = [k for k in terms if components.get(k) is None]
    if missing:
        raise KeyError(f"missing loss components for {mode} at task {t}: {missing}")
    total = components[terms[0]]
    for k in terms[1:]:
        total = total + (lam * components[k] if k == "clf_kd" else components[k])
    return total


# ---------------------------------------------------------------------------
# training

@dataclass
class TaskResult:
    model: Model
    teacher: Model
    replay: ReplayBuffer
    history: list[float]


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def feature_step(model: Model, ctx: TaskContext, ssl_state, cfg: ContinualConfig, xb: np.ndarray, yb: np.ndarray,
                 opt: nx.Optimizer, rng: np.random.Generator) -> tuple[float, dict]:
    """One optimisation step of the mode's joint objective on a batch."""
    t, teacher = ctx.t, ctx.frozen_teacher
    views = two_view_batch(xb, cfg.augment, rng)
    feats = (model.encode(views[0], True, rng), model.encode(views[1], True, rng))
    comps: dict = {"fe_ct": fe_ct_loss(views, model, ssl_state, feats, True, rng)}
    terms = required_terms(cfg.mode, t)
    t_feats = [teacher_features(teacher, v) for v in views] if "fe_kd" in terms else None
    if "fe_kd" in terms:
        comps["fe_kd"] = fe_kd_loss(views, model, teacher, cfg.ssl_method, feats, cfg.temperature,
                                    targets=t_feats)
    if "clf_ct" in terms or "clf_kd" in terms:
        # classifier terms see the un-augmented window unless configured otherwise
        if cfg.classifier_input == "clean":
            c_feats, c_input = model.encode(xb, True, rng), xb
        else:
            c_feats, c_input = feats[0], views[0]
        logits = model.classify(c_feats)
        labelled = np.flatnonzero(yb >= 0)
        if len(labelled):
            comps["clf_ct"] = clf_ct_loss(logits[labelled], yb[labelled])
        else:
            comps["clf_ct"] = Tensor(0.0)
    if "clf_kd" in terms:
        if cfg.classifier_input == "clean":
            t_c = teacher_features(teacher, c_input)
        else:
            t_c = t_feats[0]
        with nx.no_grad():
            t_logits = teacher.classify(Tensor(t_c)).data
        comps["clf_kd"] = clf_kd_loss(logits, t_logits)
    loss = total_loss(comps, lambda_at(cfg.schedule, t), cfg.mode, t)
    model.zero_grad()
    nx.backward(loss)
    opt.step(model.parameters())
    if isinstance(ssl_state, ByolState):
        ssl_state.update(model)
    return loss.item(), {k: float(np.asarray(v.data if isinstance(v, Tensor) else v)) for k, v in comps.items()}


def train_classifier(model: Model, x: np.ndarray, y: np.ndarray, cfg: ContinualConfig, rng: np.random.Generator) -> None:
    """Classifier-only phase (CaSSLe / no-distill): encoder frozen, CE on features."""
    with nx.no_grad():
        feats = np.concatenate([model.encode(x[i:i + 256]).data for i in range(0, len(x), 256)])
    opt = nx.Optimizer(cfg.optimizer, cfg.classifier_learning_rate)
    params = [model.classifier.weight, model.classifier.bias]
    for _ in range(cfg.classifier_epochs):
        for idx in _batches(len(feats), cfg.batch_size, rng):
            loss = clf_ct_loss(model.classify(Tensor(feats[idx])), y[idx])
            nx.zero_grad(params)
            nx.backward(loss)
            opt.step(params)


def train_task(model: Model, ctx: TaskContext, x: np.ndarray, y: np.ndarray, cfg: ContinualConfig,
               ssl_state, rng: np.random.Generator, task_windows: list[Window] | None = None) -> TaskResult:
    """Train on task ``ctx.t``; returns the new teacher snapshot and grown replay.

    ``x`` is ``(N, T, 3)`` normalised windows, ``y`` output-index labels with
    ``-1`` for unlabelled. Replay windows join every batch (SSL and classifier
    terms alike). ``task_windows`` (labelled, output-index labels) are what the
    replay buffer samples from; defaults to the labelled part of ``x, y``.
    """
    if cfg.mode != "no_distill" and ctx.t > 1 and ctx.frozen_teacher is None:
        raise ValueError("distillation modes need a teacher after task 1")
    teacher = ctx.frozen_teacher if cfg.mode != "no_distill" else None
    ctx = TaskContext(ctx.t, ctx.classes_in_task, ctx.replay, teacher)
    rx, ry, _ = stack(ctx.replay.windows)
    opt = nx.Optimizer(cfg.optimizer, cfg.learning_rate, weight_decay=cfg.weight_decay)
    history = []
    for _ in range(cfg.epochs_per_task):
        for idx in _batches(len(x), cfg.batch_size, rng):
            xb, yb = x[idx], y[idx]
            if len(rx):
                # a small buffer is resampled so replay keeps a fixed share of each batch
                ridx = rng.choice(len(rx), size=cfg.replay_batch_size, replace=len(rx) < cfg.replay_batch_size)
                xb = np.concatenate([xb, rx[ridx]])
                yb = np.concatenate([yb, ry[ridx]])
            loss, _ = feature_step(model, ctx, ssl_state, cfg, xb, yb, opt, rng)
            history.append(loss)

    if cfg.mode in ("cassle", "no_distill"):
        labelled = y >= 0
        cx = np.concatenate([x[labelled], rx]) if len(rx) else x[labelled]
        cy = np.concatenate([y[labelled], ry]) if len(rx) else y[labelled]
        train_classifier(model, cx, cy, cfg, rng)

    if task_windows is None:
        task_windows = [Window(v, int(lbl), -1) for v, lbl in zip(x, y) if lbl >= 0]
    replay = extend_replay(ctx.replay, task_windows, seed=int(rng.integers(2**31)))
    return TaskResult(model, snapshot(model), replay, history)
