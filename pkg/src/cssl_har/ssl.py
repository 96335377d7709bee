"""BYOL and MoCoV2+ objectives with their momentum (EMA) branches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .model import Encoder, MLPHead, Model, copy_branch
from .numerics import Tensor


# norm clamp used inside training steps, where a dead ReLU head can emit an
# exactly-zero vector; the standalone losses stay strict
NORM_FLOOR = 1e-12


def _unit_rows(z: np.ndarray, floor: float | None) -> np.ndarray:
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    if floor is None:
        if np.any(norm == 0):
            raise ValueError("cannot normalise a zero-norm vector")
        return z / norm
    return z / np.maximum(norm, floor)


def _rows(x) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return arr[None] if arr.ndim == 1 else arr


def byol_loss(p, z, floor: float | None = None) -> Tensor:
    """Mean over rows of ``2 - 2 cos(p, z)``; ``z`` is a constant target.

    Zero-norm rows raise unless ``floor`` clamps the norms.
    """
    p = nx.as_tensor(p)
    if p.data.ndim == 1:
        p = nx.reshape(p, (1, -1))
    z = _rows(z)
    if p.shape != z.shape:
        raise nx.ShapeError(f"byol_loss shapes differ: {p.shape} vs {z.shape}")
    cos = (nx.l2_normalize(p, floor=floor) * _unit_rows(z, floor)).sum(axis=1)
    return (2.0 - 2.0 * cos).mean()


def symmetric_byol_loss(p1, p2, z1, z2, floor: float | None = None) -> Tensor:
    """Average of the two orderings: view 1 predicts view 2 and vice versa."""
    return (byol_loss(p1, z2, floor) + byol_loss(p2, z1, floor)) * 0.5


def infonce_loss(q, k_pos, queue, tau: float = 0.1) -> Tensor:
    """Mean InfoNCE of unit queries against unit positives and a negative queue.

    Keys and queue are treated as constants. Per row:
    ``-log(exp(q.k+/tau) / (exp(q.k+/tau) + sum_i exp(q.k_i/tau)))``.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    q = nx.as_tensor(q)
    if q.data.ndim == 1:
        q = nx.reshape(q, (1, -1))
    k_pos = _rows(k_pos)
    queue = np.asarray(queue, dtype=np.float64).reshape(-1, q.shape[1])
    pos = (q * k_pos).sum(axis=1, keepdims=True)
    logits = nx.concat([pos, q @ queue.T], axis=1) if len(queue) else pos
    logits = logits * (1.0 / tau)
    return -nx.log_softmax(logits, axis=1)[:, 0].mean()


def infonce_in_batch(q, keys, tau: float = 0.1) -> Tensor:
    """InfoNCE where row i's positive is key i and its negatives are the other keys."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    q = nx.as_tensor(q)
    keys = _rows(keys)
    n = len(keys)
    lp = nx.log_softmax((q @ keys.T) * (1.0 / tau), axis=1)
    return -lp[np.arange(n), np.arange(n)].mean()


# ---------------------------------------------------------------------------
# momentum branches

@dataclass
class ByolState:
    target_encoder: Encoder
    target_projector: MLPHead
    momentum: float = 0.99

    @classmethod
    def from_model(cls, model: Model, momentum: float = 0.99) -> ByolState:
        return cls(copy_branch(model.encoder), copy_branch(model.projector), momentum)

    def target(self, x) -> np.ndarray:
        with nx.no_grad():
            return self.target_projector(self.target_encoder(x)).data

    def branch_parameters(self):
        return list(self.target_encoder.named_parameters().values()) + list(self.target_projector.named_parameters().values())

    def update(self, model: Model) -> None:
        online = list(model.encoder.named_parameters().values()) + list(model.projector.named_parameters().values())
        nx.ema_update(self.branch_parameters(), online, self.momentum)


@dataclass
class MoCoState:
    key_encoder: Encoder
    key_projector: MLPHead
    queue_size: int = 1024
    temperature: float = 0.1
    momentum: float = 0.99
    queue: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.queue is None:
            self.queue = np.zeros((0, self.key_projector.fc2.weight.shape[0]))

    @classmethod
    def from_model(cls, model: Model, queue_size: int = 1024, temperature: float = 0.1, momentum: float = 0.99) -> MoCoState:
        return cls(copy_branch(model.encoder), copy_branch(model.projector), queue_size, temperature, momentum)

    def keys(self, x) -> np.ndarray:
        with nx.no_grad():
            z = self.key_projector(self.key_encoder(x)).data
        return _unit_rows(z, NORM_FLOOR)

    def enqueue(self, keys: np.ndarray) -> None:
        keys = np.atleast_2d(keys)
        self.queue = np.concatenate([self.queue, keys])[-self.queue_size:] if self.queue_size else self.queue[:0]

    def branch_parameters(self):
        return list(self.key_encoder.named_parameters().values()) + list(self.key_projector.named_parameters().values())

    def update(self, model: Model) -> None:
        online = list(model.encoder.named_parameters().values()) + list(model.projector.named_parameters().values())
        nx.ema_update(self.branch_parameters(), online, self.momentum)


def moco_queries(model: Model, features: Tensor) -> Tensor:
    return nx.l2_normalize(model.projector(features), floor=NORM_FLOOR)


def moco_step(state: MoCoState, model: Model, v1: np.ndarray, v2: np.ndarray,
              features: tuple[Tensor, Tensor] | None = None, training: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    """Symmetrised MoCo loss for a two-view batch.

    Each view's query is contrasted with the other view's key and the current
    queue. Afterwards the key branch takes one EMA step and the view-2 keys
    are enqueued (oldest entries fall off).
    """
    if features is None:
        features = (model.encode(v1, training, rng), model.encode(v2, training, rng))
    q1, q2 = moco_queries(model, features[0]), moco_queries(model, features[1])
    k1, k2 = state.keys(v1), state.keys(v2)
    loss = (infonce_loss(q1, k2, state.queue, state.temperature)
            + infonce_loss(q2, k1, state.queue, state.temperature)) * 0.5
    state.update(model)
    state.enqueue(k2)
    return loss


def byol_step(state: ByolState, model: Model, v1: np.ndarray, v2: np.ndarray,
              features: tuple[Tensor, Tensor] | None = None, training: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    """Symmetrised BYOL loss; the target branch is only read, never updated here."""
    if features is None:
        features = (model.encode(v1, training, rng), model.encode(v2, training, rng))
    p1 = model.predictor(model.projector(features[0]))
    p2 = model.predictor(model.projector(features[1]))
    return symmetric_byol_loss(p1, p2, state.target(v1), state.target(v2), NORM_FLOOR)
