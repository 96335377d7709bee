"""TPN-style encoder, SSL heads, growing classifier, snapshots and checkpoints."""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .numerics import Parameter, Tensor

CKPT_MAGIC = b"CSSLCKPT"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    in_channels: int = 3
    filters: tuple[int, ...] = (32, 64, 96)
    kernels: tuple[int, ...] = (24, 16, 8)
    dropout: float = 0.1
    hidden_dim: int = 128
    projection_dim: int = 64
    new_row_std: float = 0.01

    def __post_init__(self):
        self.filters = tuple(int(f) for f in self.filters)
        self.kernels = tuple(int(k) for k in self.kernels)
        if len(self.filters) != len(self.kernels):
            raise ValueError("filters and kernels must have equal length")

    @property
    def feature_dim(self) -> int:
        return self.filters[-1]


class Conv1d:
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator):
        fan_in = c_in * k
        self.weight = Parameter(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, k)))
        self.bias = Parameter(np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return nx.conv1d(x, self.weight, self.bias)

    def named_parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class Dense:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float | None = None):
        std = np.sqrt(2.0 / d_in) if std is None else std
        self.weight = Parameter(rng.normal(0.0, std, size=(d_out, d_in)))
        self.bias = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return nx.linear(x, self.weight, self.bias)

    def named_parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class Encoder:
    """Conv blocks (conv -> relu -> dropout), then global max pooling over time."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.convs = []
        c = cfg.in_channels
        for f, k in zip(cfg.filters, cfg.kernels):
            self.convs.append(Conv1d(c, f, k, rng))
            c = f

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        x = nx.as_tensor(x)
        if x.data.ndim == 2:
            x = Tensor(x.data[None])
        if x.data.ndim != 3 or x.shape[2] != self.cfg.in_channels:
            raise nx.ShapeError(f"encoder expects (N, T, {self.cfg.in_channels}) windows, got {x.shape}")
        h = Tensor(np.ascontiguousarray(x.data.transpose(0, 2, 1))) if not x.requires_grad else _to_channels_first(x)
        for conv in self.convs:
            h = nx.dropout(nx.relu(conv(h)), self.cfg.dropout, rng, training)
        return nx.max_over(h, axis=-1)

    def named_parameters(self):
        out = {}
        for i, conv in enumerate(self.convs):
            for k, p in conv.named_parameters().items():
                out[f"conv{i}.{k}"] = p
        return out


def _to_channels_first(x: Tensor) -> Tensor:
    out = nx._make(np.ascontiguousarray(x.data.transpose(0, 2, 1)), (x,),
                   lambda g: nx._accum(x, g.transpose(0, 2, 1)))
    return out


def global_max_pool(h: Tensor) -> Tensor:
    return nx.max_over(h, axis=-1)


class MLPHead:
    """dense -> relu -> dense."""

    def __init__(self, d_in: int, hidden: int, d_out: int, rng: np.random.Generator):
        self.fc1 = Dense(d_in, hidden, rng)
        self.fc2 = Dense(hidden, d_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(nx.relu(self.fc1(x)))

    def named_parameters(self):
        return {**{f"fc1.{k}": p for k, p in self.fc1.named_parameters().items()},
                **{f"fc2.{k}": p for k, p in self.fc2.named_parameters().items()}}


class Identity:
    def __call__(self, x: Tensor) -> Tensor:
        return x

    def named_parameters(self):
        return {}


class Classifier:
    """Single linear layer whose output width grows task by task."""

    def __init__(self, d_in: int, n_classes: int = 0):
        self.weight = Parameter(np.zeros((n_classes, d_in)))
        self.bias = Parameter(np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    def __call__(self, features: Tensor) -> Tensor:
        return nx.linear(features, self.weight, self.bias)

    def grow(self, new_classes: int, rng: np.random.Generator, std: float = 0.01) -> None:
        if new_classes <= 0:
            raise ValueError("classifier can only grow by a positive number of classes")
        rows = rng.normal(0.0, std, size=(new_classes, self.weight.shape[1]))
        trainable = self.weight.trainable
        self.weight = Parameter(np.concatenate([self.weight.data, rows]), trainable)
        self.bias = Parameter(np.concatenate([self.bias.data, np.zeros(new_classes)]), trainable)

    def named_parameters(self):
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class Model:
    """Encoder, SSL projector/predictor, distillation predictor and classifier."""

    cfg: ModelConfig
    encoder: Encoder
    projector: MLPHead
    predictor: MLPHead | Identity
    distill_predictor: MLPHead | Identity
    classifier: Classifier
    frozen: bool = False
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: ModelConfig, rng: np.random.Generator) -> Model:
        f, h, p = cfg.feature_dim, cfg.hidden_dim, cfg.projection_dim
        return cls(
            cfg=cfg,
            encoder=Encoder(cfg, rng),
            projector=MLPHead(f, h, p, rng),
            predictor=MLPHead(p, h, p, rng),
            distill_predictor=MLPHead(f, h, f, rng),
            classifier=Classifier(f),
            metadata={"classifier_input": "encoder_features"},
        )

    def modules(self):
        return {"encoder": self.encoder, "projector": self.projector, "predictor": self.predictor,
                "distill_predictor": self.distill_predictor, "classifier": self.classifier}

    def named_parameters(self) -> dict[str, Parameter]:
        out = {}
        for mname, mod in self.modules().items():
            for k, p in mod.named_parameters().items():
                out[f"{mname}.{k}"] = p
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def encode(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return self.encoder(x, training=training, rng=rng)

    def classify(self, features: Tensor) -> Tensor:
        return self.classifier(features)

    def grow_classifier(self, new_classes: int, rng: np.random.Generator) -> None:
        if self.frozen:
            raise RuntimeError("cannot grow a frozen snapshot")
        self.classifier.grow(new_classes, rng, self.cfg.new_row_std)

    def zero_grad(self) -> None:
        nx.zero_grad(self.parameters())

    def architecture(self) -> dict:
        return {**asdict(self.cfg), "n_classes": self.classifier.n_classes,
                "predictor": type(self.predictor).__name__,
                "distill_predictor": type(self.distill_predictor).__name__}


def snapshot(model: Model) -> Model:
    """Deep, frozen copy; later training of ``model`` cannot reach it."""
    snap = copy.deepcopy(model)
    snap.frozen = True
    for p in snap.parameters():
        p.trainable = False
        p.zero_grad()
    return snap


def copy_branch(module):
    """Independent non-trainable copy of a sub-network (EMA targets)."""
    dup = copy.deepcopy(module)
    for p in dup.named_parameters().values():
        p.trainable = False
        p.zero_grad()
    return dup


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path: str | Path, model: Model) -> None:
    params = model.named_parameters()
    header = {
        "architecture": model.architecture(),
        "frozen": model.frozen,
        "metadata": model.metadata,
        "params": [{"name": k, "shape": list(p.shape)} for k, p in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQ", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[offset:offset + hlen])
    offset += hlen
    arch = dict(header["architecture"])
    n_classes = arch.pop("n_classes")
    pred_kind = arch.pop("predictor")
    dist_kind = arch.pop("distill_predictor")
    cfg = ModelConfig(**arch)
    model = Model.build(cfg, np.random.default_rng(0))
    if pred_kind == "Identity":
        model.predictor = Identity()
    if dist_kind == "Identity":
        model.distill_predictor = Identity()
    model.classifier = Classifier(cfg.feature_dim, n_classes)
    model.metadata = header.get("metadata", {})
    params = model.named_parameters()
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        params[entry["name"]].data = arr.astype(np.float64)
    if header["frozen"]:
        model = snapshot(model)
    return model
