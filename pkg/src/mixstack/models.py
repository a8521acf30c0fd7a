"""The three classifiers (CNN, LSTM, GRU + attention), training, and the model file format."""

from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from . import nn
from .autograd import Tensor
from .metrics import evaluate

KINDS = ("cnn", "lstm", "attention")
MODEL_MAGIC = b"MXS1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class ModelConfig:
    kind: str
    vocab_size: int
    num_classes: int
    embed_dim: int = 100
    max_len: int = 25
    output: str = "softmax"
    # cnn
    filter_widths: tuple[int, ...] = (3, 4, 5)
    filters_per_width: int = 128
    # lstm units, or GRU units for the attention model
    units: int = 256
    # None picks the per-kind default: cnn (4096, 2048), others (256, 128, 64, 32)
    dense: tuple[int, ...] | None = None
    dropout: float | None = None  # cnn 0.2, others 0.3
    attention_dim: int | None = None
    freeze_pad: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.output not in ("softmax", "sigmoid"):
            raise ValueError(f"output must be softmax or sigmoid, got {self.output!r}")
        if self.output == "softmax" and self.num_classes < 2:
            raise ValueError("a softmax head needs at least 2 classes")
        if self.output == "sigmoid" and self.num_classes != 2:
            raise ValueError("a sigmoid head is only valid for 2 classes")
        if self.vocab_size < 2 or self.embed_dim < 1 or self.max_len < 1:
            raise ValueError("vocab_size >= 2, embed_dim >= 1 and max_len >= 1 are required")
        self.filter_widths = tuple(self.filter_widths)
        if self.dense is None:
            self.dense = (4096, 2048) if self.kind == "cnn" else (256, 128, 64, 32)
        self.dense = tuple(self.dense)
        if self.dropout is None:
            self.dropout = 0.2 if self.kind == "cnn" else 0.3

    @property
    def head_units(self) -> int:
        return 1 if self.output == "sigmoid" else self.num_classes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("filter_widths", "dense"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


class Model(nn.Module):
    """A classifier: token indices ``(B, max_len)`` in, class probabilities out.

    ``meta`` carries whatever the caller needs to use the model on raw text
    (label names, vocabulary, normalization settings); it is saved verbatim.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, embedding: np.ndarray | None = None,
                 meta: dict | None = None):
        c = config
        self.config = c
        self.meta = dict(meta or {})
        init = np.random.default_rng(seed)
        self.rng = np.random.default_rng(seed + 1)  # dropout masks; reseeded by train_model
        self.embedding = nn.Embedding(c.vocab_size, c.embed_dim, init, embedding, c.freeze_pad)
        if c.kind == "cnn":
            self.convs = [nn.Conv1D(w, c.embed_dim, c.filters_per_width, init) for w in c.filter_widths]
            width = sum(((c.max_len - w + 1) // 2) * c.filters_per_width for w in c.filter_widths)
            if any(c.max_len - w + 1 < 2 for w in c.filter_widths):
                raise ValueError(f"max_len {c.max_len} too short for filter widths {c.filter_widths} with pooling")
            blocks = []
            for n in c.dense:
                blocks.append(_PlainBlock(width, n, c.dropout, init, self.rng))
                width = n
            self.blocks = blocks
        else:
            if c.kind == "lstm":
                self.rnn = nn.LSTM(c.embed_dim, c.units, init)
            else:
                self.rnn = nn.GRU(c.embed_dim, c.units, init)
                self.attention = nn.AdditiveAttention(c.units, init, c.attention_dim)
            width = c.units
            blocks = []
            for n in c.dense:
                blocks.append(nn.DenseBlock(width, n, c.dropout, init))
                blocks[-1].dropout.rng = self.rng
                width = n
            self.blocks = blocks
        self.head = nn.Dense(width, c.head_units, init)

    def features(self, indices: np.ndarray) -> Tensor:
        x = self.embedding(indices)
        c = self.config
        if c.kind == "cnn":
            pooled = []
            for conv in self.convs:
                p = nn.maxpool1d(conv(x), 2, 2)
                pooled.append(ag.reshape(p, (p.shape[0], -1)))
            h = ag.concat(pooled, axis=1)
        elif c.kind == "lstm":
            h = nn.global_maxpool(self.rnn(x))
        else:
            h, _ = self.attention(self.rnn(x))
        for block in self.blocks:
            h = block(h)
        return h

    def logits(self, indices: np.ndarray) -> Tensor:
        return self.head(self.features(indices))

    def forward(self, indices: np.ndarray) -> Tensor:
        """Softmax ``(B, C)``, or sigmoid ``(B, 1)`` for a single-unit head."""
        z = self.logits(indices)
        return ag.sigmoid(z) if self.config.output == "sigmoid" else ag.softmax(z)

    def predict_proba(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 2 or indices.shape[1] != self.config.max_len:
            raise ValueError(f"expected index batch of shape (B, {self.config.max_len}), got {indices.shape}")
        was_training = self.training
        self.eval()
        try:
            with ag.no_grad():
                p = self.forward(indices).data
        finally:
            self.train(was_training)
        if self.config.output == "sigmoid":
            p = np.concatenate([1.0 - p, p], axis=1)
        return p

    def predict(self, indices: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(indices), axis=1)

    def state(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_parameters()}
        out.update({f"buffer:{name}": v for name, v in self.named_buffers()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffer_owners = _buffer_owners(self)
        expected = set(params) | {f"buffer:{n}" for n in buffer_owners}
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise ModelFormatError(f"parameter mismatch (missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]})")
        for name, value in state.items():
            if name.startswith("buffer:"):
                owner, key = buffer_owners[name[len("buffer:"):]]
                if owner.buffers[key].shape != value.shape:
                    raise ModelFormatError(f"buffer {name} has shape {value.shape}")
                owner.buffers[key] = np.array(value, dtype=np.float64)
            else:
                if params[name].shape != value.shape:
                    raise ModelFormatError(f"parameter {name} has shape {value.shape}, expected {params[name].shape}")
                params[name].data = np.array(value, dtype=np.float64)


class _PlainBlock(nn.Module):
    """Dense -> ReLU -> Dropout, the CNN's fully connected stage."""

    def __init__(self, n_in, n_out, dropout, init, rng):
        self.dense = nn.Dense(n_in, n_out, init)
        self.dropout = nn.Dropout(dropout, rng)

    def forward(self, x):
        return self.dropout(ag.relu(self.dense(x)))


def _buffer_owners(module: nn.Module, prefix: str = "") -> dict[str, tuple[nn.Module, str]]:
    owners = {prefix + k: (module, k) for k in getattr(module, "buffers", {})}
    for name, child in module.children():
        owners.update(_buffer_owners(child, f"{prefix}{name}."))
    return owners


def build_model(config: ModelConfig, seed: int = 0, embedding: np.ndarray | None = None,
                meta: dict | None = None) -> Model:
    return Model(config, seed, embedding, meta)


def parameter_count(model: Model) -> int:
    return sum(p.data.size for p in model.parameters())


def expected_parameter_count(c: ModelConfig) -> int:
    """Closed-form trainable parameter count for a config."""
    total = c.vocab_size * c.embed_dim
    if c.kind == "cnn":
        width = 0
        for w in c.filter_widths:
            total += w * c.embed_dim * c.filters_per_width + c.filters_per_width
            width += ((c.max_len - w + 1) // 2) * c.filters_per_width
        for n in c.dense:
            total += width * n + n
            width = n
    else:
        h = c.units
        gates = 4 if c.kind == "lstm" else 3
        total += gates * (c.embed_dim + h + 1) * h
        if c.kind == "attention":
            a = c.attention_dim or h
            total += h * a + a + a
        width = h
        for n in c.dense:
            total += width * n + n + 2 * n  # dense + batch-norm scale/shift
            width = n
    return total + width * c.head_units + c.head_units


# ------------------------------------------------------------------- training

@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    gamma: float = 2.0
    # "inverse" (N / (C n_c)), "uniform", or an explicit per-class list
    class_weights: str | Sequence[float] = "inverse"
    patience: int = 5
    stop_at_train_accuracy: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch normalization)")
        if isinstance(self.class_weights, str) and self.class_weights not in ("inverse", "uniform"):
            raise ValueError(f"class_weights must be inverse, uniform or a list, got {self.class_weights!r}")

    def loss_config(self, labels: np.ndarray, num_classes: int) -> nn.FocalLossConfig:
        if self.class_weights == "inverse":
            weights = nn.inverse_frequency_weights(labels, num_classes)
        elif self.class_weights == "uniform":
            weights = [1.0] * num_classes
        else:
            weights = [float(w) for w in self.class_weights]
        return nn.FocalLossConfig(gamma=self.gamma, class_weights=weights)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_macro_f1: float | None = None
    val_macro_precision: float | None = None
    val_macro_recall: float | None = None
    val_accuracy: float | None = None


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    merged_tail_batch: bool = False
    class_weights: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = False) -> dict:
        d = {
            "best_epoch": self.best_epoch,
            "merged_tail_batch": self.merged_tail_batch,
            "class_weights": self.class_weights,
            "epochs": [asdict(e) for e in self.epochs],
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    def to_text(self) -> str:
        """Deterministic rendering (wall time is left out so reruns compare byte-equal)."""
        lines = [f"best_epoch={self.best_epoch}", f"merged_tail_batch={self.merged_tail_batch}",
                 "class_weights=" + ",".join(f"{w:.6f}" for w in self.class_weights)]
        for e in self.epochs:
            fields = [f"epoch={e.epoch}", f"train_loss={e.train_loss:.10f}",
                      f"train_accuracy={e.train_accuracy:.6f}"]
            if e.val_macro_f1 is not None:
                fields += [f"val_macro_f1={e.val_macro_f1:.6f}", f"val_macro_precision={e.val_macro_precision:.6f}",
                           f"val_macro_recall={e.val_macro_recall:.6f}", f"val_accuracy={e.val_accuracy:.6f}"]
            lines.append(" ".join(fields))
        return "\n".join(lines) + "\n"

    @property
    def final_train_accuracy(self) -> float:
        return self.epochs[-1].train_accuracy if self.epochs else 0.0

    @property
    def best_train_accuracy(self) -> float:
        return max((e.train_accuracy for e in self.epochs), default=0.0)


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> tuple[list[np.ndarray], bool]:
    """Shuffled mini-batches; a trailing batch of one is folded into its predecessor."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    merged = False
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
        merged = True
    return batches, merged


def _accuracy(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(x) == y)) if len(y) else 0.0


def train_model(model: Model, train: tuple[np.ndarray, np.ndarray],
                val: tuple[np.ndarray, np.ndarray] | None, config: TrainConfig) -> TrainReport:
    """Mini-batch Adam on the focal loss, keeping the best epoch's weights.

    "Best" is highest validation macro-F1 when a validation set is given,
    otherwise highest training accuracy with training loss as tie-break.
    """
    x, y = np.asarray(train[0], dtype=np.int64), np.asarray(train[1], dtype=np.int64)
    if len(y) < 2:
        raise ValueError("training needs at least 2 examples")
    c = model.config.num_classes
    if y.min() < 0 or y.max() >= c:
        raise ValueError(f"training labels must lie in [0, {c})")
    has_val = val is not None and len(val[1]) > 0
    names = [str(i) for i in range(c)]
    start = time.perf_counter()

    rng = np.random.default_rng(config.seed)
    model.rng.bit_generator.state = np.random.default_rng(config.seed + 1).bit_generator.state
    loss_cfg = config.loss_config(y, c)
    optimizer = nn.Adam(model.parameters(), lr=config.lr)
    report = TrainReport(class_weights=list(loss_cfg.class_weights))

    best_key, best_state, stale = None, None, 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        batches, merged = make_batches(len(y), config.batch_size, rng)
        report.merged_tail_batch |= merged
        total = 0.0
        for idx in batches:
            optimizer.zero_grad()
            loss = nn.focal_loss(model(x[idx]), y[idx], loss_cfg)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        record = EpochRecord(epoch, total / len(y), _accuracy(model, x, y))
        if has_val:
            s = evaluate(val[1], model.predict(val[0]), names)
            record.val_macro_f1, record.val_macro_precision = s.macro_f1, s.macro_precision
            record.val_macro_recall, record.val_accuracy = s.macro_recall, s.accuracy
            key = (record.val_macro_f1,)
        else:
            key = (record.train_accuracy, -record.train_loss)
        report.epochs.append(record)
        if best_key is None or key > best_key:
            best_key, stale = key, 0
            best_state = {k: v.copy() for k, v in model.state().items()}
            report.best_epoch = epoch
        else:
            stale += 1
        if config.stop_at_train_accuracy is not None and record.train_accuracy >= config.stop_at_train_accuracy:
            break
        if stale >= config.patience:
            break
    model.load_state(best_state)
    model.eval()
    report.wall_time = time.perf_counter() - start
    return report


# -------------------------------------------------------------- serialization

def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def write_arrays(buf, arrays: dict[str, np.ndarray]) -> None:
    buf.write(_u32(len(arrays)))
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(_u32(len(raw)) + raw + _u32(value.ndim))
        for d in value.shape:
            buf.write(_u32(d))
        buf.write(value.tobytes(order="C"))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for _ in range(self.u32()):
            name = self.blob().decode("utf-8")
            shape = tuple(self.u32() for _ in range(self.u32()))
            count = int(np.prod(shape)) if shape else 1
            out[name] = np.frombuffer(self.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        return out


def _header(data: bytes, magic: bytes, what: str) -> _Reader:
    r = _Reader(data)
    if r.take(4) != magic:
        raise ModelFormatError(f"not a {what} file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported {what} format version {version}")
    return r


def model_to_bytes(model: Model) -> bytes:
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC + _u32(FORMAT_VERSION))
    header = json.dumps({"config": model.config.to_dict(), "meta": model.meta}, sort_keys=True).encode("utf-8")
    buf.write(_u32(len(header)) + header)
    write_arrays(buf, model.state())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> Model:
    r = _header(data, MODEL_MAGIC, "model")
    try:
        header = json.loads(r.blob().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    model = Model(ModelConfig.from_dict(header["config"]), meta=header.get("meta"))
    model.load_state(r.arrays())
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after model payload")
    model.eval()
    return model


def save_model(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
