"""Stacking: base classifiers feed their probability vectors to a multinomial
logistic meta-classifier.

Two ways to build the meta training set are supported. ``insample`` scores
the training data with the base models that were fit on it. ``kfold`` scores
each example with base models trained with that example's fold held out,
then refits the bases on all of the data for use at prediction time.
"""

from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from . import autograd as ag
from . import nn
from .autograd import Tensor
from .models import (FORMAT_VERSION, Model, ModelConfig, ModelFormatError, TrainConfig, TrainReport,
                     _header, _u32, build_model, model_from_bytes, model_to_bytes, train_model,
                     write_arrays)

ENSEMBLE_MAGIC = b"MXE1"


class Classifier(Protocol):
    def predict_proba(self, indices: np.ndarray) -> np.ndarray: ...


@dataclass
class BaseSpec:
    model: ModelConfig
    train: TrainConfig


@dataclass
class MetaDataset:
    features: np.ndarray  # (m, T*C)
    labels: np.ndarray  # (m,)
    num_models: int
    num_classes: int
    fold_of: np.ndarray | None = None  # kfold provenance: fold whose held-out models scored row i

    def __post_init__(self):
        width = self.num_models * self.num_classes
        if self.features.ndim != 2 or self.features.shape[1] != width:
            raise ValueError(f"meta features must have {width} columns, got shape {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise ValueError("meta features and labels differ in length")
        blocks = self.features.reshape(len(self.features), self.num_models, self.num_classes).sum(axis=2)
        if not np.allclose(blocks, 1.0, atol=1e-6):
            raise ValueError("each per-model block of meta features must sum to 1")


def base_features(base: Sequence[Classifier], indices: np.ndarray) -> np.ndarray:
    """Concatenate each base model's probability rows: ``(B, T*C)``."""
    return np.concatenate([np.asarray(m.predict_proba(indices), dtype=np.float64) for m in base], axis=1)


# ----------------------------------------------------------------- base level

def _fit_one(t: int, spec: BaseSpec, x, y, val, seed: int, meta: dict | None):
    s = seed + t
    model = build_model(spec.model, seed=s, meta=meta)
    try:
        report = train_model(model, (x, y), val, replace(spec.train, seed=s))
    except Exception as exc:
        raise RuntimeError(f"training base model {t} ({spec.model.kind}) failed: {exc}") from exc
    return model, report


def fit_base(x: np.ndarray, y: np.ndarray, specs: Sequence[BaseSpec], seed: int = 0,
             val: tuple[np.ndarray, np.ndarray] | None = None, jobs: int = 1,
             meta: dict | None = None) -> tuple[list[Model], list[TrainReport]]:
    """Train every base model on the same data; model ``t`` uses seed ``seed + t``."""
    if not specs:
        raise ValueError("at least one base model is required")
    classes = {s.model.num_classes for s in specs}
    lengths = {s.model.max_len for s in specs}
    if len(classes) != 1 or len(lengths) != 1:
        raise ValueError("all base models must share num_classes and max_len")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda ts: _fit_one(ts[0], ts[1], x, y, val, seed, meta), enumerate(specs)))
    else:
        results = [_fit_one(t, s, x, y, val, seed, meta) for t, s in enumerate(specs)]
    return [m for m, _ in results], [r for _, r in results]


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    if not 2 <= k <= n:
        raise ValueError(f"kfold needs 2 <= k <= number of examples, got k={k}, n={n}")
    folds = np.empty(n, dtype=np.int64)
    for f, idx in enumerate(np.array_split(np.random.default_rng(seed).permutation(n), k)):
        folds[idx] = f
    return folds


def construct_meta_dataset(base: Sequence[Classifier], x: np.ndarray, y: np.ndarray,
                           num_classes: int, mode: str = "insample", k: int = 5, seed: int = 0,
                           refit: Callable[[np.ndarray], Sequence[Classifier]] | None = None) -> MetaDataset:
    """Build ``{(h_1(x_i), ..., h_T(x_i)), y_i}``.

    ``refit(train_positions)`` must return freshly trained base models and is
    only used in ``kfold`` mode.
    """
    y = np.asarray(y, dtype=np.int64)
    if mode == "insample":
        return MetaDataset(base_features(base, x), y, len(base), num_classes)
    if mode != "kfold":
        raise ValueError(f"unknown stacking mode {mode!r}")
    if refit is None:
        raise ValueError("kfold mode needs a refit callable")
    folds = fold_assignment(len(y), k, seed)
    features = np.zeros((len(y), len(base) * num_classes))
    for f in range(k):
        held = np.flatnonzero(folds == f)
        fold_models = refit(np.flatnonzero(folds != f))
        if len(fold_models) != len(base):
            raise ValueError("refit returned a different number of base models")
        features[held] = base_features(fold_models, x[held])
    return MetaDataset(features, y, len(base), num_classes, fold_of=folds)


# ----------------------------------------------------------------- meta level

class MetaClassifier:
    """Softmax regression from ``T*C`` stacked probabilities to ``C`` classes."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(f"meta weight {self.weight.shape} and bias {self.bias.shape} do not agree")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def identity(cls, num_models: int, num_classes: int, block: int = 0) -> "MetaClassifier":
        """Pass one base model's probabilities straight through as logits."""
        w = np.zeros((num_models * num_classes, num_classes))
        w[block * num_classes:(block + 1) * num_classes] = np.eye(num_classes)
        return cls(w, np.zeros(num_classes))

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.weight.shape[0]:
            raise ValueError(f"meta features must have {self.weight.shape[0]} columns, got shape {features.shape}")
        return features @ self.weight + self.bias

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return ag.softmax(Tensor(self.logits(features))).data


def fit_meta(data: MetaDataset, seed: int = 0, lr: float = 0.05, max_steps: int = 2000,
             tol: float = 1e-6) -> MetaClassifier:
    """Full-batch Adam on cross-entropy until the gradient norm drops below ``tol``."""
    if len(data.labels) == 0:
        raise ValueError("meta dataset is empty")
    c = data.num_classes
    rng = np.random.default_rng(seed)
    w = nn.param(rng.normal(scale=0.01, size=(data.features.shape[1], c)))
    b = nn.param(np.zeros(c))
    x = Tensor(data.features)
    opt = nn.Adam([w, b], lr=lr)
    for _ in range(max_steps):
        opt.zero_grad()
        loss = nn.cross_entropy(ag.softmax(x @ w + b), data.labels)
        loss.backward()
        norm = np.sqrt(sum(float((p.grad ** 2).sum()) for p in (w, b)))
        if norm < tol:
            break
        opt.step()
    return MetaClassifier(w.data.copy(), b.data.copy())


# ------------------------------------------------------------------- ensemble

@dataclass
class StackingEnsemble:
    base: list
    meta: MetaClassifier
    num_classes: int
    mode: str = "insample"
    k: int = 5
    info: dict | None = None  # label names, vocabulary, normalization settings

    def __post_init__(self):
        if not self.base:
            raise ValueError("an ensemble needs at least one base model")
        if self.meta.weight.shape != (len(self.base) * self.num_classes, self.num_classes):
            raise ValueError("meta-classifier shape does not match T*C -> C")

    @property
    def max_len(self) -> int:
        return self.base[0].config.max_len

    def predict_proba(self, indices: np.ndarray) -> np.ndarray:
        return self.meta.predict_proba(base_features(self.base, indices))

    def predict(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return ensemble_predict(self, indices)


def ensemble_predict(ensemble: StackingEnsemble, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, lowest index on ties) and meta probabilities."""
    probs = ensemble.predict_proba(indices)
    return np.argmax(probs, axis=1), probs


def fit_stacking(x: np.ndarray, y: np.ndarray, specs: Sequence[BaseSpec], mode: str = "insample",
                 k: int = 5, seed: int = 0, val: tuple[np.ndarray, np.ndarray] | None = None,
                 jobs: int = 1, meta: dict | None = None, meta_lr: float = 0.05, meta_steps: int = 2000
                 ) -> tuple[StackingEnsemble, list[TrainReport], MetaDataset]:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    base, reports = fit_base(x, y, specs, seed, val, jobs, meta)
    c = specs[0].model.num_classes

    def refit(positions):
        # no validation set: held-out folds must stay unseen
        models, _ = fit_base(x[positions], y[positions], specs, seed, None, jobs, meta)
        return models

    data = construct_meta_dataset(base, x, y, c, mode, k, seed, refit)
    ensemble = StackingEnsemble(base, fit_meta(data, seed, meta_lr, meta_steps), c, mode, k, meta)
    return ensemble, reports, data


# -------------------------------------------------------------- serialization

def ensemble_to_bytes(ensemble: StackingEnsemble) -> bytes:
    buf = io.BytesIO()
    buf.write(ENSEMBLE_MAGIC + _u32(FORMAT_VERSION) + _u32(len(ensemble.base)))
    for m in ensemble.base:
        blob = model_to_bytes(m)
        buf.write(_u32(len(blob)) + blob)
    header = json.dumps({"num_classes": ensemble.num_classes, "mode": ensemble.mode, "k": ensemble.k,
                         "info": ensemble.info}, sort_keys=True).encode("utf-8")
    buf.write(_u32(len(header)) + header)
    write_arrays(buf, {"meta.weight": ensemble.meta.weight, "meta.bias": ensemble.meta.bias})
    return buf.getvalue()


def ensemble_from_bytes(data: bytes) -> StackingEnsemble:
    r = _header(data, ENSEMBLE_MAGIC, "ensemble")
    base = [model_from_bytes(r.blob()) for _ in range(r.u32())]
    try:
        header = json.loads(r.blob().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt ensemble header: {exc}") from None
    arrays = r.arrays()
    if set(arrays) != {"meta.weight", "meta.bias"}:
        raise ModelFormatError("ensemble file lacks meta-classifier weights")
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after ensemble payload")
    return StackingEnsemble(base, MetaClassifier(arrays["meta.weight"], arrays["meta.bias"]),
                            header["num_classes"], header["mode"], header["k"], header.get("info"))


def save_ensemble(ensemble: StackingEnsemble, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ensemble_to_bytes(ensemble))


def load_ensemble(path) -> StackingEnsemble:
    with open(path, "rb") as fh:
        return ensemble_from_bytes(fh.read())


def load_any(path) -> Model | StackingEnsemble:
    """Open a model or an ensemble file, dispatching on the magic bytes."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == ENSEMBLE_MAGIC:
        return ensemble_from_bytes(data)
    if data[:4] == b"MXS1":
        return model_from_bytes(data)
    raise ModelFormatError(f"{path}: not a model or ensemble file (bad magic)")
