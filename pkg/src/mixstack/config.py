"""Flat ``key=value`` run configuration.

Recognized keys::

    seed, max_len, min_count, train_fraction
    pipeline.{steps,max_repeat,stemmer,stopwords,spell,keep_unknown_emoji,spell_strategy,spell_min_length,alphabet}
    resources.{emoji,contractions,acronyms,stopwords,lexicon,embeddings}
    model.<field>    single-model section (``train`` command)
    modelN.<field>   N = 1, 2, ... base model sections (``ensemble`` command)
    train.<field>    training settings shared by every model
    trainN.<field>   per-base overrides
    ensemble.{mode,k,meta_lr,meta_steps}

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .models import ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


TOP_KEYS = {"seed": int, "max_len": int, "min_count": int, "train_fraction": float}
PIPELINE_KEYS = {"steps": "list", "max_repeat": int, "stemmer": str, "stopwords": bool, "spell": bool,
                 "keep_unknown_emoji": bool, "spell_strategy": str, "spell_min_length": int, "alphabet": str}
RESOURCE_KEYS = ("emoji", "contractions", "acronyms", "stopwords", "lexicon", "embeddings")
MODEL_KEYS = {"kind": str, "embed_dim": int, "output": str, "filter_widths": "intlist",
              "filters_per_width": int, "units": int, "dense": "intlist", "dropout": float,
              "attention_dim": int, "freeze_pad": bool}
TRAIN_KEYS = {"epochs": int, "batch_size": int, "lr": float, "gamma": float, "class_weights": "weights",
              "patience": int, "stop_at_train_accuracy": float}
ENSEMBLE_KEYS = {"mode": str, "k": int, "meta_lr": float, "meta_steps": int}

_SECTION = re.compile(r"^(model|train)(\d*)\.(\w+)$")


def _convert(kind, raw: str, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind == "list":
            return [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "intlist":
            return tuple(int(s) for s in raw.split(",") if s.strip())
        if kind == "weights":
            return raw if raw in ("inverse", "uniform") else [float(s) for s in raw.split(",")]
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key}") from None


@dataclass
class RunConfig:
    seed: int = 0
    max_len: int = 25
    min_count: int = 1
    train_fraction: float = 0.9
    pipeline: dict = field(default_factory=dict)
    resources: dict[str, Path] = field(default_factory=dict)
    models: dict[str, dict] = field(default_factory=dict)  # "" for model.*, "1", "2", ...
    train: dict[str, dict] = field(default_factory=dict)  # "" shared, "1", "2", ... overrides
    ensemble: dict = field(default_factory=dict)

    def model_sections(self) -> list[str]:
        return sorted((s for s in self.models if s), key=int)

    def model_config(self, section: str, vocab_size: int, num_classes: int) -> ModelConfig:
        if section not in self.models:
            name = f"model{section}" if section else "model"
            raise ConfigError(f"config has no {name}.* section")
        values = dict(self.models[section])
        if "kind" not in values:
            raise ConfigError(f"model{section}.kind is required")
        try:
            return ModelConfig(vocab_size=vocab_size, num_classes=num_classes, max_len=self.max_len, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self, section: str = "") -> TrainConfig:
        values = {"seed": self.seed, **self.train.get("", {}), **self.train.get(section, {})}
        try:
            return TrainConfig(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def parse_config(text: str, base_dir: Path | None = None, check_files: bool = True) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        if key in TOP_KEYS:
            setattr(cfg, key, _convert(TOP_KEYS[key], value, key))
        elif key.startswith("pipeline.") and key[9:] in PIPELINE_KEYS:
            cfg.pipeline[key[9:]] = _convert(PIPELINE_KEYS[key[9:]], value, key)
        elif key.startswith("resources.") and key[10:] in RESOURCE_KEYS:
            path = Path(value)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if check_files and not path.is_file():
                raise ConfigError(f"resource file not found: {path}")
            cfg.resources[key[10:]] = path
        elif key.startswith("ensemble.") and key[9:] in ENSEMBLE_KEYS:
            cfg.ensemble[key[9:]] = _convert(ENSEMBLE_KEYS[key[9:]], value, key)
        elif (m := _SECTION.match(key)) is not None:
            group, section, name = m.groups()
            table = MODEL_KEYS if group == "model" else TRAIN_KEYS
            if name not in table:
                raise ConfigError(f"line {lineno}: unknown key {key}")
            target = cfg.models if group == "model" else cfg.train
            target.setdefault(section, {})[name] = _convert(table[name], value, key)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)

