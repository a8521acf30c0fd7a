"""Command-line entry point: ``mixstack {preprocess,train,ensemble,evaluate,predict}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .config import ConfigError, RunConfig, load_config
from .dataio import DataFormatError, Example, LabeledDataset
from .ensemble import BaseSpec, StackingEnsemble, fit_stacking, load_any, save_ensemble
from .metrics import Scores, evaluate, format_report, report_json
from .models import Model, ModelFormatError, build_model, save_model, train_model
from .spellcheck import load_lexicon
from .textprep import (Pipeline, PipelineConfig, PipelineError, default_acronyms, default_contractions,
                       default_emoji, default_stopwords, read_stoplist, read_table)

log = logging.getLogger("mixstack")


class CommandError(Exception):
    pass


# ---------------------------------------------------------------- assembling

def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    p, r = cfg.pipeline, cfg.resources
    emoji = read_table(r["emoji"], "emoji", case_sensitive=True) if "emoji" in r else default_emoji()
    contractions = read_table(r["contractions"], "contractions") if "contractions" in r else default_contractions()
    acronyms = read_table(r["acronyms"], "acronyms") if "acronyms" in r else default_acronyms()
    lexicon = load_lexicon(r["lexicon"]) if "lexicon" in r else None
    want_stops = p.get("stopwords", False)
    stops = (read_stoplist(r["stopwords"]) if "stopwords" in r else default_stopwords()) if want_stops else None
    stemmer = p.get("stemmer", "none")
    if "steps" in p:
        steps = p["steps"]
    else:
        steps = ["demojize", "replace_patterns", "expand_abbreviations", "collapse_elongation",
                 "remove_punctuation", "lowercase", "tokenize"]
        if p.get("spell", False):
            if lexicon is None:
                raise ConfigError("pipeline.spell=true needs resources.lexicon")
            steps.append("spell_correct")
        if want_stops:
            steps.append("remove_stopwords")
        if stemmer != "none":
            steps.append("stem")
    extra = {k: p[k] for k in ("max_repeat", "keep_unknown_emoji", "alphabet", "spell_min_length",
                               "spell_strategy") if k in p}
    if "remove_stopwords" in steps and stops is None:
        stops = read_stoplist(r["stopwords"]) if "stopwords" in r else default_stopwords()
    return PipelineConfig(steps=list(steps), emoji=emoji, contractions=contractions, acronyms=acronyms,
                          stopwords=stops, lexicon=lexicon, stemmer=stemmer, **extra)


def _load_labeled(path) -> LabeledDataset:
    data = dataio.load_tsv(path)
    if not data.is_labeled:
        raise CommandError(f"{path}: every row needs a label")
    return data


def _tokenize(dataset: LabeledDataset, pipe: Pipeline) -> LabeledDataset:
    return LabeledDataset([Example(e.id, " ".join(pipe(e.text)), e.label) for e in dataset],
                          list(dataset.label_set))


def _encode(dataset: LabeledDataset, vocab: dataio.Vocabulary, labels: list[str], max_len: int):
    index = {name: i for i, name in enumerate(labels)}
    unknown = sorted({e.label for e in dataset if e.label is not None and e.label not in index})
    if unknown:
        raise CommandError(f"labels {unknown} are not among the model classes {labels}")
    x = np.array([dataio.encode(e.text.split(), vocab, max_len).indices for e in dataset],
                 dtype=np.int64).reshape(len(dataset), max_len)
    y = np.array([index[e.label] for e in dataset], dtype=np.int64) if dataset.is_labeled else None
    return x, y


def _prepare_training(args, cfg: RunConfig):
    """Normalize, split, build the vocabulary and encode; returns everything training needs."""
    pipe_cfg = pipeline_config(cfg)
    pipe = Pipeline(pipe_cfg)
    full = _tokenize(_load_labeled(args.train), pipe)
    if args.val:
        train, val = full, _tokenize(_load_labeled(args.val), pipe)
    else:
        train, val = dataio.split(full, cfg.train_fraction, cfg.seed)
    if len(train) < 2:
        raise CommandError("fewer than 2 training examples after the split")
    labels = list(full.label_set)
    for extra in (val.label_set if args.val else []):
        if extra not in labels:
            labels.append(extra)
    vocab = dataio.build_vocabulary(train, dataio.whitespace_tokens, cfg.min_count)
    xtr, ytr = _encode(train, vocab, labels, cfg.max_len)
    xva, yva = _encode(val, vocab, labels, cfg.max_len)
    meta = {"labels": labels, "vocab": vocab.index_to_token, "pipeline": pipe_cfg.to_dict()}
    return vocab, labels, (xtr, ytr), (xva, yva), meta


def _embedding(cfg: RunConfig, vocab, dim: int):
    if "embeddings" not in cfg.resources:
        return None
    return dataio.load_embeddings(cfg.resources["embeddings"], vocab, dim, cfg.seed).vectors


def _score(model_like, x, y, labels) -> Scores | None:
    if y is None or len(y) == 0:
        return None
    pred = model_like.predict(x)
    if isinstance(pred, tuple):
        pred = pred[0]
    return evaluate(y, pred, labels)


def _metric_row(name: str, s: Scores | None) -> str:
    if s is None:
        return f"{name} (no validation data)"
    return (f"{name} macro_f1={s.macro_f1:.6f} macro_precision={s.macro_precision:.6f} "
            f"macro_recall={s.macro_recall:.6f} accuracy={s.accuracy:.6f}")


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _suffixed(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


# ------------------------------------------------------------------ commands

def cmd_preprocess(args) -> None:
    cfg = load_config(args.config) if args.config else RunConfig()
    pipe = Pipeline(pipeline_config(cfg))
    data = dataio.load_tsv(args.input)
    dataio.write_tsv(args.out, (Example(e.id, " ".join(pipe(e.text)), e.label) for e in data))


def cmd_train(args) -> None:
    cfg = _config_with_seed(args)
    vocab, labels, train, val, meta = _prepare_training(args, cfg)
    mcfg = cfg.model_config("", len(vocab), len(labels))
    tcfg = cfg.train_config("")
    model = build_model(mcfg, seed=cfg.seed, embedding=_embedding(cfg, vocab, mcfg.embed_dim), meta=meta)
    report = train_model(model, train, val if len(val[1]) else None, tcfg)
    log.info("trained %s in %.1fs, best epoch %d", mcfg.kind, report.wall_time, report.best_epoch)
    out = Path(args.out)
    save_model(model, out)
    scores = _score(model, *val, labels)
    text = report.to_text() + _metric_row(f"validation.{mcfg.kind}", scores) + "\n"
    _write(_suffixed(out, ".report.txt"), text)
    payload = {"train": report.to_dict(), "validation": None if scores is None else scores.as_dict()}
    _write(_suffixed(out, ".report.json"), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_ensemble(args) -> None:
    cfg = _config_with_seed(args)
    sections = cfg.model_sections()
    if not sections:
        raise ConfigError("ensemble config needs model1.*, model2.*, ... sections")
    vocab, labels, train, val, meta = _prepare_training(args, cfg)
    specs = [BaseSpec(cfg.model_config(s, len(vocab), len(labels)), cfg.train_config(s)) for s in sections]
    if "embeddings" in cfg.resources:
        raise ConfigError("pretrained embeddings are supported by the train command only")
    e = cfg.ensemble
    has_val = len(val[1]) > 0
    ensemble, reports, _ = fit_stacking(
        train[0], train[1], specs, mode=e.get("mode", "insample"), k=e.get("k", 5), seed=cfg.seed,
        val=val if has_val else None, jobs=args.jobs, meta=meta,
        meta_lr=e.get("meta_lr", 0.05), meta_steps=e.get("meta_steps", 2000))
    out = Path(args.out)
    save_ensemble(ensemble, out)
    rows, payload = [], {"base": [], "ensemble": None, "mode": ensemble.mode}
    for i, (spec, model, rep) in enumerate(zip(specs, ensemble.base, reports), start=1):
        s = _score(model, *val, labels)
        rows.append(_metric_row(f"model{sections[i - 1]}.{spec.model.kind}", s))
        payload["base"].append({"kind": spec.model.kind, "train": rep.to_dict(),
                                "validation": None if s is None else s.as_dict()})
    s = _score(ensemble, *val, labels)
    rows.append(_metric_row("ensemble", s))
    payload["ensemble"] = None if s is None else s.as_dict()
    _write(_suffixed(out, ".report.txt"), "\n".join(rows) + "\n")
    _write(_suffixed(out, ".report.json"), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _loaded(path):
    """Model or ensemble plus the label names, vocabulary and pipeline saved with it."""
    obj = load_any(path)
    info = obj.info if isinstance(obj, StackingEnsemble) else obj.meta
    if not info or "labels" not in info or "vocab" not in info:
        raise CommandError(f"{path} carries no vocabulary/label metadata")
    vocab = dataio.Vocabulary(list(info["vocab"]))
    pipe = Pipeline(PipelineConfig.from_dict(info["pipeline"]))
    max_len = obj.max_len if isinstance(obj, StackingEnsemble) else obj.config.max_len
    return obj, list(info["labels"]), vocab, pipe, max_len


def _probabilities(obj, x) -> np.ndarray:
    if len(x) == 0:
        return np.zeros((0, 0))
    return obj.predict_proba(x)


def cmd_evaluate(args) -> None:
    obj, labels, vocab, pipe, max_len = _loaded(args.model)
    data = dataio.load_tsv(args.data)
    if len(data) == 0 or not data.is_labeled:
        raise CommandError(f"{args.data}: evaluation needs labeled rows")
    x, y = _encode(_tokenize(data, pipe), vocab, labels, max_len)
    scores = evaluate(y, np.argmax(_probabilities(obj, x), axis=1), labels)
    text = format_report(scores)
    sys.stdout.write(text)
    out = Path(args.out) if args.out else _suffixed(Path(args.model), ".eval.txt")
    _write(out, text)
    _write(out.with_suffix(".json"), report_json(scores))


def cmd_predict(args) -> None:
    obj, labels, vocab, pipe, max_len = _loaded(args.model)
    data = dataio.load_tsv(args.data)
    x, _ = _encode(_tokenize(LabeledDataset([Example(e.id, e.text) for e in data]), pipe),
                   vocab, labels, max_len)
    probs = _probabilities(obj, x)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for ex, row in zip(data, probs):
            fh.write(f"{ex.id}\t{labels[int(np.argmax(row))]}\t{','.join(repr(float(p)) for p in row)}\n")


def _config_with_seed(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixstack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize the text column of a TSV")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_preprocess)

    for name, fn, helptext in (("train", cmd_train, "train one model"),
                               ("ensemble", cmd_ensemble, "fit a stacking ensemble")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("train")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--val", help="validation TSV (default: hold out part of the training file)")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(fn=fn)

    p = sub.add_parser("evaluate", help="score a model or ensemble on labeled data")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="label unlabeled rows")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.fn(args)
    except (CommandError, ConfigError, DataFormatError, PipelineError, ModelFormatError,
            ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
