import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CUES = {"pos": ["great", "love", "happy"], "neg": ["awful", "hate", "sad"], "neu": ["today", "match", "news"]}
FILLER = ["the", "a", "we", "it", "was", "team", "game", "day", "so", "very", "and", "then"]

TOY_MODEL = {
    "cnn": "embed_dim=8\nfilters_per_width=4\ndense=8,8\n",
    "lstm": "embed_dim=8\nunits=8\ndense=8,8\n",
    "attention": "embed_dim=8\nunits=8\ndense=8,8\n",
}


def keyword_corpus(n, seed, unlabeled=False):
    """Tweets whose class is given away by one cue word."""
    rnd = random.Random(seed)
    rows = []
    labels = sorted(CUES)
    for i in range(n):
        label = labels[i % 3]
        words = [rnd.choice(FILLER) for _ in range(rnd.randint(3, 8))]
        words.insert(rnd.randrange(len(words) + 1), rnd.choice(CUES[label]))
        rows.append(f"{seed}-{i}\t{'_' if unlabeled else label}\t{' '.join(words)}")
    return "\n".join(rows) + "\n"


def toy_config_text(kinds, seed=3, epochs=6, extra=""):
    lines = [f"seed={seed}", "max_len=12", f"train.epochs={epochs}", "train.batch_size=8", "train.lr=0.01"]
    if len(kinds) == 1 and kinds[0].startswith("single:"):
        kind = kinds[0][7:]
        lines.append(f"model.kind={kind}")
        lines += [f"model.{l}" for l in TOY_MODEL[kind].split()]
    else:
        for i, kind in enumerate(kinds, 1):
            lines.append(f"model{i}.kind={kind}")
            lines += [f"model{i}.{l}" for l in TOY_MODEL[kind].split()]
    return "\n".join(lines) + "\n" + extra


@pytest.fixture
def corpus(tmp_path):
    (tmp_path / "train.tsv").write_text(keyword_corpus(48, 1), encoding="utf-8")
    (tmp_path / "val.tsv").write_text(keyword_corpus(18, 2), encoding="utf-8")
    (tmp_path / "unlabeled.tsv").write_text(keyword_corpus(3, 3, unlabeled=True), encoding="utf-8")
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(module.RESULTS):
            terminalreporter.write_line(module.RESULTS[n])
