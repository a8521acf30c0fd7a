"""Generate the small synthetic tweet corpus shipped under data/.

Each tweet mixes class-bearing words with shared filler, plus the noise the
normalizer is meant to undo: elongations, emoji, handles, URLs, hashtags and
slang. A fraction of tweets carry cue words from two classes; the label then
goes to the class with more cues.

    python scripts/make_synthetic_corpus.py --out data   # the shipped corpus
"""

import argparse
import random
from pathlib import Path

CUES = {
    "positive": ["love", "great", "awesome", "happy", "best", "win", "gr8", "luv", "😍", "😊"],
    "negative": ["hate", "worst", "sad", "angry", "lose", "awful", "boring", "terrible", "😡", "😭"],
    "neutral": ["today", "match", "news", "update", "schedule", "tomorrow", "report", "meeting", "2day", "abt"],
}
FILLER = ["the", "cricket", "world", "cup", "team", "game", "yaar", "bhai", "kya", "que", "muy", "this",
          "is", "with", "and", "we", "they", "it", "was", "for", "match", "fans", "player", "city"]
NOISE = ["@user{n}", "https://t.co/{n}", "#WorldCup", "sooooo", "reallyyyy", "can't", "u", "!!!", "..."]


def tweet(rng: random.Random, label: str, confusion: float) -> str:
    if rng.random() < confusion:
        # the label goes to whichever class has more cue words
        major = rng.randint(2, 4)
        other = rng.choice([k for k in CUES if k != label])
        words = rng.sample(CUES[label], major) + rng.sample(CUES[other], rng.randint(1, major - 1))
    else:
        words = rng.sample(CUES[label], rng.randint(1, 3))
    words += rng.choices(FILLER, k=rng.randint(3, 9))
    words += [rng.choice(NOISE).format(n=rng.randint(1, 999)) for _ in range(rng.randint(0, 2))]
    rng.shuffle(words)
    return " ".join(words)


def write(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--train", type=int, default=300)
    ap.add_argument("--test", type=int, default=150)
    ap.add_argument("--confusion", type=float, default=0.5)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    labels = list(CUES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, n, start in (("synthetic_train.tsv", args.train, 1), ("synthetic_test.tsv", args.test, 100001)):
        rows = []
        for i in range(n):
            label = labels[i % len(labels)]
            rows.append((str(start + i), label, tweet(rng, label, args.confusion)))
        write(out / name, rows)


if __name__ == "__main__":
    main()
