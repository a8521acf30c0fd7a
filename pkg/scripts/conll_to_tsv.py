"""Convert a token-per-line code-mixed tweet file to the id/label/text TSV.

Input blocks look like

    meta	4217	positive
    @	O
    user	Eng
    que	Spa

and are separated by blank lines. The second column of token lines (the
language tag) is dropped. A ``meta`` line without a label gives ``_``.

    python scripts/conll_to_tsv.py train_conll.txt data/train.tsv
"""

import argparse
import sys
from pathlib import Path

from mixstack.dataio import Example, write_tsv


def read_conll(path: Path) -> list[Example]:
    examples, ident, label, tokens = [], None, None, []

    def flush():
        if ident is not None:
            examples.append(Example(ident, " ".join(tokens), label))

    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if cols[0] == "meta":
            flush()
            if len(cols) < 2 or not cols[1]:
                raise SystemExit(f"{path}:{lineno}: meta line without an id")
            ident = cols[1]
            label = cols[2] if len(cols) > 2 and cols[2] not in ("", "_") else None
            tokens = []
        elif ident is None:
            raise SystemExit(f"{path}:{lineno}: token before the first meta line")
        else:
            tokens.append(cols[0])
    flush()
    return examples


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("conll", type=Path)
    parser.add_argument("out", type=Path)
    args = parser.parse_args(argv)
    examples = read_conll(args.conll)
    write_tsv(args.out, examples)
    print(f"wrote {len(examples)} rows to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
