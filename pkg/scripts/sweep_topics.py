#!/usr/bin/env python3
"""Sweep the topic count K on a corpus and report the selected value.

Wraps `ttn eval sweep`: for each candidate K it trains a topic model on a
train split, infers topic assignments for held-out documents, and scores
cluster purity against the provided labels. Ties go to the smaller K.

    python3 scripts/sweep_topics.py CORPUS LABELS --ks 2,3,5,8
"""

from __future__ import annotations

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ttn.cli import main as ttn  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("corpus", help="JSONL corpus")
    ap.add_argument("labels", help="CSV doc_id,class_id")
    ap.add_argument("--ks", default="2,3,5,8,13,21,40")
    ap.add_argument("--iters", type=int, default=100)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--min-df", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="also write the CSV report here")
    args = ap.parse_args()

    argv = ["eval", "sweep", args.corpus, "--ks", args.ks, "--labels", args.labels,
            "--alpha", str(args.alpha), "--iters", str(args.iters),
            "--burn-in", str(args.iters // 2), "--min-df", str(args.min_df),
            "--seed", str(args.seed)]
    if args.out:
        argv += ["-o", args.out]
    raise SystemExit(ttn(argv))


if __name__ == "__main__":
    main()
