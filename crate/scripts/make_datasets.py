#!/usr/bin/env python3
"""Regenerate the LIBSVM-format datasets shipped under data/.

mushrooms   one-hot encoding of the UCI agaricus-lepiota table (8124 rows,
            22 categorical attributes); label +1 edible, -1 poisonous.
wdbc_scale  Wisconsin diagnostic breast cancer table (569 rows, 30 features),
            each feature min-max scaled to [-1, 1]; label +1 malignant.

Usage: make_datasets.py AGARICUS_DATA BREAST_CANCER_CSV OUT_DIR
"""
import csv
import os
import sys


def write_rows(path, rows):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for label, feats in rows:
            toks = [f"{label:+d}"] + [f"{i}:{v:.10g}" for i, v in feats if v != 0.0]
            f.write(" ".join(toks) + "\n")
    os.replace(tmp, path)


def mushrooms(src, out):
    table = [line.strip().split(",") for line in open(src) if line.strip()]
    n_attr = len(table[0]) - 1
    offsets, index = [], {}
    next_idx = 1
    for a in range(1, n_attr + 1):
        for v in sorted({r[a] for r in table}):
            index[(a, v)] = next_idx
            next_idx += 1
    rows = []
    for r in table:
        label = 1 if r[0] == "e" else -1
        feats = sorted((index[(a, r[a])], 1.0) for a in range(1, n_attr + 1))
        rows.append((label, feats))
    write_rows(os.path.join(out, "mushrooms"), rows)


def wdbc(src, out):
    with open(src) as f:
        reader = csv.reader(f)
        header = next(reader)
        n_feat = int(header[1])
        data = [[float(x) for x in r[:n_feat]] + [int(r[n_feat])] for r in reader]
    lo = [min(r[j] for r in data) for j in range(n_feat)]
    hi = [max(r[j] for r in data) for j in range(n_feat)]
    rows = []
    for r in data:
        # sklearn encodes malignant as 0
        label = 1 if r[n_feat] == 0 else -1
        feats = []
        for j in range(n_feat):
            span = hi[j] - lo[j]
            v = 0.0 if span == 0 else -1.0 + 2.0 * (r[j] - lo[j]) / span
            feats.append((j + 1, v))
        rows.append((label, feats))
    write_rows(os.path.join(out, "wdbc_scale"), rows)


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    mushrooms(sys.argv[1], sys.argv[3])
    wdbc(sys.argv[2], sys.argv[3])
