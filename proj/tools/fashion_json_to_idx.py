#!/usr/bin/env python3
"""Convert the per-class JSON dump of FashionMNIST (npm package `fashion-mnist`)
into IDX files with a deterministic, class-stratified train/test split.

Usage: fashion_json_to_idx.py <clothes-dir> <out-dir> [--train-per-class 6000] [--seed 0]
"""
import argparse
import json
import pathlib
import struct

import numpy as np


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("clothes_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train-per-class", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    for cls in range(10):
        data = json.load(open(pathlib.Path(args.clothes_dir) / f"{cls}.json"))["data"]
        data = [row for row in data if row]  # the dump carries a few empty entries
        arr = np.asarray(data, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 784 or arr.min() < 0 or arr.max() > 255:
            raise SystemExit(f"class {cls}: unexpected payload shape {arr.shape}")
        arr = arr[rng.permutation(len(arr))]
        k = args.train_per_class
        train_x.append(arr[:k]); train_y.append(np.full(k, cls))
        test_x.append(arr[k:]); test_y.append(np.full(len(arr) - k, cls))

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, xs, ys in (("train", train_x, train_y), ("t10k", test_x, test_y)):
        x = np.concatenate(xs); y = np.concatenate(ys)
        order = rng.permutation(len(x))
        write_idx_images(out / f"{prefix}-images-idx3-ubyte", x[order].reshape(-1, 28, 28))
        write_idx_labels(out / f"{prefix}-labels-idx1-ubyte", y[order])
        print(f"{prefix}: {len(x)} images")


if __name__ == "__main__":
    main()
