#!/usr/bin/env python3
"""Build small IDX-format MNIST train/test subsets from the npm `mnist` package.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST
digits as per-class JSON files with pixels scaled to [0, 1]. This script
restores 8-bit pixels and writes standard IDX files:

    python3 scripts/make_mnist_subset.py <package-dir> <out-dir> [per_class_train] [per_class_test]
"""
import json
import os
import random
import struct
import sys


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    n_train = int(sys.argv[3]) if len(sys.argv) > 3 else 200
    n_test = int(sys.argv[4]) if len(sys.argv) > 4 else 200
    train, test = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        count = len(flat) // 784
        if count < n_train + n_test:
            sys.exit(f"digit {digit}: only {count} samples")
        for i in range(n_train + n_test):
            px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
            (train if i < n_train else test).append((px, digit))
    rng = random.Random(20231203)
    rng.shuffle(train)
    rng.shuffle(test)
    os.makedirs(out, exist_ok=True)
    write_idx_images(os.path.join(out, "train-images-idx3-ubyte"), [p for p, _ in train])
    write_idx_labels(os.path.join(out, "train-labels-idx1-ubyte"), [l for _, l in train])
    write_idx_images(os.path.join(out, "test-images-idx3-ubyte"), [p for p, _ in test])
    write_idx_labels(os.path.join(out, "test-labels-idx1-ubyte"), [l for _, l in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
