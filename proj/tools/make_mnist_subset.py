#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist) bundles 10000 MNIST
digits as JSON arrays of pixel intensities rounded to three decimals. Pixel
bytes are recovered exactly as round(v * 255).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist

Writes gzipped train/t10k image and label files with a deterministic
shuffle (seed 20240607) and an 8000/2000 split.
"""
import argparse
import gzip
import json
import pathlib
import struct

import numpy as np


def write_idx(path, array):
    magic = {1: 0x00000801, 3: 0x00000803}[array.ndim]
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", n) for n in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes(order="C"))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=20240607)
    args = ap.parse_args()

    images, labels = [], []
    for d in range(10):
        data = json.loads((pathlib.Path(args.digits_dir) / f"{d}.json").read_text())["data"]
        px = np.rint(np.asarray(data, dtype=np.float64).reshape(-1, 784) * 255.0)
        images.append(px.astype(np.uint8))
        labels.append(np.full(len(px), d, dtype=np.uint8))
    images = np.concatenate(images).reshape(-1, 28, 28)
    labels = np.concatenate(labels)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order], labels[order]
    n = args.train

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", images[:n])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[:n])
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[n:])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[n:])
    print(f"wrote {n} train / {len(labels) - n} test samples to {out}")


if __name__ == "__main__":
    main()
