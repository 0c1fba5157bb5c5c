"""Convert the digit arrays shipped in the npm ``mnist`` package into IDX files.

Usage::

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python scripts/mnist_from_npm.py package/src/digits data/mnist

The package stores pixels as decimals rounded to 3 places; multiplying by 255
and rounding recovers the original bytes exactly. The last ``--test`` samples
of every class go to the test split.
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np


def write_idx(path, images, labels):
    n = images.shape[0]
    with open(path / "images-idx3-ubyte", "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, 28, 28))
        fh.write(images.astype(np.uint8).tobytes())
    with open(path / "labels-idx1-ubyte", "wb") as fh:
        fh.write(struct.pack(">II", 2049, n))
        fh.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("digits_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--test", type=int, default=150)
    args = parser.parse_args()

    splits = {"train": ([], []), "test": ([], [])}
    for digit in range(10):
        raw = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        pixels = np.rint(np.asarray(raw, dtype=float) * 255).reshape(-1, 784)
        for name, block in (("train", pixels[: -args.test]), ("test", pixels[-args.test :])):
            splits[name][0].append(block)
            splits[name][1].append(np.full(len(block), digit))

    for name, (images, labels) in splits.items():
        out = args.out_dir / name
        out.mkdir(parents=True, exist_ok=True)
        write_idx(out, np.concatenate(images), np.concatenate(labels))
        print(f"{name}: {sum(len(b) for b in labels)} images -> {out}")


if __name__ == "__main__":
    main()
