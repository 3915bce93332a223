#!/usr/bin/env python3
"""Builds data/mnist5k/ from the 5000-example MNIST subset shipped in the
mlxtend wheel (mlxtend/data/data/mnist_5k.csv.gz).

The subset is stored sorted by label, so the rows are permuted with a fixed
seed before writing gzipped IDX files. Usage:

    python3 tools/make_mnist5k.py path/to/mlxtend-*.whl data/mnist5k
"""
import gzip
import struct
import sys
import zipfile

import numpy as np


def main() -> None:
    wheel, out_dir = sys.argv[1], sys.argv[2]
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = np.array([[int(v) for v in line.split(",")] for line in raw.strip().split("\n")],
                    dtype=np.int64)
    images, labels = rows[:, :-1].astype(np.uint8), rows[:, -1].astype(np.uint8)
    perm = np.random.RandomState(20200713).permutation(len(labels))
    images, labels = images[perm], labels[perm]
    n = len(labels)
    with gzip.GzipFile(f"{out_dir}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(f"{out_dir}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main()
