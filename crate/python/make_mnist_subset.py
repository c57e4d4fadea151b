"""Build the desk-scale MNIST subset as gzipped IDX files.

Source: the `mnist` npm package (MIT), which ships 10,000 MNIST digits as
JSON arrays of 784 floats in [0, 1] under src/digits/<label>.json.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 python/make_mnist_subset.py package data/mnist-subset

The output is byte-for-byte reproducible.
"""

import gzip
import json
import random
import struct
import sys
from pathlib import Path

N_TRAIN = 5000
N_TEST = 1000
SEED = 0


def load(package: Path):
    digits = []
    for label in range(10):
        data = json.loads((package / "src" / "digits" / f"{label}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(0, len(data), 784):
            pixels = bytes(min(255, max(0, round(x * 255))) for x in data[i : i + 784])
            digits.append((pixels, label))
    return digits


def write_gz(path: Path, payload: bytes):
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            gz.write(payload)


def write_split(out: Path, prefix: str, items):
    images = struct.pack(">IIII", 0x803, len(items), 28, 28) + b"".join(p for p, _ in items)
    labels = struct.pack(">II", 0x801, len(items)) + bytes(l for _, l in items)
    write_gz(out / f"{prefix}-images-idx3-ubyte.gz", images)
    write_gz(out / f"{prefix}-labels-idx1-ubyte.gz", labels)


def main():
    package, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    digits = load(package)
    random.Random(SEED).shuffle(digits)
    write_split(out, "train", digits[:N_TRAIN])
    write_split(out, "t10k", digits[N_TRAIN : N_TRAIN + N_TEST])


if __name__ == "__main__":
    main()
