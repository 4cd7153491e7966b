#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 tools/mnist_from_npm.py package/src/digits data/mnist10k
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        values = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(0, len(values), 784):
            pixels = bytes(min(255, round(v * 255)) for v in values[i:i + 784])
            samples.append((pixels, digit))
    random.Random(20200101).shuffle(samples)
    n = len(samples)
    with gzip.GzipFile(dst / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(dst / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} digits to {dst}")


if __name__ == "__main__":
    main()
