#!/usr/bin/env python3
"""Build a gzipped IDX copy of the 10,000-digit MNIST subset shipped in the
`mnist` npm package (github.com/cazala/mnist, MIT).

Usage: scripts/fetch_mnist_subset.py [OUT_DIR]   (default: data/mnist10k)

Requires `npm` on PATH. Images are written in digit order (all 0s, then all
1s, ...); pixel values are the package's [0,1] floats rescaled to bytes.
"""
import gzip
import json
import os
import struct
import subprocess
import sys
import tarfile
import tempfile

SIDE = 28


def main() -> None:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "mnist10k")
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        pixels = bytearray()
        labels = bytearray()
        for digit in range(10):
            path = os.path.join(tmp, "package", "src", "digits", f"{digit}.json")
            with open(path) as fh:
                raw = json.load(fh)["data"]
            count = len(raw) // (SIDE * SIDE)
            pixels.extend(max(0, min(255, round(float(v) * 255))) for v in raw[: count * SIDE * SIDE])
            labels.extend([digit] * count)
    n = len(labels)
    with gzip.GzipFile(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, SIDE, SIDE))
        fh.write(bytes(pixels))
    with gzip.GzipFile(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(labels))
    print(f"wrote {n} images to {out_dir}")


if __name__ == "__main__":
    main()
