#!/usr/bin/env python3
"""Build a small MNIST sample in the standard IDX layout.

The npm package `mnist` (MIT) bundles 10,000 real MNIST digits as JSON,
pixel values stored as round(v / 255, 3). Those are mapped back to bytes
exactly and split per class 80/20 into train/t10k files, gzip-compressed.

    python3 tools/make_mnist_sample.py --out data/mnist-sample
    python3 tools/make_mnist_sample.py --package /path/to/mnist-1.1.0.tgz
"""
import argparse
import gzip
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path


def fetch_package(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    return next(workdir.glob("mnist-*.tgz"))


def read_digits(tgz: Path):
    digits = {}
    with tarfile.open(tgz) as tar:
        for label in range(10):
            raw = json.load(tar.extractfile(f"package/src/digits/{label}.json"))["data"]
            assert len(raw) % 784 == 0
            pixels = bytes(int(round(v * 255)) for v in raw)
            digits[label] = [pixels[i:i + 784] for i in range(0, len(pixels), 784)]
    return digits


def write_idx(out: Path, split: str, images, labels):
    with gzip.GzipFile(out / f"{split}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with gzip.GzipFile(out / f"{split}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist-sample")
    ap.add_argument("--package", help="path to a local mnist-*.tgz")
    ap.add_argument("--train-fraction", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tgz = Path(args.package) if args.package else fetch_package(Path(tmp))
        digits = read_digits(tgz)

    train, test = [], []
    for label, imgs in digits.items():
        cut = int(round(len(imgs) * args.train_fraction))
        train += [(img, label) for img in imgs[:cut]]
        test += [(img, label) for img in imgs[cut:]]
    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)

    for name, rows in (("train", train), ("t10k", test)):
        images = [r[0] for r in rows]
        labels = [r[1] for r in rows]
        write_idx(out, name, images, labels)
        print(f"{name}: {len(rows)} rows")


if __name__ == "__main__":
    main()
