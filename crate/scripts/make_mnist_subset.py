"""Build the class-balanced MNIST subset shipped in data/mnist-subset.

Input is the per-digit JSON from the `mnist` npm package
(`npm pack mnist@1.1.0`, then extract). Each image is 784 values of
byte/255 rounded to three decimals, which round(v * 255) inverts exactly.

Writes gzip-compressed IDX files: 500 train and 100 test images per class,
disjoint, in class-interleaved order.
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

TRAIN_PER_CLASS = 500
TEST_PER_CLASS = 100


def load_digits(src: Path):
    out = {}
    for d in range(10):
        data = json.loads((src / f"{d}.json").read_text())["data"]
        images = [data[i : i + 784] for i in range(0, len(data), 784)]
        out[d] = [bytes(round(v * 255) for v in img) for img in images]
    return out


def interleave(digits, start, count):
    images, labels = [], []
    for i in range(start, start + count):
        for d in range(10):
            images.append(digits[d][i])
            labels.append(d)
    return images, labels


def write_idx(path: Path, images, labels):
    img = struct.pack(">IIII", 0x803, len(images), 28, 28) + b"".join(images)
    lab = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    stem = path.name
    for suffix, payload in (("images-idx3-ubyte", img), ("labels-idx1-ubyte", lab)):
        with gzip.GzipFile(path.parent / f"{stem}-{suffix}.gz", "wb", mtime=0) as f:
            f.write(payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()
    digits = load_digits(args.digits_dir)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train", *interleave(digits, 0, TRAIN_PER_CLASS))
    write_idx(args.out_dir / "t10k", *interleave(digits, TRAIN_PER_CLASS, TEST_PER_CLASS))


if __name__ == "__main__":
    main()
