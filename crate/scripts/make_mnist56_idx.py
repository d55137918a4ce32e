#!/usr/bin/env python3
"""Rebuild data/mnist-5-6/ from the digits bundled in the `mnist` npm package.

The npm package ships each MNIST digit class as a JSON array of pixel
intensities divided by 255 and rounded to three decimals. Rounding error is
below 0.0005 * 255 < 0.5, so multiplying by 255 and rounding recovers the
original byte exactly. Only classes 5 and 6 are written.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist56_idx.py package/src/digits data/mnist-5-6
"""
import json
import struct
import sys
from pathlib import Path

SIDE = 28
CLASSES = (5, 6)


def main(src: Path, dst: Path) -> None:
    images = bytearray()
    labels = bytearray()
    for digit in CLASSES:
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(raw) // (SIDE * SIDE)
        for v in raw[: count * SIDE * SIDE]:
            px = round(v * 255)
            assert 0 <= px <= 255 and abs(px / 255 - v) < 5e-4
            images.append(px)
        labels.extend([digit] * count)
        print(f"class {digit}: {count} images")
    n = len(labels)
    dst.mkdir(parents=True, exist_ok=True)
    (dst / "images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x00000803, n, SIDE, SIDE) + bytes(images)
    )
    (dst / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x00000801, n) + bytes(labels))


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
