#!/usr/bin/env python3
"""Convert the per-class Fashion-MNIST JSON arrays into a gzipped IDX test set.

Each class file holds that class's images in dataset order (training images
first, test images last). The last PER_CLASS images of every class are taken
and interleaved round-robin, giving a 10,000-image, class-balanced test set.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

PER_CLASS = 1000
ROWS = COLS = 28


def main(src: Path, dest: Path) -> None:
    per_class = []
    for label in range(10):
        with open(src / f"{label}.json") as fh:
            # the class-0 file carries a couple of empty placeholder rows
            images = [px for px in json.load(fh)["data"] if px]
        per_class.append(images[-PER_CLASS:])

    images, labels = [], []
    for i in range(PER_CLASS):
        for label in range(10):
            px = per_class[label][i]
            assert len(px) == ROWS * COLS
            images.append(bytes(px))
            labels.append(label)

    n = len(images)
    with gzip.open(dest / "t10k-images-idx3-ubyte.gz", "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, n, ROWS, COLS))
        fh.write(b"".join(images))
    with gzip.open(dest / "t10k-labels-idx1-ubyte.gz", "wb") as fh:
        fh.write(struct.pack(">II", 0x801, n))
        fh.write(bytes(labels))


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
