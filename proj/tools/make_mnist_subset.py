#!/usr/bin/env python3
"""Write the 5000-image MNIST sample shipped with mlxtend as IDX files.

Usage:
    pip download mlxtend==0.24.0 --no-deps -d /tmp/wheels
    python3 tools/make_mnist_subset.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl data/

The sample holds 500 images per digit, 784 pixel columns then the label,
grouped by digit. Output interleaves the digits (the k-th image of digit 0,
then of digit 1, ...) so that any prefix of the file is close to balanced.
"""

import argparse
import gzip
import io
import pathlib
import struct
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("outdir")
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER))

    by_digit = {}
    for line in io.StringIO(raw.decode("ascii")):
        fields = line.strip().split(",")
        if len(fields) != 785:
            continue
        image = bytes(int(float(v)) for v in fields[:784])
        by_digit.setdefault(int(float(fields[784])), []).append(image)

    pixels = bytearray()
    labels = bytearray()
    depth = max(len(v) for v in by_digit.values())
    for k in range(depth):
        for digit in sorted(by_digit):
            if k < len(by_digit[digit]):
                pixels.extend(by_digit[digit][k])
                labels.append(digit)

    n = len(labels)
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mnist5k-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 2051, n, 28, 28) + bytes(pixels))
    (out / "mnist5k-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 2049, n) + bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
