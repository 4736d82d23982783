#!/usr/bin/env python3
# Copyright 2026 The augmoments Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#  http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Fetch MNIST into IDX files under data/.

  canonical  download the four canonical gzip IDX files and decompress them
  subset     build a 5000-image IDX pair from the MNIST sample bundled with
             the mlxtend wheel (obtained with `pip download`), shuffled with a
             fixed seed

The C++ library only reads local files; this script is the only network step.
"""
import argparse
import gzip
import io
import pathlib
import random
import struct
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

CANONICAL = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]
DEFAULT_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"


def canonical(out: pathlib.Path, mirror: str) -> None:
    for name in CANONICAL:
        with urllib.request.urlopen(mirror + name) as resp:
            raw = gzip.decompress(resp.read())
        target = out / name[: -len(".gz")]
        target.write_bytes(raw)
        print(f"wrote {target} ({len(raw)} bytes)")


def write_idx(images, labels, img_path: pathlib.Path, lab_path: pathlib.Path) -> None:
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for px in images:
            f.write(bytes(px))
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def subset(out: pathlib.Path, seed: int) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0", "-d", tmp],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [list(map(int, line.split(","))) for line in raw.strip().splitlines()]
    random.Random(seed).shuffle(rows)
    images = [r[:-1] for r in rows]
    labels = [r[-1] for r in rows]
    write_idx(images, labels, out / "mnist5k-images-idx3-ubyte", out / "mnist5k-labels-idx1-ubyte")
    print(f"wrote {len(rows)} images to {out}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("mode", choices=["canonical", "subset"])
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--mirror", default=DEFAULT_MIRROR)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "canonical":
        canonical(out, args.mirror)
    else:
        subset(out, args.seed)


if __name__ == "__main__":
    main()
