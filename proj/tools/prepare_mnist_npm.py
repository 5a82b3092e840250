#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST digits, grouped by
class (863 to 1,127 per class), as browserify modules whose "data" arrays hold gray/255 rounded to 3 decimals.
Rounding back to the nearest byte recovers the original pixels.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/prepare_mnist_npm.py package/dist/mnist.js data/mnist

Writes train-images-idx3-ubyte and train-labels-idx1-ubyte, taking one digit from each class
in turn (classes that run out are skipped).
"""

import argparse
import json
import pathlib
import re
import struct
import sys

SIDE = 28


def read_digit_modules(bundle: str) -> list[list[float]]:
    decoder = json.JSONDecoder()
    modules = {}
    for m in re.finditer(r"(\d+):\[function\(require,module,exports\)\{\s*module\.exports=", bundle):
        obj, _ = decoder.raw_decode(bundle, m.end())
        if isinstance(obj, dict) and "data" in obj:
            modules[int(m.group(1))] = obj["data"]
    digits = [modules.get(k) for k in range(1, 11)]
    if any(d is None for d in digits):
        sys.exit("bundle does not contain the ten digit modules 1..10")
    return digits


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("bundle", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    args = ap.parse_args()

    digits = read_digit_modules(args.bundle.read_text())
    per = SIDE * SIDE
    if any(len(d) % per for d in digits):
        sys.exit("digit module length is not a multiple of 784")
    per_class = [len(d) // per for d in digits]

    images = bytearray()
    labels = bytearray()
    for i in range(max(per_class)):
        for label, values in enumerate(digits):
            if i >= per_class[label]:
                continue
            block = values[i * per:(i + 1) * per]
            images.extend(min(255, max(0, round(v * 255))) for v in block)
            labels.append(label)

    n = len(labels)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "train-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, SIDE, SIDE) + images)
    (args.out_dir / "train-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {args.out_dir}")


if __name__ == "__main__":
    main()
