#!/usr/bin/env python3
"""Convert a sktime/UEA ``.ts`` file into the line-delimited JSON format read by
``faim::load_multivariate``.

Each output line is ``{"label": <str>, "series": [[ch0...], [ch1...], ...]}``.

Usage: ts_to_jsonl.py INPUT.ts OUTPUT.jsonl
"""
import json
import sys


def convert(src, dst):
    in_data = False
    n = 0
    with open(src) as fin, open(dst, "w") as fout:
        for line in fin:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower().startswith("@data"):
                in_data = True
                continue
            if line.startswith("@") or not in_data:
                continue
            *channels, label = line.split(":")
            series = [[float(v) for v in ch.split(",")] for ch in channels]
            fout.write(json.dumps({"label": label, "series": series}) + "\n")
            n += 1
    return n


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    print(convert(sys.argv[1], sys.argv[2]), "records")
