#!/usr/bin/env python3
"""Recompute RMSE/MAE of a TRLB/CPLB checkpoint independently of the C++ code.

Usage:
  evaluate_checkpoint.py --model M --data D [--manifest S] [--subset test]
                         [--dims I,J,K] [--compare report.json --tol 1e-10]
"""

import argparse
import json
import struct
import sys

import numpy as np


def read_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    magic = blob[:4]
    if magic not in (b"TRLB", b"CPLB"):
        raise SystemExit(f"{path}: unknown magic {magic!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != 1:
        raise SystemExit(f"{path}: unsupported version {version}")
    dims_i, dims_j, dims_k, rank = struct.unpack_from("<4Q", blob, 8)
    payload = np.frombuffer(blob, dtype="<f8", offset=40)
    dims = (dims_i, dims_j, dims_k)
    # TR cores are (n, left, right); every other block is (n, r).
    core_shape = (lambda n: (n, rank, rank)) if magic == b"TRLB" else (lambda n: (n, rank))
    shapes = [core_shape(n) for n in dims] + [(n, rank) for n in dims]
    blocks, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        blocks.append(payload[offset:offset + size].reshape(shape))
        offset += size
    if offset != payload.size:
        raise SystemExit(f"{path}: payload has {payload.size} values, expected {offset}")
    return magic.decode(), dims, blocks


def read_data(path, dims_override):
    sep = "," if path.endswith(".csv") else None
    cells = {}
    for raw in open(path, encoding="utf-8"):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split(sep)
        i, j, k = (int(f) for f in fields[:3])
        cells.setdefault((i, j, k), []).append(float(fields[3]))
    keys = sorted(cells)
    coords = np.array(keys, dtype=np.int64)
    # Duplicate cells are averaged.
    y = np.array([sum(cells[key]) / len(cells[key]) for key in keys])
    dims = dims_override or tuple(int(c) + 1 for c in coords.max(axis=0))
    return dims, coords, y


def read_manifest(path, subset, count):
    labels = {}
    for raw in open(path, encoding="utf-8"):
        parts = raw.split()
        if len(parts) == 2 and parts[0].isdigit():
            labels[int(parts[0])] = parts[1]
    if len(labels) != count:
        raise SystemExit(f"{path}: manifest covers {len(labels)} of {count} entries")
    return np.array(sorted(p for p, lab in labels.items() if lab == subset), dtype=np.int64)


def predict(family, blocks, coords):
    u, v, w, d, e, f = blocks
    i, j, k = coords[:, 0], coords[:, 1], coords[:, 2]
    if family == "TRLB":
        core = np.einsum("nab,nbc,nca->n", u[i], v[j], w[k])
    else:
        core = np.einsum("nr,nr,nr->n", u[i], v[j], w[k])
    return core + np.einsum("nr,nr,nr->n", d[i], e[j], f[k])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--manifest")
    ap.add_argument("--subset", default="test", choices=["train", "val", "test", "all"])
    ap.add_argument("--dims")
    ap.add_argument("--compare", help="JSON report to check against")
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args()

    family, model_dims, blocks = read_checkpoint(args.model)
    override = tuple(int(x) for x in args.dims.split(",")) if args.dims else None
    dims, coords, y = read_data(args.data, override)
    if tuple(model_dims) != tuple(dims):
        raise SystemExit(f"checkpoint extents {model_dims} do not match data extents {dims}")
    if args.subset != "all":
        pos = read_manifest(args.manifest, args.subset, len(y))
        coords, y = coords[pos], y[pos]

    residual = y - predict(family, blocks, coords)
    report = {
        "rmse": float(np.sqrt(np.mean(residual ** 2))),
        "mae": float(np.mean(np.abs(residual))),
        "count": int(residual.size),
    }
    print(json.dumps(report))

    if args.compare:
        with open(args.compare, encoding="utf-8") as fh:
            other = json.load(fh)
        bad = [key for key in ("rmse", "mae") if abs(other[key] - report[key]) > args.tol]
        if other["count"] != report["count"]:
            bad.append("count")
        if bad:
            print(f"mismatch in {', '.join(bad)}: {other} vs {report}", file=sys.stderr)
            return 1
        print(f"reports agree within {args.tol:g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
