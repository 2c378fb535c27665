"""On-disk formats: binary field dumps, CSV tables, JSON summaries and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import GridField, build_domain

FIELD_MAGIC = 0x4F42534C4142  # "OBSLAB"
FIELD_VERSION = 1
# magic, version, dim, n_nodes, n_interior (int64); h, radius, closed (float64)
FIELD_HEADER = struct.Struct("<5q3d")
FORMAT_VERSIONS = {"field": FIELD_VERSION, "csv": 1, "json": 1, "manifest": 1}


class FieldFormatError(ValueError):
    pass


def write_field(path, u: GridField) -> Path:
    """Little-endian float64 node values after a fixed 64-byte header."""
    dom = u.domain
    path = Path(path)
    head = FIELD_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, dom.dim, dom.n_nodes, dom.n_interior,
                             dom.spacing, dom.radius, 1.0 if dom.closed else 0.0)
    path.write_bytes(head + np.asarray(u.values, dtype="<f8").tobytes())
    return path


def read_field(path) -> GridField:
    """Inverse of :func:`write_field`; the domain is rebuilt from the header."""
    raw = Path(path).read_bytes()
    if len(raw) < FIELD_HEADER.size:
        raise FieldFormatError(f"{path}: file shorter than the header")
    magic, version, dim, n_nodes, n_int, h, radius, closed = FIELD_HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: not a field dump")
    if version != FIELD_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    values = np.frombuffer(raw, dtype="<f8", offset=FIELD_HEADER.size)
    if len(values) != n_nodes:
        raise FieldFormatError(f"{path}: expected {n_nodes} values, found {len(values)}")
    dom = build_domain(int(dim), h, radius, closed=bool(closed))
    if dom.n_nodes != n_nodes or dom.n_interior != n_int:
        raise FieldFormatError(f"{path}: header does not match the rebuilt domain")
    return GridField(dom, values.astype(float))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files: Sequence, config_hash: str, version: str, timings: dict,
                   extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    inventory = {}
    for f in files:
        p = Path(f)
        inventory[p.relative_to(out_dir).as_posix()] = {"sha256": sha256_of(p), "bytes": p.stat().st_size}
    data = {
        "config_hash": config_hash,
        "tool_version": version,
        "formats": FORMAT_VERSIONS,
        "timings_seconds": timings,
        "files": inventory,
    }
    if extra:
        data.update(extra)
    return write_json(out_dir / "manifest.json", data)


def verify_manifest(out_dir) -> list[str]:
    """Names of listed files that are missing or whose checksum changed."""
    out_dir = Path(out_dir)
    data = json.loads((out_dir / "manifest.json").read_text())
    bad = []
    for name, meta in data["files"].items():
        p = out_dir / name
        if not p.exists() or sha256_of(p) != meta["sha256"]:
            bad.append(name)
    return bad
