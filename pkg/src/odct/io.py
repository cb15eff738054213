"""File formats: versioned array containers and line-delimited JSON records."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np


class RecordError(ValueError):
    """A malformed input record; carries the file and line number."""

    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def save_arrays(path, magic: str, version: int, meta: dict, arrays: Dict[str, np.ndarray]) -> None:
    """Write a header line plus raw little-endian array payloads.

    The layout depends only on the arrays' contents, so save -> load -> save
    reproduces the file byte for byte.
    """
    entries = []
    blobs = []
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        if a.dtype.kind == "f":
            a = a.astype("<f8")
        elif a.dtype.kind in "iub":
            a = a.astype("<i8")
        else:
            raise TypeError(f"unsupported dtype {a.dtype} for {name}")
        a = np.ascontiguousarray(a)
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = {"magic": magic, "version": version, "meta": meta, "arrays": entries}
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(line)
        for b in blobs:
            fh.write(b)


def load_arrays(path, magic: str, version: int) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not a {magic} file ({e})") from None
        if header.get("magic") != magic:
            raise ValueError(f"{path}: expected a {magic} file, found {header.get('magic')!r}")
        if header.get("version") != version:
            raise ValueError(f"{path}: unsupported version {header.get('version')}")
        arrays = {}
        for e in header["arrays"]:
            dt = np.dtype(e["dtype"])
            count = int(np.prod(e["shape"])) if e["shape"] else 1
            buf = fh.read(count * dt.itemsize)
            if len(buf) != count * dt.itemsize:
                raise ValueError(f"{path}: truncated payload for {e['name']}")
            arrays[e["name"]] = np.frombuffer(buf, dtype=dt).reshape(e["shape"]).copy()
    return header["meta"], arrays


def read_jsonl(path, required=()) -> Iterator[Tuple[int, dict]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(path, lineno, f"invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise RecordError(path, lineno, "record is not a JSON object")
            missing = [k for k in required if k not in rec]
            if missing:
                raise RecordError(path, lineno, f"missing field(s) {', '.join(missing)}")
            yield lineno, rec


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# proposal / flow / track records

def read_proposals(path):
    """``snippet_id -> [BoundingBox]`` from a proposal JSONL file."""
    from .trackgen import BoundingBox

    out: Dict[str, List] = {}
    fields = ("snippet_id", "frame_index", "x", "y", "w", "h", "objectness")
    for lineno, rec in read_jsonl(path, fields):
        try:
            box = BoundingBox(
                int(rec["frame_index"]),
                float(rec["x"]),
                float(rec["y"]),
                float(rec["w"]),
                float(rec["h"]),
                float(rec["objectness"]),
            )
        except (TypeError, ValueError) as e:
            raise RecordError(path, lineno, str(e)) from None
        out.setdefault(str(rec["snippet_id"]), []).append(box)
    return out


def read_flows(path):
    from .trackgen import FlowOffset

    out: Dict[str, List] = {}
    for lineno, rec in read_jsonl(path, ("snippet_id", "frame_index", "dx", "dy")):
        try:
            flow = FlowOffset(int(rec["frame_index"]), float(rec["dx"]), float(rec["dy"]))
        except (TypeError, ValueError) as e:
            raise RecordError(path, lineno, str(e)) from None
        out.setdefault(str(rec["snippet_id"]), []).append(flow)
    return out


def box_record(b) -> dict:
    return {"frame_index": b.frame_index, "x": b.x, "y": b.y, "w": b.w, "h": b.h, "objectness": b.objectness}


def proposal_records(snippet_id, boxes):
    for b in boxes:
        yield {"snippet_id": snippet_id, **box_record(b)}


def track_record(t) -> dict:
    return {
        "track_id": t.id,
        "snippet_id": t.snippet_id,
        "score": t.score,
        "boxes": [box_record(b) for b in t.boxes],
    }


def read_tracks(path):
    from .trackgen import BoundingBox, Track

    tracks = []
    for lineno, rec in read_jsonl(path, ("track_id", "snippet_id", "score", "boxes")):
        try:
            boxes = [
                BoundingBox(int(b["frame_index"]), b["x"], b["y"], b["w"], b["h"], b["objectness"])
                for b in rec["boxes"]
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise RecordError(path, lineno, f"bad box: {e}") from None
        tracks.append(Track(int(rec["track_id"]), boxes, str(rec["snippet_id"])))
    return tracks


# training samples

def read_samples(path):
    """Return ``(inputs, track_of)`` from a sample JSONL file.

    Records need ``sample_id`` (contiguous from 0), ``track_id`` and ``input``.
    """
    rows = {}
    for lineno, rec in read_jsonl(path, ("sample_id", "track_id", "input")):
        sid = rec["sample_id"]
        if not isinstance(sid, int) or sid < 0:
            raise RecordError(path, lineno, "sample_id must be a non-negative integer")
        if sid in rows:
            raise RecordError(path, lineno, f"duplicate sample_id {sid}")
        if not isinstance(rec["input"], list) or not rec["input"]:
            raise RecordError(path, lineno, "input must be a non-empty list of numbers")
        rows[sid] = (int(rec["track_id"]), rec["input"], lineno)
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise ValueError(f"{path}: sample ids must form the range [0, {n})")
    dims = {len(rows[i][1]) for i in range(n)}
    if len(dims) > 1:
        raise ValueError(f"{path}: inputs have inconsistent dimensions {sorted(dims)}")
    X = np.array([rows[i][1] for i in range(n)], dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: inputs contain non-finite values")
    track_of = np.array([rows[i][0] for i in range(n)], dtype=np.int64)
    return X, track_of


def sample_records(X, track_of):
    for i, (x, t) in enumerate(zip(np.asarray(X), np.asarray(track_of))):
        yield {"sample_id": i, "track_id": int(t), "input": [float(v) for v in x]}


def read_truth(path) -> np.ndarray:
    rows = {}
    for lineno, rec in read_jsonl(path, ("sample_id", "class")):
        rows[int(rec["sample_id"])] = int(rec["class"])
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: sample ids must form a contiguous range")
    return np.array([rows[i] for i in range(len(rows))], dtype=np.int64)
