"""Single-file weight archives (.fvwt).

Layout, all integers little-endian:

    magic   4 bytes  "FVWT"
    version u16
    doc_len u32, then doc_len bytes of UTF-8 JSON (variant config + mode,
            or {"kind": "tensor"} for single-tensor archives)
    count   u32
    count entries of:
        name_len u32, name bytes (UTF-8, unique, path-like)
        dtype    u8   (0 = float32)
        ndim     u8
        dims     u32 * ndim
        data     raw little-endian values

The embedded config makes archives self-describing: loading rebuilds the
structure first and then binds tensors by name, erroring on any missing or
extra name.  Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ArchiveError
from .model import Model, VariantConfig, build_structure

MAGIC = b"FVWT"
VERSION = 1
DTYPE_F32 = 0

_LE_F32 = np.dtype("<f4")


def _doc_bytes(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_archive(path: str, doc: dict, tensors) -> None:
    tensors = list(tensors)
    seen = set()
    for name, _ in tensors:
        if name in seen:
            raise ArchiveError(f"duplicate tensor name {name!r}")
        seen.add(name)
    payload = _doc_bytes(doc)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, _LE_F32)
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ArchiveError(f"{self.path}: truncated archive")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_archive(path: str) -> tuple[dict, dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ArchiveError(f"cannot read {path}: {exc}")
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise ArchiveError(f"{path}: not a weight archive (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ArchiveError(
            f"{path}: unsupported archive version {version} (expected {VERSION})"
        )
    (doc_len,) = r.unpack("<I")
    try:
        doc = json.loads(r.take(doc_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: malformed config document: {exc}")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        dtype, ndim = r.unpack("<BB")
        if dtype != DTYPE_F32:
            raise ArchiveError(f"{path}: unknown dtype code {dtype} for {name!r}")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        n_elem = 1
        for d in dims:
            n_elem *= d
        data = np.frombuffer(r.take(4 * n_elem), _LE_F32).reshape(dims).copy()
        if name in tensors:
            raise ArchiveError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = data
    if r.pos != len(blob):
        raise ArchiveError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return doc, tensors


def save_weights(model: Model, path: str) -> None:
    doc = {
        "kind": "model",
        "config": model.config.to_json_dict(),
        "mode": model.mode,
    }
    _write_archive(path, doc, model.named_tensors())


def load_weights(path: str) -> Model:
    doc, tensors = _read_archive(path)
    if doc.get("kind") != "model":
        raise ArchiveError(f"{path}: archive holds {doc.get('kind')!r}, not a model")
    try:
        config = VariantConfig.from_json_dict(doc["config"])
    except (KeyError, TypeError) as exc:
        raise ArchiveError(f"{path}: malformed variant config: {exc}")
    skeleton = build_structure(config, mode=doc["mode"], seed=0)
    expected = [name for name, _ in skeleton.named_tensors()]
    missing = [n for n in expected if n not in tensors]
    extra = [n for n in tensors if n not in set(expected)]
    if missing or extra:
        raise ArchiveError(
            f"{path}: tensor names do not match the {config.name!r} "
            f"{doc['mode']} structure; missing={missing[:8]} extra={extra[:8]}"
        )
    return skeleton.load_tensors(tensors)


def save_tensor(array, path: str, name: str = "tensor") -> None:
    """Write a single-tensor archive (used for model inputs/outputs)."""
    _write_archive(path, {"kind": "tensor"},
                   [(name, np.ascontiguousarray(array, np.float32))])


def load_tensor(path: str) -> np.ndarray:
    doc, tensors = _read_archive(path)
    if doc.get("kind") != "tensor":
        raise ArchiveError(f"{path}: archive holds {doc.get('kind')!r}, not a tensor")
    if len(tensors) != 1:
        raise ArchiveError(
            f"{path}: expected exactly one tensor, found {len(tensors)}"
        )
    return next(iter(tensors.values()))
