"""On-disk artifacts: episode and feature caches, feature masks, models.

Binary caches are little-endian::

    header   magic (8 bytes) | version u16 | config hash (16 ASCII bytes)
             [feature cache only: dim u32]
    record*  length u32 (bytes after this field) | payload

Episode record payload::

    label u8 (0 NOT_VF, 1 VF) | fs f64 | T_e f64 | start u64
    | source length u16 | source UTF-8 | n u32 | n x f64 samples

Feature record payload::

    label i8 (+1 VF, -1 NOT_VF) | start u64 | source length u16
    | source UTF-8 | dim x f64

There is no record count, so records can be appended to an existing
file.  Every file is written to a temporary name and renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import EcgEpisode, Rhythm
from .ranking import FeatureMask
from .svm import SvmModel

__all__ = [
    "CacheError",
    "FeatureTable",
    "write_episode_cache",
    "append_episode_cache",
    "read_episode_cache",
    "write_feature_cache",
    "read_feature_cache",
    "write_feature_csv",
    "write_mask",
    "read_mask",
    "write_importances",
    "save_model",
    "load_model",
    "atomic_write",
]

EPISODE_MAGIC = b"VFEPCACH"
FEATURE_MAGIC = b"VFFTCACH"
VERSION = 1
MODEL_FORMAT = "vfdetect-svm"
MODEL_VERSION = 1

_HEAD = struct.Struct("<8sH16s")
_U32 = struct.Struct("<I")
_EP_FIXED = struct.Struct("<BddQ")
_FT_FIXED = struct.Struct("<bQ")
_U16 = struct.Struct("<H")


class CacheError(ValueError):
    """Unreadable, corrupt or mismatched artifact."""


def atomic_write(path: str | Path, data: bytes | str) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _header(magic: bytes, config_hash: str) -> bytes:
    h = config_hash.encode("ascii")
    if len(h) != 16:
        raise ValueError("config hash must be 16 hex characters")
    return _HEAD.pack(magic, VERSION, h)


def _source(s: str) -> bytes:
    b = s.encode("utf-8")[:65535]
    return _U16.pack(len(b)) + b


def _episode_record(ep: EcgEpisode) -> bytes:
    body = (
        _EP_FIXED.pack(1 if ep.is_vf else 0, ep.sampling_rate_hz, ep.episode_length_s, ep.start)
        + _source(ep.source)
        + _U32.pack(len(ep.samples))
        + np.asarray(ep.samples, dtype="<f8").tobytes()
    )
    return _U32.pack(len(body)) + body


def write_episode_cache(path, episodes, config_hash: str) -> None:
    atomic_write(path, _header(EPISODE_MAGIC, config_hash) + b"".join(map(_episode_record, episodes)))


def append_episode_cache(path, episodes, config_hash: str) -> None:
    """Append episodes to an existing cache written under the same hash."""
    path = Path(path)
    data = path.read_bytes()
    _check_header(data, EPISODE_MAGIC, path, config_hash)
    atomic_write(path, data + b"".join(map(_episode_record, episodes)))


def _check_header(data: bytes, magic: bytes, path, expect_hash: str | None) -> tuple[str, int]:
    if len(data) < _HEAD.size:
        raise CacheError(f"{path}: truncated header at byte offset {len(data)}")
    got_magic, version, h = _HEAD.unpack_from(data, 0)
    if got_magic != magic:
        raise CacheError(f"{path}: bad magic {got_magic!r} at byte offset 0")
    if version != VERSION:
        raise CacheError(f"{path}: unsupported version {version} at byte offset 8")
    h = h.decode("ascii", "replace")
    if expect_hash is not None and h != expect_hash:
        raise CacheError(
            f"{path}: built with config hash {h}, current config hashes to {expect_hash}; "
            "rebuild it with the current config"
        )
    return h, _HEAD.size


def _records(data: bytes, pos: int, path):
    while pos < len(data):
        if pos + 4 > len(data):
            raise CacheError(f"{path}: truncated record length at byte offset {pos}")
        (n,) = _U32.unpack_from(data, pos)
        if pos + 4 + n > len(data):
            raise CacheError(f"{path}: record at byte offset {pos} runs past end of file")
        yield pos, memoryview(data)[pos + 4:pos + 4 + n]
        pos += 4 + n


def _read_source(buf, off, path, rec_pos):
    if off + 2 > len(buf):
        raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}")
    (ln,) = _U16.unpack_from(buf, off)
    off += 2
    if off + ln > len(buf):
        raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}")
    return bytes(buf[off:off + ln]).decode("utf-8", "replace"), off + ln


def read_episode_cache(path, expect_hash: str | None = None) -> tuple[list[EcgEpisode], str]:
    path = Path(path)
    data = path.read_bytes()
    h, pos = _check_header(data, EPISODE_MAGIC, path, expect_hash)
    out = []
    for rec_pos, buf in _records(data, pos, path):
        try:
            label, fs, te, start = _EP_FIXED.unpack_from(buf, 0)
            source, off = _read_source(buf, _EP_FIXED.size, path, rec_pos)
            (n,) = _U32.unpack_from(buf, off)
            off += 4
        except struct.error:
            raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}") from None
        if off + 8 * n != len(buf) or label > 1:
            raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}")
        samples = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(float)
        out.append(
            EcgEpisode(samples, fs, te, Rhythm.VF if label else Rhythm.NOT_VF, source, start)
        )
    return out, h


@dataclass
class FeatureTable:
    X: np.ndarray
    y: np.ndarray
    sources: list[str]
    starts: np.ndarray
    config_hash: str

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def write_feature_cache(path, X, y, sources, starts, config_hash: str) -> None:
    X = np.asarray(X, dtype="<f8")
    parts = [_header(FEATURE_MAGIC, config_hash), _U32.pack(X.shape[1])]
    for row, label, src, start in zip(X, y, sources, starts):
        body = _FT_FIXED.pack(int(label), int(start)) + _source(src) + row.tobytes()
        parts.append(_U32.pack(len(body)) + body)
    atomic_write(path, b"".join(parts))


def read_feature_cache(path, expect_hash: str | None = None) -> FeatureTable:
    path = Path(path)
    data = path.read_bytes()
    h, pos = _check_header(data, FEATURE_MAGIC, path, expect_hash)
    if pos + 4 > len(data):
        raise CacheError(f"{path}: truncated header at byte offset {len(data)}")
    (dim,) = _U32.unpack_from(data, pos)
    pos += 4
    rows, ys, sources, starts = [], [], [], []
    for rec_pos, buf in _records(data, pos, path):
        try:
            label, start = _FT_FIXED.unpack_from(buf, 0)
            source, off = _read_source(buf, _FT_FIXED.size, path, rec_pos)
        except struct.error:
            raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}") from None
        if off + 8 * dim != len(buf) or label not in (-1, 1):
            raise CacheError(f"{path}: corrupt record at byte offset {rec_pos}")
        rows.append(np.frombuffer(buf, dtype="<f8", count=dim, offset=off))
        ys.append(label)
        sources.append(source)
        starts.append(start)
    X = np.vstack(rows).astype(float) if rows else np.empty((0, dim))
    return FeatureTable(X, np.asarray(ys, dtype=np.int64), sources, np.asarray(starts, np.int64), h)


def write_feature_csv(path, X, y, sources, starts, config_hash: str) -> None:
    X = np.asarray(X)
    lines = [f"# config_hash={config_hash}", "label,source,start," + ",".join(f"f{i}" for i in range(X.shape[1]))]
    for row, label, src, start in zip(X, y, sources, starts):
        lines.append(f"{int(label)},{src},{int(start)}," + ",".join(repr(float(v)) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def _text_header(kind: str, meta: dict) -> list[str]:
    return [f"# vfdetect {kind} v{VERSION}"] + [f"# {k}={v}" for k, v in meta.items()]


def _parse_text_header(lines) -> dict[str, str]:
    meta = {}
    for ln in lines:
        if ln.startswith("# ") and "=" in ln:
            k, _, v = ln[2:].partition("=")
            meta[k.strip()] = v.strip()
    return meta


def write_mask(path, mask: FeatureMask, config_hash: str, features_hash: str) -> None:
    lines = _text_header(
        "feature mask",
        {"config_hash": config_hash, "features_hash": features_hash,
         "fraction": repr(mask.fraction), "dim": mask.dim},
    )
    lines += [str(int(i)) for i in mask.selected_indices]
    atomic_write(path, "\n".join(lines) + "\n")


def read_mask(path) -> tuple[FeatureMask, dict[str, str]]:
    path = Path(path)
    lines = path.read_text().splitlines()
    meta = _parse_text_header(lines)
    try:
        idx = np.array([int(ln) for ln in lines if ln.strip() and not ln.startswith("#")], dtype=np.int64)
        mask = FeatureMask(idx, float(meta["fraction"]), int(meta["dim"]))
    except (KeyError, ValueError) as exc:
        raise CacheError(f"{path}: malformed feature mask ({exc})") from None
    if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= mask.dim):
        raise CacheError(f"{path}: mask indices must be sorted, unique and below dim")
    return mask, meta


def write_importances(path, importances, config_hash: str) -> None:
    lines = _text_header("feature importances", {"config_hash": config_hash})
    lines.append("index\timportance")
    lines += [f"{i}\t{v!r}" for i, v in enumerate(np.asarray(importances, dtype=float).tolist())]
    atomic_write(path, "\n".join(lines) + "\n")


def save_model(path, model: SvmModel, config: dict, hashes: dict[str, str]) -> None:
    """JSON container; floats are written with round-trip precision."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hashes": hashes,
        "gamma": model.gamma,
        "c": model.c,
        "bias": model.bias,
        "feature_fraction": config.get("feature_fraction"),
        "feature_mask": None if model.feature_mask is None else [int(i) for i in model.feature_mask],
        "n_support": int(len(model.dual_coef)),
        "dual_coef": [float(v) for v in model.dual_coef],
        "support_vectors": np.asarray(model.support_vectors, float).tolist(),
        "training": {"n_iter": model.n_iter, "objective": model.objective,
                     "max_violation": model.max_violation},
        "config": config,
    }
    atomic_write(path, json.dumps(doc, indent=1) + "\n")


def load_model(path) -> tuple[SvmModel, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CacheError(f"{path}: not a model file ({exc})") from None
    if doc.get("format") != MODEL_FORMAT:
        raise CacheError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise CacheError(f"{path}: unsupported model version {doc.get('version')}")
    try:
        return _model_from_doc(doc), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise CacheError(f"{path}: malformed model ({type(exc).__name__}: {exc})") from None


def _model_from_doc(doc: dict) -> SvmModel:
    mask = doc.get("feature_mask")
    sv = np.asarray(doc["support_vectors"], dtype=float)
    return SvmModel(
        support_vectors=sv.reshape(len(doc["dual_coef"]), -1) if sv.size else sv.reshape(0, len(mask or [])),
        dual_coef=np.asarray(doc["dual_coef"], dtype=float),
        bias=float(doc["bias"]),
        gamma=float(doc["gamma"]),
        c=float(doc["c"]),
        feature_mask=None if mask is None else np.asarray(mask, dtype=np.int64),
        n_iter=doc.get("training", {}).get("n_iter", 0),
        objective=doc.get("training", {}).get("objective", float("nan")),
        max_violation=doc.get("training", {}).get("max_violation", float("nan")),
    )
