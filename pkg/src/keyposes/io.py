"""Reading and writing motion sequences as CSV or JSONL.

CSV files carry a ``frame,j0_x,j0_y,j0_z,j1_x,...`` header and one row per
frame. JSONL files hold one ``{"frame": int, "joints": [[x, y, z], ...]}``
object per line. An optional ``<name>.meta`` sidecar stores ``action=`` and
``fps=`` lines. Floats are written with ``repr`` so a save/load round trip is
exact.
"""

from __future__ import annotations

import contextlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .core import REFERENCE_FPS, MotionSequence

FORMATS = ("csv", "jsonl")


class SequenceFormatError(ValueError):
    """Raised when a sequence file does not follow the documented layout."""


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix not in FORMATS:
        raise SequenceFormatError(f"cannot infer format from extension of {path}")
    return suffix


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta")


@contextlib.contextmanager
def atomic_write(path, mode: str = "w") -> Iterator:
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        newline = "" if "b" not in mode else None
        encoding = "utf-8" if "b" not in mode else None
        with os.fdopen(fd, mode, newline=newline, encoding=encoding) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _read_meta(path) -> dict:
    meta = {}
    mpath = meta_path(path)
    if not mpath.exists():
        return meta
    for line in mpath.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SequenceFormatError(f"{mpath}: expected key=value, got {line!r}")
        meta[key.strip()] = value.strip()
    return meta


def _parse_float(text: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SequenceFormatError(f"row {row}: malformed number {text!r}") from None
    if not np.isfinite(value):
        raise SequenceFormatError(f"row {row}: non-finite coordinate {text!r}")
    return value


def _load_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise SequenceFormatError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "frame" or (len(header) - 1) % 3 != 0 or len(header) < 4:
        raise SequenceFormatError(f"{path}: bad header, expected frame,j0_x,j0_y,j0_z,...")
    n_cols = len(header)
    frames = []
    for row, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise SequenceFormatError(
                f"{path}: row {row}: inconsistent column count "
                f"(expected {n_cols}, got {len(cells)})"
            )
        frames.append([_parse_float(c, row) for c in cells[1:]])
    if not frames:
        raise SequenceFormatError(f"{path}: empty file (header only)")
    J = (n_cols - 1) // 3
    return np.asarray(frames, dtype=np.float64).reshape(len(frames), J, 3)


def _load_jsonl(path) -> np.ndarray:
    frames = []
    J = None
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                joints = obj["joints"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SequenceFormatError(f"{path}: row {row}: malformed row ({exc})") from None
            if not isinstance(joints, list) or any(
                not isinstance(j, list) or len(j) != 3 for j in joints
            ):
                raise SequenceFormatError(f"{path}: row {row}: joints must be [[x,y,z],...]")
            if J is None:
                J = len(joints)
            if len(joints) != J or J == 0:
                raise SequenceFormatError(
                    f"{path}: row {row}: inconsistent column count "
                    f"(expected {J} joints, got {len(joints)})"
                )
            frames.append([[_parse_float(str(c), row) for c in j] for j in joints])
    if not frames:
        raise SequenceFormatError(f"{path}: empty file")
    return np.asarray(frames, dtype=np.float64)


def load_sequence(path, format: Optional[str] = None) -> MotionSequence:
    """Load a sequence; ``format`` defaults to the file extension."""
    fmt = format or infer_format(path)
    if fmt == "csv":
        frames = _load_csv(path)
    elif fmt == "jsonl":
        frames = _load_jsonl(path)
    else:
        raise SequenceFormatError(f"unknown format {fmt!r}")
    meta = _read_meta(path)
    fps = float(meta.get("fps", REFERENCE_FPS))
    return MotionSequence(frames, fps, meta.get("action") or None)


def _write_csv(fh, seq: MotionSequence) -> None:
    cols = ["frame"] + [f"j{j}_{ax}" for j in range(seq.J) for ax in "xyz"]
    fh.write(",".join(cols) + "\n")
    for t, pose in enumerate(seq.frames, start=1):
        fh.write(str(t) + "," + ",".join(repr(float(v)) for v in pose.ravel()) + "\n")


def _write_jsonl(fh, seq: MotionSequence) -> None:
    for t, pose in enumerate(seq.frames, start=1):
        fh.write(json.dumps({"frame": t, "joints": pose.tolist()}) + "\n")


def save_sequence(seq: MotionSequence, path, format: Optional[str] = None) -> None:
    """Write ``seq`` atomically; a failed write leaves no partial file."""
    fmt = format or infer_format(path)
    writer = {"csv": _write_csv, "jsonl": _write_jsonl}.get(fmt)
    if writer is None:
        raise SequenceFormatError(f"unknown format {fmt!r}")
    with atomic_write(path) as fh:
        writer(fh, seq)
    mpath = meta_path(path)
    lines = [f"fps={seq.frame_rate_hz!r}"]
    if seq.action:
        lines.insert(0, f"action={seq.action}")
    with atomic_write(mpath) as fh:
        fh.write("\n".join(lines) + "\n")
