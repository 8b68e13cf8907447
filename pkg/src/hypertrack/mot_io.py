"""MOT-Challenge text files.

Each line is ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
Detections carry ``id = -1``. Rows keep the file's top-left geometry so a
write/read cycle is lossless; :attr:`MotRow.box` gives the center form.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


class MotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MotRow:
    frame: int
    id: int
    left: float
    top: float
    width: float
    height: float
    conf: float = 1.0

    @property
    def box(self) -> np.ndarray:
        """``(cx, cy, w, h)`` in file units."""
        return np.array([self.left + self.width / 2.0, self.top + self.height / 2.0,
                         self.width, self.height])

    @property
    def is_detection(self) -> bool:
        return self.id == -1

    @classmethod
    def from_center(cls, frame: int, obj_id: int, box, conf: float = 1.0) -> "MotRow":
        cx, cy, w, h = (float(v) for v in box)
        return cls(int(frame), int(obj_id), cx - w / 2.0, cy - h / 2.0, w, h, float(conf))


def _fmt(v: float) -> str:
    return repr(float(v))


def parse_line(line: str, lineno: int = 0) -> MotRow:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) < 7:
        raise MotFormatError(f"line {lineno}: expected at least 7 comma-separated fields, got {len(parts)}")
    try:
        frame = int(float(parts[0]))
        obj_id = int(float(parts[1]))
        left, top, w, h, conf = (float(p) for p in parts[2:7])
    except ValueError as exc:
        raise MotFormatError(f"line {lineno}: {exc}") from None
    if w <= 0 or h <= 0:
        raise MotFormatError(f"line {lineno}: non-positive box size")
    return MotRow(frame, obj_id, left, top, w, h, conf)


def read_mot(path) -> dict[int, list[MotRow]]:
    """Rows grouped by frame, in file order. An empty file yields ``{}``."""
    frames: dict[int, list[MotRow]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = parse_line(line, lineno)
            frames.setdefault(row.frame, []).append(row)
    return frames


def format_row(row: MotRow) -> str:
    return ",".join([str(row.frame), str(row.id), _fmt(row.left), _fmt(row.top), _fmt(row.width),
                     _fmt(row.height), _fmt(row.conf), "-1", "-1", "-1"])


def write_mot(rows: Iterable[MotRow], path) -> None:
    """Write rows sorted by ``(frame, id)``; stable for equal keys."""
    ordered = sorted(rows, key=lambda r: (r.frame, r.id))
    text = "".join(format_row(r) + "\n" for r in ordered)
    Path(path).write_text(text)


def flatten(frames: dict[int, list[MotRow]]) -> list[MotRow]:
    return [r for f in sorted(frames) for r in frames[f]]
