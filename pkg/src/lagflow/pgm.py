"""Plain-text portable graymap (P2) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_p2(path) -> tuple[np.ndarray, int]:
    """Return ``(values, maxval)``; ``values`` is a 2-D integer array, first row first."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain P2 graymap")
    width, height, maxval = (int(v) for v in tokens[1:4])
    data = np.array([int(v) for v in tokens[4:4 + width * height]], dtype=np.int64)
    if data.size != width * height:
        raise ValueError(f"{path}: expected {width * height} samples, found {data.size}")
    return data.reshape(height, width), maxval


def write_p2(path, values: np.ndarray, maxval: int = 255, comment: str | None = None) -> None:
    """Write an integer array as P2; row 0 of ``values`` is written first."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("P2 rasters must be two-dimensional")
    if values.min(initial=0) < 0 or values.max(initial=0) > maxval:
        raise ValueError("P2 samples must lie in [0, maxval]")
    height, width = values.shape
    lines = ["P2"]
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{width} {height}")
    lines.append(str(maxval))
    for row in values.astype(np.int64):
        # keep lines short; some readers cap line length at 70 characters
        for start in range(0, width, 17):
            lines.append(" ".join(str(v) for v in row[start:start + 17]))
    Path(path).write_text("\n".join(lines) + "\n")
