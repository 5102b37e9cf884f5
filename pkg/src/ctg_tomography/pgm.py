from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InstanceParseError


def write_pgm(path: str | Path, image: np.ndarray, maxval: int) -> Path:
    """Write a plain (P2) PGM; label ``x`` is stored as grey level ``x``."""
    pixels = np.asarray(image, dtype=np.int64)
    if pixels.ndim != 2:
        raise ValueError("PGM images must be two-dimensional")
    height, width = pixels.shape
    lines = ["P2", f"{width} {height}", str(max(1, int(maxval)))]
    lines.extend(" ".join(str(int(value)) for value in row) for row in pixels)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(lines) + "\n", encoding="ascii")
    return target


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    source = Path(path)
    tokens: list[str] = []
    for line in source.read_text(encoding="ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise InstanceParseError("expected plain PGM magic P2", field="pgm.magic")
    try:
        width, height, maxval = (int(token) for token in tokens[1:4])
        values = [int(token) for token in tokens[4:]]
    except ValueError as exc:
        raise InstanceParseError(str(exc), field="pgm.header") from exc
    if len(values) != width * height:
        raise InstanceParseError(f"expected {width * height} pixels, got {len(values)}", field="pgm.pixels")
    return np.array(values, dtype=np.int64).reshape(height, width), maxval
