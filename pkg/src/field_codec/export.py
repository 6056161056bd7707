"""8-bit PGM snapshots of fields.

Gray level ``g = round(255 * (v - vmin) / (vmax - vmin))`` after clamping
to [vmin, vmax]; the header comment records vmin/vmax so ``read_pgm`` can
map gray levels back to values (to within half a gray step).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def write_pgm(path, values, vmin: float, vmax: float) -> None:
    v = np.clip(np.asarray(values, dtype=np.float64), vmin, vmax)
    gray = np.rint(255.0 * (v - vmin) / (vmax - vmin)).astype(np.uint8)
    h, w = gray.shape
    header = f"P5\n# vmin={vmin!r} vmax={vmax!r}\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + gray.tobytes())


def read_pgm(path):
    """Return ``(values, vmin, vmax)`` for a file written by ``write_pgm``."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\n# vmin=(\S+) vmax=(\S+)\n(\d+) (\d+)\n255\n", raw)
    if m is None:
        raise ValueError(f"{path}: not a PGM written by write_pgm")
    vmin, vmax = float(m.group(1)), float(m.group(2))
    w, h = int(m.group(3)), int(m.group(4))
    gray = np.frombuffer(raw, np.uint8, h * w, m.end()).reshape(h, w)
    return vmin + gray.astype(np.float64) / 255.0 * (vmax - vmin), vmin, vmax
