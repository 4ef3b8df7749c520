"""Raster stage of the schematic pipeline: image IO, binarization,
component removal, and connected-component labeling.

Labeling runs on the compiled kernel when the extension built, otherwise on
the pure-Python fallback; both produce identical labels (region ids ordered
by first pixel, row-major). ``CIRCUITLIT_FORCE_PY_KERNEL=1`` forces the
fallback, mainly for the benchmark.

All bounding boxes are half-open pixel rectangles (x0, y0, x1, y1): x in
[x0, x1), y in [y0, y1).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyImage
from . import _labeling_py

try:
    from . import _labeling as _labeling_c  # compiled extension
except ImportError:  # pragma: no cover - depends on build environment
    _labeling_c = None

if _labeling_c is not None and os.environ.get("CIRCUITLIT_FORCE_PY_KERNEL") != "1":
    _kernel = _labeling_c
    LABELING_BACKEND = "compiled"
else:
    _kernel = _labeling_py
    LABELING_BACKEND = "python"


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5 binary or P2 ASCII)."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a PGM file")
    binary = raw[:2] == b"P5"

    # Header tokens: magic, width, height, maxval; '#' comments allowed.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(raw):
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if len(tokens) < 3:
        raise ValueError(f"{path}: truncated PGM header")
    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")

    if binary:
        pos += 1  # single whitespace after maxval
        data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    else:
        values = raw[pos:].split()
        if len(values) < width * height:
            raise ValueError(f"{path}: truncated PGM data")
        data = np.array([int(v) for v in values[: width * height]], dtype=np.uint8)
    return data.reshape(height, width).copy()


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def binarize(image: np.ndarray, threshold: int = 128) -> np.ndarray:
    """Dark-on-light thresholding: pixel value < threshold becomes True."""
    if image.size == 0:
        raise EmptyImage("image has no pixels")
    return image < threshold


def mask_components(
    mask: np.ndarray, detections, dilation_px: int = 2
) -> np.ndarray:
    """Clear every detection bbox, dilated outward, leaving only wires."""
    out = mask.copy()
    h, w = out.shape
    for det in detections:
        x0, y0, x1, y1 = det.bbox
        out[
            max(0, y0 - dilation_px) : min(h, y1 + dilation_px),
            max(0, x0 - dilation_px) : min(w, x1 + dilation_px),
        ] = False
    return out


@dataclass(frozen=True)
class Region:
    """One connected wire cluster (a candidate electrical node)."""

    region_id: int
    pixel_count: int
    bbox: tuple[int, int, int, int]
    touched_components: frozenset[tuple[str, str]] = field(default_factory=frozenset)


def label_pixels(mask: np.ndarray, connectivity: int = 8, backend: str | None = None):
    """Raw labeling: returns (labels int32, region count)."""
    if backend == "python":
        return _labeling_py.label(mask, connectivity)
    if backend == "compiled":
        if _labeling_c is None:
            raise RuntimeError("compiled labeling kernel not available")
        return _labeling_c.label(mask, connectivity)
    return _kernel.label(mask, connectivity)


def region_stats(labels: np.ndarray, n: int) -> list[Region]:
    """Per-region pixel counts and bboxes from a label image."""
    if n == 0:
        return []
    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs]
    counts = np.bincount(ids, minlength=n + 1)
    x0 = np.full(n + 1, np.iinfo(np.int64).max)
    y0 = np.full(n + 1, np.iinfo(np.int64).max)
    x1 = np.zeros(n + 1, dtype=np.int64)
    y1 = np.zeros(n + 1, dtype=np.int64)
    np.minimum.at(x0, ids, xs)
    np.minimum.at(y0, ids, ys)
    np.maximum.at(x1, ids, xs)
    np.maximum.at(y1, ids, ys)
    return [
        Region(
            region_id=i,
            pixel_count=int(counts[i]),
            bbox=(int(x0[i]), int(y0[i]), int(x1[i]) + 1, int(y1[i]) + 1),
        )
        for i in range(1, n + 1)
    ]


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[Region]:
    """Label a wire mask into deterministic, disjoint regions."""
    labels, n = label_pixels(mask, connectivity)
    return region_stats(labels, n)
