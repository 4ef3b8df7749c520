"""Pure-Python connected-component labeling kernel.

Fallback used when the compiled extension is unavailable. Two-pass
union-find; region ids are assigned in order of each region's first pixel in
row-major scan order, which both kernels guarantee identically.
"""

from __future__ import annotations

import numpy as np


def _find(parent: list[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def label(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label connected true-pixels of a 2D mask.

    Returns (labels, n) where labels is int32 with 0 = background and
    regions numbered 1..n.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if h == 0 or w == 0:
        return labels, 0

    flat = [0] * (h * w)
    ys, xs = np.nonzero(mask)
    coords = list(zip(ys.tolist(), xs.tolist()))
    parent = [0]
    next_label = 1

    for y, x in coords:
        idx = y * w + x
        neigh = []
        if x > 0 and flat[idx - 1]:
            neigh.append(flat[idx - 1])
        if y > 0:
            up = idx - w
            if flat[up]:
                neigh.append(flat[up])
            if connectivity == 8:
                if x > 0 and flat[up - 1]:
                    neigh.append(flat[up - 1])
                if x < w - 1 and flat[up + 1]:
                    neigh.append(flat[up + 1])
        if not neigh:
            flat[idx] = next_label
            parent.append(next_label)
            next_label += 1
        else:
            roots = [_find(parent, n) for n in neigh]
            target = min(roots)
            flat[idx] = target
            for r in roots:
                if r != target:
                    parent[r] = target

    remap: dict[int, int] = {}
    for y, x in coords:
        idx = y * w + x
        root = _find(parent, flat[idx])
        rid = remap.get(root)
        if rid is None:
            rid = len(remap) + 1
            remap[root] = rid
        labels[y, x] = rid
    return labels, len(remap)
