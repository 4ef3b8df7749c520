# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled connected-component labeling kernel.

Semantics match _labeling_py.label exactly: two-pass union-find, region ids
in first-pixel row-major order, 0 = background.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline int _find(int[::1] parent, int x) nogil:
    cdef int root = x
    cdef int nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def label(mask, int connectivity=8):
    """Label connected true-pixels of a 2D mask. Returns (labels, n)."""
    if connectivity != 4 and connectivity != 8:
        raise ValueError("connectivity must be 4 or 8")
    cdef cnp.ndarray mask_u8 = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef unsigned char[:, ::1] m = mask_u8
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    if h == 0 or w == 0:
        return labels_arr, 0

    parent_arr = np.zeros(h * w // 2 + 2, dtype=np.int32)
    cdef int[::1] parent = parent_arr
    cdef int next_label = 1
    cdef Py_ssize_t y, x
    cdef int n0, n1, n2, n3, target, r
    cdef bint eight = connectivity == 8

    with nogil:
        for y in range(h):
            for x in range(w):
                if not m[y, x]:
                    continue
                n0 = labels[y, x - 1] if x > 0 else 0
                n1 = labels[y - 1, x] if y > 0 else 0
                n2 = 0
                n3 = 0
                if eight and y > 0:
                    if x > 0:
                        n2 = labels[y - 1, x - 1]
                    if x < w - 1:
                        n3 = labels[y - 1, x + 1]
                if n0 == 0 and n1 == 0 and n2 == 0 and n3 == 0:
                    labels[y, x] = next_label
                    parent[next_label] = next_label
                    next_label += 1
                else:
                    target = 0
                    if n0:
                        target = _find(parent, n0)
                    if n1:
                        r = _find(parent, n1)
                        target = r if target == 0 or r < target else target
                    if n2:
                        r = _find(parent, n2)
                        target = r if target == 0 or r < target else target
                    if n3:
                        r = _find(parent, n3)
                        target = r if target == 0 or r < target else target
                    labels[y, x] = target
                    if n0:
                        parent[_find(parent, n0)] = target
                    if n1:
                        parent[_find(parent, n1)] = target
                    if n2:
                        parent[_find(parent, n2)] = target
                    if n3:
                        parent[_find(parent, n3)] = target

    remap_arr = np.zeros(next_label, dtype=np.int32)
    cdef int[::1] remap = remap_arr
    cdef int n_regions = 0
    cdef int root
    with nogil:
        for y in range(h):
            for x in range(w):
                if labels[y, x]:
                    root = _find(parent, labels[y, x])
                    if remap[root] == 0:
                        n_regions += 1
                        remap[root] = n_regions
                    labels[y, x] = remap[root]
    return labels_arr, n_regions
