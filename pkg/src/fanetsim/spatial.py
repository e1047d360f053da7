"""2-D k-d tree with k-nearest-neighbor queries.

Ties in distance are broken toward the lower point index so queries are
deterministic and match a brute-force (distance, index) sort exactly.
"""

from __future__ import annotations

import heapq

import numpy as np


class _Node:
    __slots__ = ("axis", "split", "index", "left", "right")

    def __init__(self, axis, split, index, left, right):
        self.axis = axis
        self.split = split
        self.index = index
        self.left = left
        self.right = right


class KDTree:
    """Static k-d tree over an (n, 2) point array."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"expected (n, 2) points, got {self.points.shape}")
        indices = np.arange(len(self.points))
        self.root = self._build(indices, depth=0)

    def _build(self, indices: np.ndarray, depth: int):
        if len(indices) == 0:
            return None
        axis = depth % 2
        # Sorting by (coordinate, index) keeps construction deterministic
        # when coordinates repeat.
        order = np.lexsort((indices, self.points[indices, axis]))
        indices = indices[order]
        mid = len(indices) // 2
        idx = int(indices[mid])
        return _Node(
            axis,
            float(self.points[idx, axis]),
            idx,
            self._build(indices[:mid], depth + 1),
            self._build(indices[mid + 1:], depth + 1),
        )

    def query(self, target, k: int, exclude: int | None = None) -> list[tuple[float, int]]:
        """Return the k nearest points to target as (distance, index), sorted
        by (distance, index). exclude drops one point index (typically self)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        tx, ty = float(target[0]), float(target[1])
        # Max-heap of the current k best, keyed on (-d2, -index): the root is
        # the worst candidate under the (distance, index) order.
        best: list[tuple[float, int]] = []

        def consider(idx: int):
            if idx == exclude:
                return
            px, py = self.points[idx]
            d2 = (px - tx) ** 2 + (py - ty) ** 2
            key = (-d2, -idx)
            if len(best) < k:
                heapq.heappush(best, key)
            elif key > best[0]:
                heapq.heapreplace(best, key)

        def visit(node):
            if node is None:
                return
            consider(node.index)
            coord = tx if node.axis == 0 else ty
            near, far = (node.left, node.right) if coord <= node.split else (node.right, node.left)
            visit(near)
            gap2 = (coord - node.split) ** 2
            if len(best) < k or gap2 <= -best[0][0]:
                visit(far)

        visit(self.root)
        result = [(float(np.sqrt(-d2)), -idx) for d2, idx in best]
        result.sort(key=lambda r: (r[0], r[1]))
        return result
