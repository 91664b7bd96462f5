"""Finite site sets of Z^d and fast membership lookups."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def as_sites(K, d: int | None = None) -> np.ndarray:
    """Normalise a site collection to a sorted, duplicate-free ``(m, d)`` int array."""
    arr = np.asarray(K, dtype=np.int64)
    if arr.size == 0:
        if d is None:
            raise ValueError("dimension needed for an empty site set")
        return np.zeros((0, d), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"sites have dimension {arr.shape[1]}, expected {d}")
    return np.unique(arr, axis=0)


def point(d: int, x=None) -> np.ndarray:
    return as_sites(np.zeros(d, dtype=np.int64) if x is None else x, d)


def ball(radius: float, d: int, center=None) -> np.ndarray:
    """Sites within Euclidean distance ``radius`` of ``center``."""
    r = int(np.floor(radius))
    c = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center, dtype=np.int64)
    grid = np.array(list(itertools.product(range(-r, r + 1), repeat=d)), dtype=np.int64)
    keep = np.sum(grid * grid, axis=1) <= radius * radius + 1e-9
    return as_sites(grid[keep] + c, d)


def box(side: int, d: int, offset=None) -> np.ndarray:
    """Sites of ``[-side/2, side/2)^d`` shifted by ``offset`` (side may be odd)."""
    lo = -(side // 2)
    grid = np.array(list(itertools.product(range(lo, lo + side), repeat=d)), dtype=np.int64)
    if offset is not None:
        grid = grid + np.asarray(offset, dtype=np.int64)
    return as_sites(grid, d)


def named_shape(shape: str, d: int) -> np.ndarray:
    """Parse ``"point"``, ``"ball:R"`` or ``"box:S"``, or a ``;``-separated site list
    such as ``"0,0,0;1,0,0"``."""
    shape = shape.strip()
    if shape == "point":
        return point(d)
    if shape.startswith("ball"):
        return ball(float(shape.split(":")[1]) if ":" in shape else 1.0, d)
    if shape.startswith("box"):
        return box(int(shape.split(":")[1]) if ":" in shape else 2, d)
    sites = [[int(v) for v in s.split(",")] for s in shape.split(";") if s.strip()]
    return as_sites(sites, d)


def diameter(K: np.ndarray) -> float:
    if len(K) < 2:
        return 0.0
    diff = K[:, None, :] - K[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


@dataclass(frozen=True)
class SiteLookup:
    """Dense index grid over the bounding box of a site set.

    ``index[y - lo]`` is the row of ``y`` in ``sites`` or -1; the arrays are
    passed straight into the numba kernels.
    """

    sites: np.ndarray
    lo: np.ndarray
    index: np.ndarray

    @classmethod
    def build(cls, K) -> "SiteLookup":
        sites = as_sites(K)
        lo = sites.min(axis=0)
        shape = sites.max(axis=0) - lo + 1
        index = -np.ones(np.prod(shape), dtype=np.int64)
        flat = np.ravel_multi_index(tuple((sites - lo).T), tuple(shape))
        index[flat] = np.arange(len(sites))
        return cls(sites=sites, lo=lo.astype(np.int64), index=index.reshape(shape))

    @property
    def dims(self) -> np.ndarray:
        return np.asarray(self.index.shape, dtype=np.int64)

    def find(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=np.int64))
        rel = y - self.lo
        ok = np.all((rel >= 0) & (rel < self.dims), axis=1)
        out = -np.ones(len(y), dtype=np.int64)
        if ok.any():
            out[ok] = self.index[tuple(rel[ok].T)]
        return out

    def contains(self, y) -> np.ndarray:
        return self.find(y) >= 0
