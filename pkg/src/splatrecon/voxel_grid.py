"""Sparse voxel grid with latent features and occupancy.

Keys are signed integer lattice coordinates; the center of key (i, j, k) at
cell edge ``e`` is ``((i, j, k) + 0.5) * e``. Level 0 is the finest level;
level L has edge ``base_edge * 2**L``. Slots are ordered by sorted packed key
so iteration, reductions, and checkpoints are deterministic. Grids are
immutable after construction; all operations return new grids.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from .errors import EmptyInput, ParseError, ShapeError, ValidationError

# Packed keys fit coordinates in [-2^20, 2^20) per axis into one int64.
_KEY_BITS = 21
_KEY_OFF = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


def pack_keys(keys: np.ndarray) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    if k.size and (np.abs(k) >= _KEY_OFF).any():
        raise ValidationError("voxel key out of packable range")
    return (((k[:, 0] + _KEY_OFF) << (2 * _KEY_BITS))
            | ((k[:, 1] + _KEY_OFF) << _KEY_BITS)
            | (k[:, 2] + _KEY_OFF))


def unpack_keys(packed: np.ndarray) -> np.ndarray:
    p = np.asarray(packed, dtype=np.int64)
    i = (p >> (2 * _KEY_BITS)) - _KEY_OFF
    j = ((p >> _KEY_BITS) & _KEY_MASK) - _KEY_OFF
    k = (p & _KEY_MASK) - _KEY_OFF
    return np.stack([i, j, k], axis=1)


class SparseGrid:
    """Immutable sparse voxel grid: sorted keys, features, occupancy."""

    def __init__(self, keys: np.ndarray, features: torch.Tensor,
                 occupancy: torch.Tensor, edge: float, level: int = 0):
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        packed = pack_keys(keys)
        order = np.argsort(packed, kind="stable")
        if not (np.diff(packed[order]) > 0).all():
            raise ValidationError("duplicate voxel keys")
        self._packed = packed[order]
        self.keys = keys[order]
        idx = torch.from_numpy(order.copy())
        features = torch.as_tensor(features)
        occupancy = torch.as_tensor(occupancy)
        if features.shape[0] != len(keys):
            raise ShapeError("features row count must equal key count")
        if occupancy.shape != (len(keys),):
            raise ShapeError("occupancy must be one scalar per key")
        self.features = features[idx]
        self.occupancy = occupancy[idx]
        if edge <= 0:
            raise ValidationError("edge must be positive")
        self.edge = float(edge)
        self.level = int(level)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def dtype(self) -> torch.dtype:
        return self.features.dtype

    def centers(self) -> np.ndarray:
        return (self.keys.astype(np.float64) + 0.5) * self.edge

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        """Slot index per query key, -1 where absent."""
        if len(self) == 0:
            return np.full(len(keys), -1, dtype=np.int64)
        q = pack_keys(np.asarray(keys, dtype=np.int64).reshape(-1, 3))
        pos = np.searchsorted(self._packed, q)
        pos_c = np.minimum(pos, len(self._packed) - 1)
        hit = self._packed[pos_c] == q
        return np.where(hit, pos_c, -1)

    def slot(self, key) -> int:
        """Slot of a single (i, j, k) key; raises KeyError if absent."""
        s = int(self.lookup(np.asarray(key).reshape(1, 3))[0])
        if s < 0:
            raise KeyError(tuple(int(x) for x in np.asarray(key).reshape(3)))
        return s

    def contains(self, keys: np.ndarray) -> np.ndarray:
        return self.lookup(keys) >= 0

    def with_features(self, features: torch.Tensor,
                      occupancy: torch.Tensor | None = None) -> "SparseGrid":
        """Same key set with replaced features (keys already sorted: no reorder)."""
        g = object.__new__(SparseGrid)
        g._packed = self._packed
        g.keys = self.keys
        if features.shape[0] != len(self):
            raise ShapeError("features row count must equal key count")
        g.features = features
        g.occupancy = self.occupancy if occupancy is None else occupancy
        if g.occupancy.shape != (len(self),):
            raise ShapeError("occupancy must be one scalar per key")
        g.edge = self.edge
        g.level = self.level
        return g

    def detach(self) -> "SparseGrid":
        return self.with_features(self.features.detach(), self.occupancy.detach())


class GradBuffer:
    """Per-slot feature gradients aligned with a grid's slot order."""

    def __init__(self, values: torch.Tensor):
        self.values = torch.as_tensor(values)
        if not torch.isfinite(self.values).all():
            raise ValidationError("gradient buffer contains non-finite entries")

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid: SparseGrid) -> "GradBuffer":
        return cls(torch.zeros_like(grid.features))


def point_keys(points: np.ndarray, edge: float) -> np.ndarray:
    return np.floor(np.asarray(points, dtype=np.float64) / edge).astype(np.int64)


def voxelize_points(points, edge: float, feature_dim: int = 64,
                    dtype: torch.dtype = torch.float64,
                    feature_embed=None) -> SparseGrid:
    """Bucket points into cells of the given edge; one voxel per occupied cell.

    Per-voxel input statistics (mean color, point count, mean offset from the
    cell center in cell units) are zero-padded into the feature vector, or
    mapped through ``feature_embed`` (a network input layer) when given.
    Occupancy is 1 for every occupied cell.
    """
    if edge <= 0:
        raise ValidationError("edge must be positive")
    if hasattr(points, "positions"):
        positions = points.positions
        colors = points.colors
    else:
        positions = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        colors = np.full_like(positions, 0.5)
    if len(positions) == 0:
        raise EmptyInput("cannot voxelize an empty point set")

    keys = point_keys(positions, edge)
    packed = pack_keys(keys)
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    n = len(uniq)
    sum_color = np.zeros((n, 3))
    np.add.at(sum_color, inverse, colors)
    centers = (unpack_keys(uniq).astype(np.float64) + 0.5) * edge
    offsets = (positions - centers[inverse]) / edge
    sum_off = np.zeros((n, 3))
    np.add.at(sum_off, inverse, offsets)
    stats = np.concatenate([
        sum_color / counts[:, None],
        np.log1p(counts)[:, None],
        sum_off / counts[:, None],
    ], axis=1)
    stats_t = torch.from_numpy(stats).to(dtype)
    if feature_embed is not None:
        feats = feature_embed(stats_t)
        if feats.shape[1] != feature_dim:
            raise ShapeError("feature_embed output width != feature_dim")
    else:
        feats = torch.zeros((n, feature_dim), dtype=dtype)
        feats[:, : stats.shape[1]] = stats_t
    occ = torch.ones(n, dtype=dtype)
    return SparseGrid(unpack_keys(uniq), feats, occ, edge, level=0)


_CHILD_OFFSETS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)],
                          dtype=np.int64)


def parent_keys(keys: np.ndarray) -> np.ndarray:
    return np.floor_divide(keys, 2)


def child_keys(keys: np.ndarray) -> np.ndarray:
    """All 8 children per key, shape (8 * N, 3), grouped by parent."""
    return (keys[:, None, :] * 2 + _CHILD_OFFSETS[None, :, :]).reshape(-1, 3)


def downsample(grid: SparseGrid, levels: int = 1) -> SparseGrid:
    """Merge children into parents; features mean-pooled, occupancy max-pooled."""
    if levels < 1:
        raise ValidationError("levels must be >= 1")
    g = grid
    for _ in range(levels):
        pk = parent_keys(g.keys)
        packed = pack_keys(pk)
        uniq, inverse = np.unique(packed, return_inverse=True)
        inv = torch.from_numpy(inverse)
        n = len(uniq)
        feats = torch.zeros((n, g.feature_dim), dtype=g.dtype)
        feats.index_add_(0, inv, g.features)
        counts = torch.zeros(n, dtype=g.dtype)
        counts.index_add_(0, inv, torch.ones(len(g), dtype=g.dtype))
        feats = feats / counts[:, None]
        occ = torch.zeros(n, dtype=g.dtype)
        occ.scatter_reduce_(0, inv, g.occupancy, reduce="amax", include_self=False)
        g = SparseGrid(unpack_keys(uniq), feats, occ, g.edge * 2, g.level + 1)
    return g


def upsample(grid: SparseGrid, occupancy_mask: np.ndarray,
             child_features: torch.Tensor | None = None,
             child_occupancy: torch.Tensor | None = None) -> SparseGrid:
    """Allocate the masked children of each parent (mask shape (8 * N,), child
    order grouped by parent). Child features default to copies of the parent
    feature; networks pass their upsampling-layer outputs instead."""
    mask = np.asarray(occupancy_mask, dtype=bool).reshape(-1)
    if mask.shape[0] != 8 * len(grid):
        raise ShapeError("occupancy_mask length must be 8 * |parents|")
    ck = child_keys(grid.keys)
    if child_features is None:
        child_features = grid.features.repeat_interleave(8, dim=0)
    if child_occupancy is None:
        child_occupancy = grid.occupancy.repeat_interleave(8)
    if child_features.shape[0] != 8 * len(grid) or child_occupancy.shape[0] != 8 * len(grid):
        raise ShapeError("child feature/occupancy rows must be 8 * |parents|")
    idx = torch.from_numpy(np.nonzero(mask)[0])
    return SparseGrid(ck[mask], child_features[idx], child_occupancy[idx],
                      grid.edge / 2, grid.level - 1)


def dilate(grid: SparseGrid, radius: int = 1) -> SparseGrid:
    """Add all keys within Chebyshev distance ``radius`` of existing keys.
    New voxels get zero features and occupancy 0."""
    if radius < 1:
        raise ValidationError("radius must be >= 1")
    r = np.arange(-radius, radius + 1)
    offs = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    cand = (grid.keys[:, None, :] + offs[None, :, :]).reshape(-1, 3)
    packed = np.unique(pack_keys(cand))
    keys = unpack_keys(packed)
    feats = torch.zeros((len(keys), grid.feature_dim), dtype=grid.dtype)
    occ = torch.zeros(len(keys), dtype=grid.dtype)
    slots = grid.lookup(keys)
    hit = slots >= 0
    hit_t = torch.from_numpy(hit.copy())
    src = torch.from_numpy(slots[hit])
    feats[hit_t] = grid.features[src]
    occ[hit_t] = grid.occupancy[src]
    return SparseGrid(keys, feats, occ, grid.edge, grid.level)


_GRID_MAGIC = b"SRGRID01"


def save_grid(grid: SparseGrid, path: str | Path) -> None:
    """Binary checkpoint: header, sorted key list, features, occupancy."""
    with open(path, "wb") as f:
        f.write(_GRID_MAGIC)
        f.write(struct.pack("<diqi", grid.edge, grid.level, len(grid), grid.feature_dim))
        grid.keys.astype("<i8").tofile(f)
        grid.features.detach().cpu().numpy().astype("<f8").tofile(f)
        grid.occupancy.detach().cpu().numpy().astype("<f8").tofile(f)


def load_grid(path: str | Path, dtype: torch.dtype = torch.float64) -> SparseGrid:
    with open(path, "rb") as f:
        magic = f.read(len(_GRID_MAGIC))
        if magic != _GRID_MAGIC:
            raise ParseError("not a grid checkpoint")
        edge, level, count, width = struct.unpack("<diqi", f.read(24))
        keys = np.fromfile(f, dtype="<i8", count=count * 3).reshape(count, 3)
        feats = np.fromfile(f, dtype="<f8", count=count * width).reshape(count, width)
        occ = np.fromfile(f, dtype="<f8", count=count)
        if len(occ) != count:
            raise ParseError("truncated grid checkpoint")
    return SparseGrid(keys, torch.from_numpy(feats).to(dtype),
                      torch.from_numpy(occ).to(dtype), edge, level)
