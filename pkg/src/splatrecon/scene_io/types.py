"""Scene domain types: posed views, SfM points, meshes, and the scene bundle.

Conventions: world-to-camera poses with +z forward, +x right, +y down
(COLMAP-style). Images are row-major with the origin at the top-left pixel.
Depth values are Euclidean distances along the (unit) pixel ray, in meters,
with 0 marking invalid pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError


@dataclass
class View:
    image: np.ndarray               # (H, W, 3) float64 in [0, 1]
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray                   # (3, 3) world-to-camera rotation
    t: np.ndarray                   # (3,) world-to-camera translation, meters
    gt_depth: np.ndarray | None = None    # (H, W) meters, 0 = invalid
    gt_normal: np.ndarray | None = None   # (H, W, 3) unit vectors, camera frame
    name: str = ""

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValidationError("image must be (H, W, 3)")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        err = np.abs(self.R @ self.R.T - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.R) - 1.0) > 1e-6:
            raise ValidationError("rotation must be orthonormal with det +1")
        if self.gt_depth is not None:
            self.gt_depth = np.asarray(self.gt_depth, dtype=np.float64)
            if self.gt_depth.shape != self.image.shape[:2]:
                raise ValidationError("gt_depth shape must match image")
            if (self.gt_depth < 0).any():
                raise ValidationError("gt_depth must be >= 0")
        if self.gt_normal is not None:
            self.gt_normal = np.asarray(self.gt_normal, dtype=np.float64)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    def ray_directions(self) -> np.ndarray:
        """Unit world-space ray direction per pixel center, shape (H, W, 3)."""
        h, w = self.height, self.width
        xs = (np.arange(w) + 0.5 - self.cx) / self.fx
        ys = (np.arange(h) + 0.5 - self.cy) / self.fy
        gx, gy = np.meshgrid(xs, ys)
        d = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.R  # (R^T d^T)^T

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points; returns (pixel xy, camera-space z)."""
        pc = points @ self.R.T + self.t
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * pc[..., 0] / z + self.cx
            y = self.fy * pc[..., 1] / z + self.cy
        return np.stack([x, y], axis=-1), z


@dataclass
class SfMPoint:
    position: np.ndarray   # (3,) meters
    color: np.ndarray      # (3,) in [0, 1]


class PointCloud:
    """Array-backed sequence of SfMPoint."""

    def __init__(self, positions: np.ndarray, colors: np.ndarray | None = None):
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if colors is None:
            colors = np.full_like(self.positions, 0.5)
        self.colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
        if len(self.colors) != len(self.positions):
            raise ValidationError("positions and colors must have equal length")

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> SfMPoint:
        return SfMPoint(self.positions[i], self.colors[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass
class TriMesh:
    vertices: np.ndarray                    # (V, 3) float64, meters
    faces: np.ndarray                       # (F, 3) int32
    vertex_normals: np.ndarray | None = None  # (V, 3)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if self.vertex_normals is not None:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)

    @property
    def face_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(ln, 1e-30)

    @property
    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)

    def compute_vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (also stored on the mesh)."""
        v = self.vertices
        f = self.faces
        fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        vn = np.zeros_like(v)
        for k in range(3):
            np.add.at(vn, f[:, k], fn)
        ln = np.linalg.norm(vn, axis=1, keepdims=True)
        vn /= np.maximum(ln, 1e-30)
        self.vertex_normals = vn
        return vn


@dataclass
class SceneBundle:
    views: list[View]
    points: PointCloud
    gt_mesh: TriMesh | None
    bbox: np.ndarray                 # (2, 3): min corner, max corner
    sfm_record: dict | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.bbox = np.asarray(self.bbox, dtype=np.float64).reshape(2, 3)
        if not (self.bbox[0] < self.bbox[1]).all():
            raise ValidationError("bbox min must be < max per axis")
        lo, hi = self.bbox[0] - 1.0, self.bbox[1] + 1.0
        p = self.points.positions
        if len(p) and ((p < lo) | (p > hi)).any():
            raise ValidationError("SfM points must lie within bbox expanded by 1 m")
        for v in self.views:
            if not _frustum_hits_bbox(v, self.bbox):
                raise ValidationError(f"view {v.name!r} frustum does not intersect bbox")

    @property
    def extent(self) -> float:
        """Half the bbox diagonal, used to scale position learning rates."""
        return 0.5 * float(np.linalg.norm(self.bbox[1] - self.bbox[0]))


def _frustum_hits_bbox(view: View, bbox: np.ndarray) -> bool:
    # Conservative check: accept if the camera sits inside the box, or if a
    # sample of the box (corners + center) projects in front of the camera
    # within a generously expanded image rectangle.
    c = view.camera_center
    if (c >= bbox[0]).all() and (c <= bbox[1]).all():
        return True
    corners = np.array([[bbox[i][0], bbox[j][1], bbox[k][2]]
                        for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    samples = np.vstack([corners, bbox.mean(axis=0)[None]])
    xy, z = view.project(samples)
    infront = z > 0
    if not infront.any():
        return False
    h, w = view.height, view.width
    xy = xy[infront]
    ok = (xy[:, 0] > -w) & (xy[:, 0] < 2 * w) & (xy[:, 1] > -h) & (xy[:, 1] < 2 * h)
    return bool(ok.any())
