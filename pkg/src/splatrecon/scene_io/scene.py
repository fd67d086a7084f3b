"""Scene directory load/save.

Layout: ``cameras.json`` (list of per-view records, world-to-camera, +z
forward), ``points.ply``, ``images/*.png`` and optionally ``mesh.ply`` and
``depth/*.png`` (uint16 millimeters).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import MissingAsset, ParseError
from .images import load_depth_png, load_image_png, save_depth_png, save_image_png
from .ply import load_ply_mesh, load_ply_points, save_mesh, save_pointcloud
from .types import SceneBundle, TriMesh, View


def _camera_record(view: View) -> dict:
    return {
        "image": view.name,
        "fx": view.fx,
        "fy": view.fy,
        "cx": view.cx,
        "cy": view.cy,
        "width": view.width,
        "height": view.height,
        "R": [float(x) for x in view.R.reshape(-1)],
        "t": [float(x) for x in view.t],
    }


def save_scene(bundle: SceneBundle, path: str | Path) -> Path:
    """Write a SceneBundle as a scene directory; returns the directory path."""
    path = Path(path)
    (path / "images").mkdir(parents=True, exist_ok=True)
    has_depth = any(v.gt_depth is not None for v in bundle.views)
    if has_depth:
        (path / "depth").mkdir(exist_ok=True)
    records = []
    for i, view in enumerate(bundle.views):
        if not view.name:
            view.name = f"{i:04d}.png"
        records.append(_camera_record(view))
        save_image_png(view.image, path / "images" / view.name)
        if view.gt_depth is not None:
            save_depth_png(view.gt_depth, path / "depth" / view.name)
    (path / "cameras.json").write_text(json.dumps(records, indent=1))
    save_pointcloud(bundle.points, path / "points.ply")
    if bundle.gt_mesh is not None:
        save_mesh(bundle.gt_mesh, path / "mesh.ply")
    return path


def load_scene(path: str | Path) -> SceneBundle:
    """Load and validate a scene directory."""
    path = Path(path)
    cam_file = path / "cameras.json"
    pts_file = path / "points.ply"
    img_dir = path / "images"
    for p in (cam_file, pts_file, img_dir):
        if not p.exists():
            raise MissingAsset(f"missing scene asset: {p}")
    try:
        records = json.loads(cam_file.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed cameras.json: {e}") from e
    if not isinstance(records, list):
        raise ParseError("cameras.json must be a top-level list")

    views = []
    for rec in records:
        try:
            name = rec["image"]
            img_path = img_dir / name
            if not img_path.exists():
                raise MissingAsset(f"missing image: {img_path}")
            image = load_image_png(img_path)
            depth = None
            depth_path = path / "depth" / name
            if depth_path.exists():
                depth = load_depth_png(depth_path)
            view = View(
                image=image,
                fx=float(rec["fx"]), fy=float(rec["fy"]),
                cx=float(rec["cx"]), cy=float(rec["cy"]),
                R=np.asarray(rec["R"], dtype=np.float64).reshape(3, 3),
                t=np.asarray(rec["t"], dtype=np.float64),
                gt_depth=depth,
                name=name,
            )
        except (KeyError, TypeError) as e:
            raise ParseError(f"malformed camera record: {e}") from e
        if view.width != int(rec["width"]) or view.height != int(rec["height"]):
            raise ParseError(f"image size mismatch for {name}")
        views.append(view)

    points = load_ply_points(pts_file)
    mesh_path = path / "mesh.ply"
    gt_mesh: TriMesh | None = None
    if mesh_path.exists():
        gt_mesh = load_ply_mesh(mesh_path)

    if gt_mesh is not None and len(gt_mesh.vertices):
        lo = gt_mesh.vertices.min(axis=0)
        hi = gt_mesh.vertices.max(axis=0)
    elif len(points):
        lo = points.positions.min(axis=0)
        hi = points.positions.max(axis=0)
    else:
        raise ParseError("scene has neither mesh vertices nor points to derive a bbox")
    return SceneBundle(views=views, points=points, gt_mesh=gt_mesh, bbox=np.stack([lo, hi]))
