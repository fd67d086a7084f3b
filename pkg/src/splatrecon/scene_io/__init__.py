from .types import View, SfMPoint, PointCloud, TriMesh, SceneBundle
from .ply import load_ply_mesh, load_ply_points, save_mesh, save_pointcloud
from .scene import load_scene, save_scene
from .synthetic import RoomSpec, generate_synthetic_room

__all__ = [
    "View",
    "SfMPoint",
    "PointCloud",
    "TriMesh",
    "SceneBundle",
    "load_ply_mesh",
    "load_ply_points",
    "save_mesh",
    "save_pointcloud",
    "load_scene",
    "save_scene",
    "RoomSpec",
    "generate_synthetic_room",
]
