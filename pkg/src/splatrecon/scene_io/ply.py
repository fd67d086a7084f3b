"""Minimal binary little-endian PLY reader/writer.

Supported layout: a vertex element with double x/y/z, optional double
nx/ny/nz, optional uchar red/green/blue, and an optional face element with
``property list uchar int vertex_indices`` (triangles only). Geometry is
stored as doubles so saved values round-trip bit-exactly; colors are
quantized to 8 bits per the usual PLY convention.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import IoError, ParseError
from .types import PointCloud, TriMesh

_PROP_TYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "char": "i1",
    "short": "<i2",
    "ushort": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
}


def _parse_header(f) -> tuple[list, int]:
    """Returns ([(element_name, count, [(prop_name, dtype_or_list)])], data_offset)."""
    magic = f.readline()
    if magic.strip() != b"ply":
        raise ParseError("not a PLY file")
    fmt = None
    elements: list = []
    while True:
        line = f.readline()
        if not line:
            raise ParseError("unexpected end of PLY header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens:
            continue
        if tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "binary_little_endian":
                raise ParseError(f"unsupported PLY format: {line.strip()!r}")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError(f"malformed element line: {line.strip()!r}")
            try:
                count = int(tokens[2])
            except ValueError as e:
                raise ParseError(f"bad element count: {tokens[2]!r}") from e
            elements.append((tokens[1], count, []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise ParseError(f"malformed list property: {line.strip()!r}")
                elements[-1][2].append((tokens[4], ("list", tokens[2], tokens[3])))
            else:
                if len(tokens) != 3 or tokens[1] not in _PROP_TYPES:
                    raise ParseError(f"unsupported property: {line.strip()!r}")
                elements[-1][2].append((tokens[2], _PROP_TYPES[tokens[1]]))
        elif tokens[0] == "end_header":
            break
        else:
            raise ParseError(f"unrecognized header line: {line.strip()!r}")
    if fmt is None:
        raise ParseError("PLY header missing format line")
    return elements, f.tell()


def _read_ply(path: str | Path) -> dict:
    path = Path(path)
    with open(path, "rb") as f:
        elements, _ = _parse_header(f)
        out = {}
        for name, count, props in elements:
            if any(isinstance(d, tuple) and d[0] == "list" for _, d in props):
                if len(props) != 1:
                    raise ParseError("list property must be the only one in its element")
                pname, (_, ctype, itype) = props[0]
                cdt = _PROP_TYPES.get(ctype)
                idt = _PROP_TYPES.get(itype)
                if cdt is None or idt is None:
                    raise ParseError(f"unsupported list types {ctype}/{itype}")
                dt = np.dtype([("n", cdt), ("v", idt, (3,))])
                raw = np.fromfile(f, dtype=dt, count=count)
                if len(raw) != count:
                    raise ParseError(f"truncated element {name!r}")
                if count and not (raw["n"] == 3).all():
                    raise ParseError("only triangle faces are supported")
                out[name] = {pname: raw["v"].astype(np.int64)}
            else:
                dt = np.dtype([(pn, pd) for pn, pd in props])
                raw = np.fromfile(f, dtype=dt, count=count)
                if len(raw) != count:
                    raise ParseError(f"truncated element {name!r}")
                out[name] = {pn: raw[pn] for pn, _ in props}
        return out


def _vertex_array(vert: dict, names: tuple[str, ...]) -> np.ndarray | None:
    if not all(n in vert for n in names):
        return None
    return np.stack([np.asarray(vert[n], dtype=np.float64) for n in names], axis=1)


def load_ply_points(path: str | Path) -> PointCloud:
    data = _read_ply(path)
    if "vertex" not in data:
        raise ParseError("PLY has no vertex element")
    vert = data["vertex"]
    pos = _vertex_array(vert, ("x", "y", "z"))
    if pos is None:
        raise ParseError("vertex element lacks x/y/z")
    colors = None
    if all(c in vert for c in ("red", "green", "blue")):
        colors = np.stack([vert[c] for c in ("red", "green", "blue")], axis=1) / 255.0
    return PointCloud(pos, colors)


def load_ply_mesh(path: str | Path) -> TriMesh:
    data = _read_ply(path)
    if "vertex" not in data:
        raise ParseError("PLY has no vertex element")
    vert = data["vertex"]
    pos = _vertex_array(vert, ("x", "y", "z"))
    if pos is None:
        raise ParseError("vertex element lacks x/y/z")
    normals = _vertex_array(vert, ("nx", "ny", "nz"))
    faces = data.get("face", {}).get("vertex_indices")
    if faces is None:
        faces = np.zeros((0, 3), dtype=np.int32)
    return TriMesh(pos, faces.astype(np.int32), normals)


def _write_header(f, n_vert: int, with_normals: bool, with_colors: bool, n_face: int | None):
    f.write(b"ply\nformat binary_little_endian 1.0\n")
    f.write(f"element vertex {n_vert}\n".encode())
    for ax in "xyz":
        f.write(f"property double {ax}\n".encode())
    if with_normals:
        for ax in ("nx", "ny", "nz"):
            f.write(f"property double {ax}\n".encode())
    if with_colors:
        for c in ("red", "green", "blue"):
            f.write(f"property uchar {c}\n".encode())
    if n_face is not None:
        f.write(f"element face {n_face}\n".encode())
        f.write(b"property list uchar int vertex_indices\n")
    f.write(b"end_header\n")


def save_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Write a triangle mesh as binary little-endian PLY."""
    path = Path(path)
    with_normals = mesh.vertex_normals is not None
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if with_normals:
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
    vdt = np.dtype(fields)
    v = np.empty(len(mesh.vertices), dtype=vdt)
    v["x"], v["y"], v["z"] = mesh.vertices.T
    if with_normals:
        v["nx"], v["ny"], v["nz"] = mesh.vertex_normals.T
    fdt = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
    fa = np.empty(len(mesh.faces), dtype=fdt)
    fa["n"] = 3
    fa["v"] = mesh.faces
    try:
        with open(path, "wb") as f:
            _write_header(f, len(v), with_normals, False, len(fa))
            v.tofile(f)
            fa.tofile(f)
    except OSError as e:
        raise IoError(f"cannot write mesh to {path}: {e}") from e


def save_pointcloud(points: PointCloud, path: str | Path) -> None:
    """Write a point cloud as binary little-endian PLY (colors as uchar)."""
    path = Path(path)
    vdt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                    ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    v = np.empty(len(points), dtype=vdt)
    v["x"], v["y"], v["z"] = points.positions.T
    rgb = np.clip(np.round(points.colors * 255.0), 0, 255).astype(np.uint8)
    v["red"], v["green"], v["blue"] = rgb.T
    try:
        with open(path, "wb") as f:
            _write_header(f, len(v), False, True, None)
            v.tofile(f)
    except OSError as e:
        raise IoError(f"cannot write point cloud to {path}: {e}") from e
