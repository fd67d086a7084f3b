"""Synthetic indoor scenes: a textured box room with objects, rendered ground
truth, and an SfM-like point cloud that is sparse on textureless wall
interiors (points survive only where the procedural texture has gradient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .types import PointCloud, SceneBundle, TriMesh, View

_WALL_BASE = np.array([
    [0.78, 0.74, 0.70],
    [0.72, 0.76, 0.74],
    [0.75, 0.72, 0.78],
    [0.70, 0.75, 0.72],
    [0.80, 0.78, 0.72],   # floor
    [0.88, 0.88, 0.86],   # ceiling
])
_WALL_ACCENT = np.array([
    [0.55, 0.20, 0.15],
    [0.15, 0.35, 0.55],
    [0.20, 0.50, 0.20],
    [0.50, 0.40, 0.10],
    [0.35, 0.15, 0.40],
    [0.25, 0.25, 0.30],
])
_OBJ_COLORS = np.array([
    [0.20, 0.45, 0.70],
    [0.75, 0.35, 0.20],
    [0.30, 0.60, 0.30],
    [0.65, 0.55, 0.15],
    [0.55, 0.25, 0.55],
])


@dataclass
class RoomSpec:
    dims: tuple[float, float, float] = (4.0, 3.0, 2.5)   # room extents, meters
    n_objects: int = 2
    n_cameras: int = 8
    image_hw: tuple[int, int] = (128, 192)
    noise: float = 0.0                  # SfM point position noise sigma, meters
    seed: int = 0
    mesh_res: float = 0.0               # max triangle edge; 0 = one quad per face
    sfm_candidates: int = 6000          # surface samples tested against the texture gradient
    texture_threshold: float = 0.5      # keep samples with |surface color gradient| above this
    border: float = 0.3                 # width of the textured band along wall edges, meters
    fov_deg: float = 75.0


def _face_grid(corner, eu, ev, nu, nv, flip):
    """Quad face as a triangulated (nu x nv)-cell grid."""
    us = np.linspace(0.0, 1.0, nu + 1)
    vs = np.linspace(0.0, 1.0, nv + 1)
    gu, gv = np.meshgrid(us, vs, indexing="ij")
    verts = corner[None, :] + gu.reshape(-1, 1) * eu[None, :] + gv.reshape(-1, 1) * ev[None, :]
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    f1 = np.stack([a, b, c], axis=1)
    f2 = np.stack([a, c, d], axis=1)
    faces = np.concatenate([f1, f2], axis=0)
    if flip:
        faces = faces[:, ::-1]
    return verts, faces


def _box_mesh(lo, hi, inward: bool, res: float):
    """Axis-aligned box; inward=True orients normals into the interior."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    size = hi - lo
    verts_all, faces_all, mats_all = [], [], []
    offset = 0
    # face order: x-lo, x-hi, y-lo, y-hi, z-lo (floor), z-hi (ceiling)
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in range(2):
            corner = lo.copy()
            if side:
                corner[axis] = hi[axis]
            eu = np.zeros(3)
            ev = np.zeros(3)
            eu[u] = size[u]
            ev[v] = size[v]
            nu = max(1, int(np.ceil(size[u] / res))) if res > 0 else 1
            nv = max(1, int(np.ceil(size[v] / res))) if res > 0 else 1
            # natural normal of the grid is eu x ev = +axis; flip so the
            # normal points inward (toward box interior) or outward.
            want_positive = (side == 0) == inward
            verts, faces = _face_grid(corner, eu, ev, nu, nv, flip=not want_positive)
            verts_all.append(verts)
            faces_all.append(faces + offset)
            mat = {(0, 0): 0, (0, 1): 1, (1, 0): 2, (1, 1): 3, (2, 0): 4, (2, 1): 5}[(axis, side)]
            mats_all.append(np.full(len(faces), mat, dtype=np.int32))
            offset += len(verts)
    return (np.concatenate(verts_all), np.concatenate(faces_all), np.concatenate(mats_all))


def _icosphere(center, radius, subdiv=1):
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdiv):
        mid_cache: dict = {}
        verts = list(v)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid_cache:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                mid_cache[key] = len(verts)
                verts.append(m)
            return mid_cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        f = np.array(nf, dtype=np.int64)
    return center[None, :] + radius * v, f


def _texture(points: np.ndarray, mats: np.ndarray, dims: np.ndarray, border: float) -> np.ndarray:
    """Procedural surface albedo. Wall interiors are flat; a sinusoidal band
    runs along wall-face borders; objects are textured everywhere."""
    p = np.asarray(points, dtype=np.float64)
    out = np.empty_like(p)
    for m in np.unique(mats):
        sel = mats == m
        q = p[sel]
        if m < 6:
            axis = int(m) // 2
            u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
            u = q[:, u_ax]
            v = q[:, v_ax]
            d_edge = np.minimum(np.minimum(u, dims[u_ax] - u), np.minimum(v, dims[v_ax] - v))
            base = np.broadcast_to(_WALL_BASE[m], q.shape).copy()
            band = d_edge < border
            wave = 0.5 + 0.5 * np.sin(2 * np.pi * 7.0 * u[band]) * np.sin(2 * np.pi * 7.0 * v[band])
            mix = wave[:, None]
            base[band] = (1 - mix) * _WALL_BASE[m] + mix * _WALL_ACCENT[m]
            out[sel] = base
        else:
            c = _OBJ_COLORS[(int(m) - 6) % len(_OBJ_COLORS)]
            wave = (0.55 + 0.45 * np.sin(2 * np.pi * 9.0 * q[:, 0]) * np.sin(2 * np.pi * 9.0 * q[:, 1])
                    * np.cos(2 * np.pi * 9.0 * q[:, 2]))
            out[sel] = c[None, :] * (0.4 + 0.6 * wave[:, None])
    return np.clip(out, 0.0, 1.0)


def _raycast(origin: np.ndarray, dirs: np.ndarray, verts: np.ndarray, faces: np.ndarray,
             chunk: int = 8192):
    """Closest-hit ray casting (Moller-Trumbore). Returns (t, tri index, hit mask)."""
    v0 = verts[faces[:, 0]]
    e1 = verts[faces[:, 1]] - v0
    e2 = verts[faces[:, 2]] - v0
    s = origin[None, :] - v0                         # (T, 3), shared ray origin
    q = np.cross(s, e1)                              # (T, 3)
    sq_e2 = np.einsum("tj,tj->t", e2, q)             # t numerator per triangle
    n_rays = len(dirs)
    t_out = np.full(n_rays, np.inf)
    tri_out = np.full(n_rays, -1, dtype=np.int64)
    for start in range(0, n_rays, chunk):
        d = dirs[start:start + chunk]                # (M, 3)
        h = np.cross(d[:, None, :], e2[None, :, :])  # (M, T, 3)
        a = np.einsum("tj,mtj->mt", e1, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 / a
            u = f * np.einsum("tj,mtj->mt", s, h)
            v = f * np.einsum("mj,tj->mt", d, q)
            t = f * sq_e2[None, :]
        valid = (np.abs(a) > 1e-12) & (u >= -1e-12) & (v >= -1e-12) \
            & (u + v <= 1 + 1e-12) & (t > 1e-9)
        t = np.where(valid, t, np.inf)
        idx = np.argmin(t, axis=1)
        rows = np.arange(len(d))
        tmin = t[rows, idx]
        hit = np.isfinite(tmin)
        t_out[start:start + chunk] = tmin
        tri_out[start:start + chunk] = np.where(hit, idx, -1)
    return t_out, tri_out, tri_out >= 0


def _look_at_rotation(forward: np.ndarray) -> np.ndarray:
    """World-to-camera rotation with +z forward, +y down, world up = +z."""
    f = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    r = np.cross(f, up)
    nr = np.linalg.norm(r)
    if nr < 1e-9:
        r = np.array([1.0, 0.0, 0.0])
    else:
        r = r / nr
    d = np.cross(f, r)
    return np.stack([r, d, f], axis=0)


def _sample_surface(rng, verts, faces, areas, n):
    probs = areas / areas.sum()
    tri = rng.choice(len(faces), size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = verts[faces[tri, 0]]
    b = verts[faces[tri, 1]]
    c = verts[faces[tri, 2]]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return pts, tri


def generate_synthetic_room(spec: RoomSpec) -> SceneBundle:
    """Build a textured box-room scene with posed views, ground-truth depth and
    normals, a ground-truth mesh, and a texture-gated SfM point cloud."""
    dims = np.asarray(spec.dims, dtype=np.float64)
    if (dims <= 0).any():
        raise ValidationError("room dimensions must be positive")
    if spec.n_cameras < 2:
        raise ValidationError("camera count must be >= 2")
    h, w = spec.image_hw
    if h < 8 or w < 8:
        raise ValidationError("image size too small")
    rng = np.random.default_rng(spec.seed)

    verts, faces, mats = _box_mesh(np.zeros(3), dims, inward=True, res=spec.mesh_res)
    parts_v, parts_f, parts_m = [verts], [faces], [mats]
    offset = len(verts)
    margin = 0.35
    for i in range(spec.n_objects):
        size = 0.25 + 0.2 * rng.random()
        center = np.array([
            margin + size + rng.random() * (dims[0] - 2 * (margin + size)),
            margin + size + rng.random() * (dims[1] - 2 * (margin + size)),
            size + 0.02,
        ])
        if i % 2 == 0:
            ov, of, _ = _box_mesh(center - size / 2, center + size / 2, inward=False,
                                  res=spec.mesh_res)
        else:
            ov, of = _icosphere(center, size / 2, subdiv=2)
        parts_v.append(ov)
        parts_f.append(of + offset)
        parts_m.append(np.full(len(of), 6 + i, dtype=np.int32))
        offset += len(ov)
    verts = np.concatenate(parts_v)
    faces = np.concatenate(parts_f).astype(np.int32)
    mats = np.concatenate(parts_m)
    mesh = TriMesh(verts, faces)
    mesh.compute_vertex_normals()
    face_normals = mesh.face_normals

    # cameras on an interior ring, looking outward with alternating pitch
    focal = 0.5 * w / np.tan(np.deg2rad(spec.fov_deg) / 2)
    center = dims / 2.0
    ring_r = 0.22 * min(dims[0], dims[1])
    views = []
    pitches = [-0.45, 0.0, 0.45]
    for k in range(spec.n_cameras):
        ang = 2 * np.pi * k / spec.n_cameras
        pos = center + np.array([ring_r * np.cos(ang), ring_r * np.sin(ang),
                                 0.1 * dims[2] * np.sin(3.0 * ang)])
        fwd = np.array([np.cos(ang), np.sin(ang), pitches[k % len(pitches)]])
        R = _look_at_rotation(fwd)
        t = -R @ pos
        view = View(image=np.zeros((h, w, 3)), fx=focal, fy=focal,
                    cx=w / 2.0, cy=h / 2.0, R=R, t=t, name=f"{k:04d}.png")
        dirs = view.ray_directions().reshape(-1, 3)
        t_hit, tri, hit = _raycast(pos, dirs, verts, faces)
        if not hit.all():
            # closed room: every ray must hit; tiny numerical misses get inf
            raise ValidationError("ray escaped the closed room; degenerate geometry")
        pts = pos[None, :] + t_hit[:, None] * dirs
        colors = _texture(pts, mats[tri], dims, spec.border)
        image = np.round(colors.reshape(h, w, 3) * 255.0) / 255.0
        n_world = face_normals[tri]
        flip = np.einsum("ij,ij->i", n_world, dirs) > 0
        n_world = np.where(flip[:, None], -n_world, n_world)
        n_cam = n_world @ R.T
        view.image = image
        view.gt_depth = t_hit.reshape(h, w)
        view.gt_normal = n_cam.reshape(h, w, 3)
        views.append(view)

    # SfM point cloud: keep surface samples where the texture has gradient
    areas = mesh.face_areas
    cand_pts, cand_tri = _sample_surface(rng, verts, faces, areas, spec.sfm_candidates)
    step = 2e-3
    e1 = verts[faces[cand_tri, 1]] - verts[faces[cand_tri, 0]]
    t1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    nrm = face_normals[cand_tri]
    t2 = np.cross(nrm, t1)
    cand_mat = mats[cand_tri]
    grads = np.zeros(len(cand_pts))
    for tdir in (t1, t2):
        cp = _texture(cand_pts + step * tdir, cand_mat, dims, spec.border)
        cm = _texture(cand_pts - step * tdir, cand_mat, dims, spec.border)
        g = (cp - cm) / (2 * step)
        grads += (g ** 2).sum(axis=1)
    grads = np.sqrt(grads)
    kept = grads > spec.texture_threshold
    positions = cand_pts[kept]
    colors = np.round(_texture(positions, cand_mat[kept], dims, spec.border) * 255.0) / 255.0
    if spec.noise > 0:
        positions = positions + rng.normal(0.0, spec.noise, size=positions.shape)
        positions = np.clip(positions, -0.5, dims + 0.5)
    record = {
        "candidate_positions": cand_pts,
        "candidate_face": cand_tri,
        "candidate_material": cand_mat,
        "candidate_grad": grads,
        "kept": kept,
        "border": spec.border,
        "threshold": spec.texture_threshold,
        "face_areas": areas,
        "face_material": mats,
    }
    return SceneBundle(
        views=views,
        points=PointCloud(positions, colors),
        gt_mesh=mesh,
        bbox=np.stack([np.zeros(3), dims]),
        sfm_record=record,
    )
