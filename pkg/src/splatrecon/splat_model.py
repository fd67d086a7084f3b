"""Flat-splat primitives and the latent-feature decoder.

Each sparse voxel's 64-dim feature is decoded by a small MLP into ``v_g``
2D Gaussian disks. Activation scheme: the center is the voxel center plus a
sigmoid-bounded offset of reach 4 * v_d per axis, scales go through a
softplus (clamped to [1e-4, 4 * v_d]), the rotation quaternion is normalized,
colors are sigmoids, and the opacity is the voxel's occupancy value rather
than an MLP output, so rendering gradients reach the occupancy heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .container import load_params, save_params
from .errors import ShapeError
from .voxel_grid import GradBuffer, SparseGrid

POSENC_DIM = 10
RAW_PER_GAUSSIAN = 13  # 3 position + 2 scale + 4 rotation + 1 opacity slot + 3 color
MIN_SCALE = 1e-4


@dataclass
class Gaussian2D:
    center: np.ndarray
    scales: np.ndarray
    rotation: np.ndarray   # unit quaternion (w, x, y, z)
    opacity: float
    color: np.ndarray


class Gaussians:
    """Batched 2D Gaussians (struct of tensors); indexable as Gaussian2D."""

    def __init__(self, centers, scales, rotations, opacities, colors, slots=None):
        self.centers = centers      # (N, 3)
        self.scales = scales        # (N, 2), positive
        self.rotations = rotations  # (N, 4), unit quaternions
        self.opacities = opacities  # (N,), in [0, 1]
        self.colors = colors        # (N, 3), in [0, 1]
        self.slots = slots          # (N,) provenance voxel slot or None
        n = len(self.centers)
        for t, cols in ((self.scales, 2), (self.rotations, 4), (self.colors, 3)):
            if t.shape != (n, cols):
                raise ShapeError("inconsistent gaussian field shapes")
        if self.opacities.shape != (n,):
            raise ShapeError("opacities must be (N,)")

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i: int) -> Gaussian2D:
        return Gaussian2D(
            center=self.centers[i].detach().cpu().numpy(),
            scales=self.scales[i].detach().cpu().numpy(),
            rotation=self.rotations[i].detach().cpu().numpy(),
            opacity=float(self.opacities[i]),
            color=self.colors[i].detach().cpu().numpy(),
        )

    def detach(self) -> "Gaussians":
        return Gaussians(self.centers.detach(), self.scales.detach(),
                         self.rotations.detach(), self.opacities.detach(),
                         self.colors.detach(), self.slots)

    @property
    def dtype(self):
        return self.centers.dtype


@dataclass
class GaussianGrads:
    """Per-Gaussian loss partials, aligned with the decode/render input order."""
    centers: torch.Tensor
    scales: torch.Tensor
    rotations: torch.Tensor
    opacities: torch.Tensor
    colors: torch.Tensor


def quat_to_rotmat(q: torch.Tensor) -> torch.Tensor:
    """Unit quaternion (w, x, y, z) batch to rotation matrices (N, 3, 3)."""
    w, x, y, z = q.unbind(-1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=-1).reshape(q.shape[:-1] + (3, 3))


def normalize_quats(raw: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Normalize quaternions; near-zero raw vectors are deterministically
    perturbed on the w component before normalizing."""
    norm = raw.norm(dim=-1, keepdim=True)
    bump = torch.zeros_like(raw)
    bump[..., 0] = eps
    raw = torch.where(norm < eps, raw + bump, raw)
    return raw / raw.norm(dim=-1, keepdim=True)


def gaussian_normal(rotations: torch.Tensor) -> torch.Tensor:
    """Disk normal: third column of the quaternion's rotation matrix.
    Accepts (N, 4) or (4,); tangent axes are columns one and two."""
    single = rotations.dim() == 1
    q = rotations.reshape(-1, 4)
    n = quat_to_rotmat(q)[:, :, 2]
    return n[0] if single else n


class GaussianDecoder(nn.Module):
    """MLP from (feature, voxel positional encoding) to raw splat attributes."""

    def __init__(self, feature_dim: int = 64, v_g: int = 2, v_d: float = 0.04,
                 hidden: int = 128, layers: int = 2,
                 dtype: torch.dtype = torch.float64, seed: int = 0):
        super().__init__()
        self.feature_dim = feature_dim
        self.v_g = v_g
        self.v_d = v_d
        self.hidden = hidden
        self.n_layers = layers
        gen = torch.Generator().manual_seed(seed)
        dims = [feature_dim + POSENC_DIM] + [hidden] * layers + [v_g * RAW_PER_GAUSSIAN]
        mods = []
        for i in range(len(dims) - 1):
            lin = nn.Linear(dims[i], dims[i + 1], dtype=dtype)
            _kaiming_uniform_(lin.weight, gen)
            nn.init.zeros_(lin.bias)
            mods.append(lin)
        self.linears = nn.ModuleList(mods)
        # start splats at roughly half a voxel so early renders stay local
        with torch.no_grad():
            bias = self.linears[-1].bias.reshape(v_g, RAW_PER_GAUSSIAN)
            bias[:, 3:5] = float(np.log(np.expm1(0.5 * v_d)))
            bias[:, 5] = 1.0  # rotation raw leans toward identity

    @property
    def config(self) -> dict:
        return {
            "kind": "decoder", "feature_dim": self.feature_dim, "v_g": self.v_g,
            "v_d": self.v_d, "hidden": self.hidden, "layers": self.n_layers,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for lin in self.linears[:-1]:
            x = F.leaky_relu(lin(x), negative_slope=0.01)
        return self.linears[-1](x)

    @property
    def position_radius(self) -> float:
        return 4.0 * self.v_d

    def save(self, path) -> None:
        arrays = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        save_params(path, self.config, arrays)

    @classmethod
    def load(cls, path, dtype: torch.dtype = torch.float64) -> "GaussianDecoder":
        config, arrays = load_params(path)
        dec = cls(feature_dim=config["feature_dim"], v_g=config["v_g"],
                  v_d=config["v_d"], hidden=config["hidden"],
                  layers=config["layers"], dtype=dtype)
        dec.load_state_dict({k: torch.from_numpy(v).to(dtype) for k, v in arrays.items()})
        return dec


def _kaiming_uniform_(w: torch.Tensor, gen: torch.Generator) -> None:
    fan_in = w.shape[1] if w.dim() == 2 else int(np.prod(w.shape[1:]))
    bound = float(np.sqrt(6.0 / fan_in))
    with torch.no_grad():
        w.copy_((torch.rand(w.shape, generator=gen, dtype=torch.float64) * 2 - 1)
                .to(w.dtype) * bound)


def positional_encoding(grid: SparseGrid, bbox: np.ndarray,
                        dtype: torch.dtype) -> torch.Tensor:
    """Per-voxel (level, normalized bbox coords, sin/cos) encoding, 10 values."""
    lo, hi = np.asarray(bbox, dtype=np.float64).reshape(2, 3)
    span = np.maximum(hi - lo, 1e-9)
    p = (grid.centers() - lo) / span
    p_t = torch.from_numpy(p).to(dtype)
    level = torch.full((len(grid), 1), grid.level / 4.0, dtype=dtype)
    return torch.cat([level, p_t, torch.sin(2 * np.pi * p_t),
                      torch.cos(2 * np.pi * p_t)], dim=1)


def decode(grid: SparseGrid, decoder: GaussianDecoder, bbox: np.ndarray) -> Gaussians:
    """Decode every voxel into v_g Gaussians (slot provenance attached)."""
    if len(grid) == 0:
        raise ShapeError("cannot decode an empty grid")
    pe = positional_encoding(grid, bbox, grid.dtype)
    raw = decoder(torch.cat([grid.features, pe], dim=1))
    n = len(grid)
    v_g = decoder.v_g
    raw = raw.reshape(n * v_g, RAW_PER_GAUSSIAN)
    centers_vox = torch.from_numpy(grid.centers()).to(grid.dtype)
    reach = 4.0 * grid.edge
    centers = centers_vox.repeat_interleave(v_g, dim=0) \
        + reach * (2.0 * torch.sigmoid(raw[:, 0:3]) - 1.0)
    scales = F.softplus(raw[:, 3:5], beta=1.0, threshold=20.0).clamp(MIN_SCALE, 4.0 * grid.edge)
    rotations = normalize_quats(raw[:, 5:9])
    colors = torch.sigmoid(raw[:, 10:13])
    opacities = grid.occupancy.repeat_interleave(v_g)
    slots = np.repeat(np.arange(n, dtype=np.int64), v_g)
    return Gaussians(centers, scales, rotations, opacities, colors, slots)


def decode_backward(grid: SparseGrid, decoder: GaussianDecoder, bbox: np.ndarray,
                    grad_gaussians: GaussianGrads) -> tuple[GradBuffer, dict]:
    """Chain upstream per-Gaussian gradients back through the decoder.

    Returns the feature-gradient buffer and a dict with one entry per decoder
    parameter plus an ``occupancy`` entry (opacity gradients route there).
    """
    feats = grid.features.detach().clone().requires_grad_(True)
    occ = grid.occupancy.detach().clone().requires_grad_(True)
    work = grid.with_features(feats, occ)
    params = list(decoder.parameters())
    g = decode(work, decoder, bbox)
    outputs = [g.centers, g.scales, g.rotations, g.opacities, g.colors]
    upstream = [grad_gaussians.centers, grad_gaussians.scales, grad_gaussians.rotations,
                grad_gaussians.opacities, grad_gaussians.colors]
    for o, u in zip(outputs, upstream):
        if o.shape != u.shape:
            raise ShapeError("gradient shapes misaligned with decode output")
    grads = torch.autograd.grad(outputs, [feats, occ] + params, grad_outputs=upstream,
                                allow_unused=True)
    names = [n for n, _ in decoder.named_parameters()]
    out = {"occupancy": grads[1] if grads[1] is not None else torch.zeros_like(occ)}
    for name, p, gr in zip(names, params, grads[2:]):
        out[name] = gr if gr is not None else torch.zeros_like(p)
    feat_grad = grads[0] if grads[0] is not None else torch.zeros_like(feats)
    return GradBuffer(feat_grad), out
