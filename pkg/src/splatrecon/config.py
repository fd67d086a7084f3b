"""Run configuration: documented keys, defaults, and the flat config-file format.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
CLI ``--set key=value`` overrides file values, which override defaults.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError


@dataclass
class RunConfig:
    # Scene representation
    v_d: float = 0.04            # voxel edge length in meters
    v_g: int = 2                 # Gaussians decoded per voxel
    feature_dim: int = 64        # latent feature width per voxel

    # Densification-optimization loop
    T: int = 5                   # loop timesteps
    s: int = 20000               # densification base count, n(t) = floor(s / 2^t)
    views_per_accum: int = 100   # views used per gradient accumulation (capped at scene size)
    refine_steps: int = 2000     # post-loop gradient-descent refinement steps

    # Networks
    channels: tuple[int, ...] = (32, 64, 96, 128, 128)  # per-level plan, level 0 first
    levels: int = 4              # up/down stages in the sparse encoder-decoders
    t_embed_dim: int = 16        # timestep embedding width
    dense_cell_budget: int = 200000  # max cells in the bottleneck dense crop
    occ_threshold: float = 0.5   # occupancy gate for child allocation

    # Decoder MLP
    decoder_hidden: int = 128
    decoder_layers: int = 2

    # Training
    lr: float = 1e-4
    stage1_steps: int = 2000
    stage2_epochs: int = 10
    stage2_loss_views: int = 2   # views rendered for the per-timestep stage-2 loss

    # Loss weights (stage 1 uses all five, stage 2 uses color/depth/dist)
    weight_color: float = 1.0
    weight_depth: float = 1.0
    weight_occ: float = 1.0
    weight_normal: float = 0.01
    weight_dist: float = 10.0

    # Refinement learning rates (center lr is scaled by scene extent)
    lr_center_factor: float = 1.6e-4
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3

    # Renderer
    near: float = 0.01           # near plane in meters
    cutoff: float = 3.0          # Gaussian evaluation radius in units of sigma
    tile: int = 16               # tile edge in pixels
    alpha_cull: float = 1.0 / 255.0
    term_tau: float = 1e-4       # transmittance early-termination threshold

    # Meshing / evaluation
    tsdf_voxel: float = 0.02
    tsdf_trunc: float = 0.08
    depth_alpha_valid: float = 0.5
    holdout_every: int = 0       # every k-th view held out for evaluation (0 = none)

    # Runtime
    seed: int = 0
    threads: int = 0             # torch threads, 0 = hardware default
    dtype: str = "float64"       # float64 or float32

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        if self.s < 0:
            raise ValidationError("s must be >= 0")
        if self.v_d <= 0:
            raise ValidationError("v_d must be positive")
        if self.v_g < 1:
            raise ValidationError("v_g must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValidationError(f"unsupported dtype {self.dtype!r}")
        if len(self.channels) < self.levels + 1:
            raise ValidationError("channels must list one width per level (levels + 1)")

    @property
    def position_radius(self) -> float:
        """Reach of a decoded Gaussian center around its voxel center (meters)."""
        return 4.0 * self.v_d

    @property
    def torch_dtype(self):
        import torch

        return torch.float64 if self.dtype == "float64" else torch.float32


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

# One-line help text per key, shown by the CLI.
KEY_HELP = {
    "v_d": "voxel edge length in meters",
    "v_g": "Gaussians decoded per voxel",
    "feature_dim": "latent feature width per voxel",
    "T": "densification-optimization loop timesteps",
    "s": "densification base count; n(t) = floor(s / 2^t)",
    "views_per_accum": "views per gradient accumulation pass",
    "refine_steps": "post-loop gradient-descent refinement steps",
    "channels": "per-level channel plan, finest level first",
    "levels": "up/down stages in the sparse encoder-decoders",
    "t_embed_dim": "timestep embedding width",
    "dense_cell_budget": "max cells in the bottleneck dense crop",
    "occ_threshold": "occupancy gate for child allocation",
    "decoder_hidden": "decoder MLP hidden width",
    "decoder_layers": "decoder MLP hidden layer count",
    "lr": "training learning rate",
    "stage1_steps": "stage-1 training steps",
    "stage2_epochs": "stage-2 training epochs (loop passes per scene)",
    "stage2_loss_views": "views rendered for each per-timestep stage-2 loss",
    "weight_color": "rendering-loss weight",
    "weight_depth": "depth-loss weight",
    "weight_occ": "occupancy-loss weight",
    "weight_normal": "normal-loss weight (stage 1 only)",
    "weight_dist": "distortion-loss weight",
    "lr_center_factor": "refine: center lr per unit scene extent",
    "lr_scale": "refine: scale lr",
    "lr_rotation": "refine: rotation lr",
    "lr_opacity": "refine: opacity lr",
    "lr_color": "refine: color lr",
    "near": "renderer near plane in meters",
    "cutoff": "Gaussian evaluation radius in sigmas",
    "tile": "rasterizer tile edge in pixels",
    "alpha_cull": "minimum per-fragment alpha",
    "term_tau": "transmittance early-termination threshold",
    "tsdf_voxel": "TSDF cell size in meters",
    "tsdf_trunc": "TSDF truncation distance in meters",
    "depth_alpha_valid": "min render alpha for a depth pixel to be fused",
    "holdout_every": "every k-th view held out for evaluation (0 = none)",
    "seed": "master RNG seed",
    "threads": "torch thread count (0 = hardware default)",
    "dtype": "float64 or float32",
}


def _parse_value(key: str, raw: str):
    f = _FIELDS[key]
    raw = raw.strip()
    # field types are strings under `from __future__ import annotations`
    tname = f.type if isinstance(f.type, str) else f.type.__name__
    if tname.startswith("tuple"):
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(int(p) for p in parts)
    if tname == "int":
        return int(raw)
    if tname == "float":
        return float(raw)
    if tname == "bool":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValidationError(f"bad boolean for {key}: {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` text into a dict of typed values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, and overrides."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text()))
    for key, raw in (overrides or {}).items():
        if key not in _FIELDS:
            raise ValidationError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    return RunConfig(**values)


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def apply_threads(cfg: RunConfig) -> None:
    import torch

    if cfg.threads > 0:
        torch.set_num_threads(cfg.threads)
