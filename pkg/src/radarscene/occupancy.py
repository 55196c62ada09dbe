"""BEV occupancy mapping from denoised frames over a sliding window."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import Pose, RadarConfig, RadarFrame

DEFAULT_CELL_SIZE = 0.25   # meters
DEFAULT_POWER_TH = 0.15
DEFAULT_WINDOW = 10        # frames


class EmptyWindow(ValueError):
    """No frames supplied to the mapper."""


@dataclass(frozen=True)
class OccupancyGrid:
    """World-frame BEV grid; cell (ix, iy) covers
    [origin + i*cell, origin + (i+1)*cell) on each axis.

    ``mean_power`` and ``binary`` are indexed [iy, ix].
    """

    origin: np.ndarray       # (2,) world x, y of the grid corner
    cell_size: float
    mean_power: np.ndarray   # (height, width)
    binary: np.ndarray       # (height, width) of {0, 1}
    power_threshold: float = DEFAULT_POWER_TH

    def __post_init__(self):
        object.__setattr__(self, "origin",
                           np.asarray(self.origin, dtype=float).reshape(2))
        if self.mean_power.shape != self.binary.shape:
            raise ValueError("mean_power and binary must share a shape")

    @property
    def width(self) -> int:
        return self.mean_power.shape[1]

    @property
    def height(self) -> int:
        return self.mean_power.shape[0]

    def cell_index(self, xy: np.ndarray) -> np.ndarray:
        """World (..., 2) -> integer (..., 2) of (ix, iy), unclamped."""
        return np.floor((np.asarray(xy, dtype=float) - self.origin)
                        / self.cell_size).astype(int)

    def cell_centers(self, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
        return (np.stack([ix, iy], axis=-1) + 0.5) * self.cell_size + self.origin

    def save(self, base: str | Path, save_mean: bool = False) -> None:
        base = Path(base)
        Image.fromarray((self.binary * 255).astype(np.uint8), mode="L").save(
            base.with_suffix(".png"))
        meta = {"origin": self.origin.tolist(), "cell_size": self.cell_size,
                "width": self.width, "height": self.height,
                "power_threshold": self.power_threshold}
        base.with_suffix(".json").write_text(json.dumps(meta, indent=1))
        if save_mean:
            raw = np.round(np.clip(self.mean_power, 0, 1) * 65535).astype("<u2")
            Image.fromarray(raw).save(
                base.with_name(base.stem + "_mean.png"))

    @classmethod
    def load(cls, base: str | Path) -> "OccupancyGrid":
        base = Path(base)
        meta = json.loads(base.with_suffix(".json").read_text())
        binary = (np.array(Image.open(base.with_suffix(".png"))) > 127).astype(np.uint8)
        mean_path = base.with_name(base.stem + "_mean.png")
        if mean_path.exists():
            mean = np.array(Image.open(mean_path), dtype=np.float64) / 65535.0
        else:
            mean = binary.astype(np.float64)
        return cls(np.array(meta["origin"]), meta["cell_size"], mean, binary,
                   meta.get("power_threshold", DEFAULT_POWER_TH))


def _grid_bounds(poses: list[Pose], cfg: RadarConfig,
                 cell: float) -> tuple[np.ndarray, int, int]:
    xy = np.array([p.translation[:2] for p in poses])
    lo = xy.min(axis=0) - cfg.max_range - cell
    hi = xy.max(axis=0) + cfg.max_range + cell
    origin = np.floor(lo / cell) * cell
    nx = int(np.ceil((hi[0] - origin[0]) / cell))
    ny = int(np.ceil((hi[1] - origin[1]) / cell))
    return origin, nx, ny


def build_occupancy(frames: list[RadarFrame],
                    p_th: float = DEFAULT_POWER_TH,
                    cell_size: float = DEFAULT_CELL_SIZE) -> OccupancyGrid:
    """Splat every valid polar sample of the window into its BEV cell and
    threshold per-cell mean power. Frame order does not matter."""
    if not frames:
        raise EmptyWindow("need at least one frame")
    cfg = frames[0].config
    origin, nx, ny = _grid_bounds([f.pose for f in frames], cfg, cell_size)
    power_sum = np.zeros((ny, nx))
    count = np.zeros((ny, nx), dtype=np.int64)
    valid = cfg.valid_range_mask()
    ranges = cfg.bin_ranges()[valid]
    angles = cfg.beam_angles()
    local = np.zeros((len(angles), len(ranges), 3))
    local[:, :, 0] = np.cos(angles)[:, None] * ranges[None, :]
    local[:, :, 1] = np.sin(angles)[:, None] * ranges[None, :]
    for frame in frames:
        world = frame.pose.apply(local.reshape(-1, 3))[:, :2]
        ix = np.floor((world[:, 0] - origin[0]) / cell_size).astype(int)
        iy = np.floor((world[:, 1] - origin[1]) / cell_size).astype(int)
        ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        vals = frame.power[:, valid].reshape(-1)
        np.add.at(power_sum, (iy[ok], ix[ok]), vals[ok])
        np.add.at(count, (iy[ok], ix[ok]), 1)
    mean = np.divide(power_sum, count, out=np.zeros_like(power_sum),
                     where=count > 0)
    binary = (mean > p_th).astype(np.uint8)
    return OccupancyGrid(origin, cell_size, mean, binary, p_th)


def grid_to_polar(grid: OccupancyGrid, pose: Pose, cfg: RadarConfig) -> np.ndarray:
    """Nearest-cell sampling of the binary grid along every (beam, bin) ray.

    Returns an (n_azimuth, n_range) array of {0, 1}; rays leaving the grid
    sample as 0.
    """
    ranges = cfg.bin_ranges()
    angles = cfg.beam_angles()
    local = np.zeros((len(angles), len(ranges), 3))
    local[:, :, 0] = np.cos(angles)[:, None] * ranges[None, :]
    local[:, :, 1] = np.sin(angles)[:, None] * ranges[None, :]
    world = pose.apply(local.reshape(-1, 3))[:, :2]
    idx = grid.cell_index(world)
    ok = ((idx[:, 0] >= 0) & (idx[:, 0] < grid.width)
          & (idx[:, 1] >= 0) & (idx[:, 1] < grid.height))
    out = np.zeros(len(world))
    out[ok] = grid.binary[idx[ok, 1], idx[ok, 0]]
    return out.reshape(cfg.n_azimuth, cfg.n_range)


def windowed_occupancy(frames: list[RadarFrame], window: int = DEFAULT_WINDOW,
                       p_th: float = DEFAULT_POWER_TH,
                       cell_size: float = DEFAULT_CELL_SIZE) -> list[OccupancyGrid]:
    """Per-frame occupancy grids from a window centered on each frame."""
    if not frames:
        raise EmptyWindow("need at least one frame")
    grids = []
    half = window // 2
    for i in range(len(frames)):
        lo = max(0, i - half)
        hi = min(len(frames), lo + window)
        lo = max(0, hi - window)
        grids.append(build_occupancy(frames[lo:hi], p_th, cell_size))
    return grids
