"""Forward radar simulator and noise injectors: the ground-truth oracle for
desk-scale experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Pose, RadarConfig, RadarFrame, cart_to_spherical, quat_from_yaw
from .gains import AntennaGains
from .spectral import leakage_kernel


class BadBeamIndex(ValueError):
    """Azimuth index outside the frame."""


@dataclass(frozen=True)
class PointScatterer:
    position: np.ndarray   # world, meters
    rcs: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float).reshape(3))
        if self.rcs < 0:
            raise ValueError("rcs must be >= 0")


@dataclass(frozen=True)
class WallSegment:
    """Vertical wall from ``start`` to ``end`` (x, y), centered on z = 0."""

    start: np.ndarray
    end: np.ndarray
    rcs_per_meter: float
    height: float = 0.5

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float).reshape(2)
        e = np.asarray(self.end, dtype=float).reshape(2)
        if np.allclose(s, e):
            raise ValueError("wall endpoints must be distinct")
        if self.rcs_per_meter < 0 or self.height <= 0:
            raise ValueError("need rcs_per_meter >= 0 and height > 0")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)


@dataclass(frozen=True)
class SceneSpec:
    reflectors: tuple = ()

    def to_json(self) -> str:
        items = []
        for r in self.reflectors:
            if isinstance(r, PointScatterer):
                items.append({"type": "point", "position": r.position.tolist(),
                              "rcs": r.rcs})
            else:
                items.append({"type": "wall", "start": r.start.tolist(),
                              "end": r.end.tolist(),
                              "rcs_per_meter": r.rcs_per_meter,
                              "height": r.height})
        return json.dumps({"reflectors": items}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        items = json.loads(text)["reflectors"]
        reflectors = []
        for d in items:
            if d["type"] == "point":
                reflectors.append(PointScatterer(np.array(d["position"]), d["rcs"]))
            elif d["type"] == "wall":
                reflectors.append(WallSegment(np.array(d["start"]), np.array(d["end"]),
                                              d["rcs_per_meter"], d.get("height", 0.5)))
            else:
                raise ValueError(f"unknown reflector type {d['type']!r}")
        return cls(tuple(reflectors))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        return cls.from_json(Path(path).read_text())

    def boundary_points(self, spacing: float = 0.1) -> np.ndarray:
        """(M, 2) ground-truth BEV samples of every reflector."""
        pts = []
        for r in self.reflectors:
            if isinstance(r, PointScatterer):
                pts.append(r.position[None, :2])
            else:
                length = float(np.linalg.norm(r.end - r.start))
                n = max(2, int(np.ceil(length / spacing)) + 1)
                t = np.linspace(0.0, 1.0, n)[:, None]
                pts.append(r.start[None, :] * (1 - t) + r.end[None, :] * t)
        if not pts:
            return np.zeros((0, 2))
        return np.concatenate(pts, axis=0)


def _scene_samples(spec: SceneSpec, cfg: RadarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Expand reflectors into world-frame point samples with per-sample RCS."""
    positions, rcs = [], []
    dl = cfg.range_resolution / 2.0
    for r in spec.reflectors:
        if isinstance(r, PointScatterer):
            positions.append(r.position[None, :])
            rcs.append(np.array([r.rcs]))
        else:
            length = float(np.linalg.norm(r.end - r.start))
            n_l = max(2, int(np.ceil(length / dl)) + 1)
            t = np.linspace(0.0, 1.0, n_l)[:, None]
            xy = r.start[None, :] * (1 - t) + r.end[None, :] * t
            n_z = max(1, int(np.ceil(r.height / 0.25)))
            zs = (np.arange(n_z) + 0.5) / n_z * r.height - r.height / 2.0
            sample_rcs = r.rcs_per_meter * (length / n_l) / n_z
            for z in zs:
                positions.append(np.column_stack([xy, np.full(n_l, z)]))
                rcs.append(np.full(n_l, sample_rcs))
    if not positions:
        return np.zeros((0, 3)), np.zeros(0)
    return np.concatenate(positions), np.concatenate(rcs)


def simulate_frame(spec: SceneSpec, pose: Pose, cfg: RadarConfig,
                   gains: AntennaGains | None = None,
                   timestamp: float = 0.0) -> RadarFrame:
    """Clean forward simulation: every reflector sample lands in its nearest
    (beam, bin) cell weighted by the radar equation, then range leakage blurs
    each beam. Deterministic."""
    if gains is None:
        gains = AntennaGains.from_config(cfg)
    power = np.zeros((cfg.n_azimuth, cfg.n_range))
    positions, rcs = _scene_samples(spec, cfg)
    if len(positions) > 0:
        local = pose.apply_inverse(positions)
        r = np.linalg.norm(local, axis=1)
        keep = (r > cfg.range_resolution) & (r < cfg.max_range + cfg.range_resolution)
        local, r, rcs = local[keep], r[keep], rcs[keep]
        theta = np.arctan2(local[:, 1], local[:, 0])
        phi = np.arcsin(np.clip(local[:, 2] / r, -1.0, 1.0))
        beam = np.round(theta / cfg.azimuth_step_rad).astype(int) % cfg.n_azimuth
        dtheta = theta - beam * cfg.azimuth_step_rad
        dtheta = (dtheta + np.pi) % (2 * np.pi) - np.pi
        bins = np.round(r / cfg.range_resolution - 0.5).astype(int)
        ok = (bins >= 0) & (bins < cfg.n_range)
        contrib = (cfg.transmit_scale * gains.azimuth(dtheta) ** 2
                   * gains.elevation(phi) ** 2 * rcs / r ** 4)
        np.add.at(power, (beam[ok], bins[ok]), contrib[ok])
    _, kernel = leakage_kernel(cfg)
    radius = (len(kernel) - 1) // 2
    padded = np.pad(power, ((0, 0), (radius, radius)), mode="symmetric")
    for i in range(cfg.n_azimuth):
        power[i] = np.convolve(padded[i], kernel, mode="valid")
    return RadarFrame(cfg, pose, np.clip(power, 0.0, 1.0), timestamp)


def inject_saturation(frame: RadarFrame, beams, offset: float) -> RadarFrame:
    """Add a uniform power offset to whole beams, clamped to 1."""
    if not 0.0 <= offset <= 1.0:
        raise ValueError("offset must be in [0, 1]")
    power = frame.power.copy()
    for b in np.atleast_1d(beams):
        b = int(b)
        if b < 0 or b >= frame.config.n_azimuth:
            raise BadBeamIndex(f"beam {b} outside frame")
        power[b] = np.clip(power[b] + offset, 0.0, 1.0)
    return frame.with_power(power)


def inject_multipath(frame: RadarFrame, beam: int, source_bin: int,
                     period_m: float, a: float, gamma: float) -> RadarFrame:
    """Append a decaying half-rectified cosine ghost tail behind ``source_bin``.

    The tail amplitude is ``a`` times the power at the source bin; ``gamma``
    is the per-bin exponential attenuation.
    """
    cfg = frame.config
    if beam < 0 or beam >= cfg.n_azimuth:
        raise BadBeamIndex(f"beam {beam} outside frame")
    if period_m <= 2 * cfg.range_resolution:
        raise ValueError("period must exceed two range bins")
    if not 0.0 <= a <= 1.0:
        raise ValueError("amplitude ratio must be in [0, 1]")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    power = frame.power.copy()
    n = np.arange(cfg.n_range - source_bin, dtype=float)
    tail = (a * np.exp(-gamma * n)
            * np.maximum(np.cos(2.0 * np.pi * n * cfg.range_resolution / period_m), 0.0)
            * power[beam, source_bin])
    power[beam, source_bin:] = np.clip(power[beam, source_bin:] + tail, 0.0, 1.0)
    return frame.with_power(power)


def inject_speckle(frame: RadarFrame, level: float, seed: int = 0) -> RadarFrame:
    """Add i.i.d. exponential background noise with mean ``level``."""
    if not 0.0 <= level <= 0.2:
        raise ValueError("level must be in [0, 0.2]")
    if level == 0.0:
        return frame
    rng = np.random.default_rng(seed)
    noise = rng.exponential(level, frame.power.shape)
    return frame.with_power(np.clip(frame.power + noise, 0.0, 1.0))


def line_trajectory(start_xy, end_xy, n_frames: int, z: float = 0.0) -> list[Pose]:
    """Poses spaced evenly from start to end, heading along the travel line."""
    start = np.asarray(start_xy, dtype=float)
    end = np.asarray(end_xy, dtype=float)
    yaw = float(np.arctan2(*(end - start)[::-1]))
    ts = np.linspace(0.0, 1.0, n_frames) if n_frames > 1 else np.array([0.0])
    return [Pose(np.array([*(start + t * (end - start)), z]), quat_from_yaw(yaw))
            for t in ts]


def arc_trajectory(center_xy, radius: float, angle_start: float, angle_end: float,
                   n_frames: int, z: float = 0.0) -> list[Pose]:
    """Poses on a circular arc, heading tangent to the arc."""
    center = np.asarray(center_xy, dtype=float)
    angles = (np.linspace(angle_start, angle_end, n_frames)
              if n_frames > 1 else np.array([angle_start]))
    poses = []
    for ang in angles:
        xy = center + radius * np.array([np.cos(ang), np.sin(ang)])
        poses.append(Pose(np.array([*xy, z]), quat_from_yaw(ang + np.pi / 2)))
    return poses
