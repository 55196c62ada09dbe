"""Shared domain types, polar/Cartesian/spherical geometry, and pose math."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image


class OutOfRange(ValueError):
    """Bin or beam index outside the sensor grid."""


class PoleSingularity(ValueError):
    """Point too close to the +/-z axis for the spherical Jacobian."""


class DimensionMismatch(ValueError):
    """Arrays that must share a shape do not."""


@dataclass(frozen=True)
class RadarConfig:
    """Scanning-radar geometry and chirp parameters.

    Defaults describe a Navtech CIR304-H-class 360-degree scanning radar
    producing 400x839 polar power images out to 50 m.
    """

    n_azimuth: int = 400
    n_range: int = 839
    range_resolution: float = 0.0596      # meters per bin
    max_range: float = 50.0               # meters
    min_valid_range: float = 2.5          # meters, ego-return mask
    azimuth_resolution: float = 0.9       # degrees per beam
    sampling_duration: float = 565e-6     # seconds (T_s)
    chirp_slope: float = 1.6e12           # Hz/s
    beam_spread: float = 1.8              # degrees between -3 dB points
    transmit_scale: float = 1.0           # absorbs transmit power and constant losses

    def __post_init__(self):
        for name in ("n_azimuth", "n_range"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("range_resolution", "max_range", "azimuth_resolution",
                     "sampling_duration", "chirp_slope", "beam_spread",
                     "transmit_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.min_valid_range < 0:
            raise ValueError("min_valid_range must be >= 0")
        if abs(self.n_range * self.range_resolution - self.max_range) > self.range_resolution:
            raise ValueError("n_range * range_resolution must equal max_range within one bin")
        if abs(self.n_azimuth * self.azimuth_resolution - 360.0) > 1e-6:
            raise ValueError("n_azimuth * azimuth_resolution must cover 360 degrees")

    @property
    def azimuth_step_rad(self) -> float:
        return np.deg2rad(self.azimuth_resolution)

    def bin_ranges(self) -> np.ndarray:
        """Bin-center ranges for every range bin, in meters."""
        return (np.arange(self.n_range) + 0.5) * self.range_resolution

    def beam_angles(self) -> np.ndarray:
        """World-frame beam center angles in radians; row 0 points along +x, CCW."""
        return np.arange(self.n_azimuth) * self.azimuth_step_rad

    def valid_range_mask(self) -> np.ndarray:
        """Boolean per-bin mask, False inside the ego-return region."""
        return self.bin_ranges() >= self.min_valid_range

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        return cls(**d)


def bin_to_range(n: int, cfg: RadarConfig) -> float:
    """Bin-center range of bin ``n``: (n + 0.5) * range_resolution."""
    if n < 0 or n >= cfg.n_range:
        raise OutOfRange(f"bin index {n} outside [0, {cfg.n_range})")
    return (n + 0.5) * cfg.range_resolution


def range_to_bin(r: float, cfg: RadarConfig) -> int:
    """Nearest bin whose center is closest to range ``r`` (not clipped to valid)."""
    return int(round(r / cfg.range_resolution - 0.5))


# --- quaternion helpers (w, x, y, z convention) ---

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_yaw(yaw: float) -> np.ndarray:
    """Rotation about +z by ``yaw`` radians."""
    return quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)


@dataclass(frozen=True)
class Pose:
    """Rigid sensor-to-world transform: p_world = R(q) p_sensor + t."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            q = quat_normalize(q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.quaternion)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map sensor-frame point(s) (..., 3) into the world frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix().T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        """Map world-frame point(s) (..., 3) into the sensor frame."""
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self.rotation_matrix()

    def compose(self, other: "Pose") -> "Pose":
        """self o other: apply ``other`` first, then ``self``."""
        return Pose(self.apply(other.translation),
                    quat_mul(self.quaternion, other.quaternion))

    def inverse(self) -> "Pose":
        q_inv = quat_conj(self.quaternion)
        return Pose(-(self.rotation_matrix().T @ self.translation), q_inv)

    @property
    def yaw(self) -> float:
        """Heading of the sensor +x axis in the world x-y plane, radians."""
        fwd = self.rotation_matrix()[:, 0]
        return float(np.arctan2(fwd[1], fwd[0]))


@dataclass(frozen=True)
class SphericalPoint:
    r: float
    theta: float   # azimuth, radians in [-pi, pi)
    phi: float     # elevation, radians in [-pi/2, pi/2]


def cart_to_spherical(p: np.ndarray) -> SphericalPoint:
    """(x, y, z) -> (r, theta, phi) with theta = atan2(y, x), phi = asin(z/r).

    The origin maps to (0, 0, 0) by convention.
    """
    x, y, z = np.asarray(p, dtype=float).reshape(3)
    r = float(np.sqrt(x * x + y * y + z * z))
    if r == 0.0:
        return SphericalPoint(0.0, 0.0, 0.0)
    theta = float(np.arctan2(y, x))
    phi = float(np.arcsin(np.clip(z / r, -1.0, 1.0)))
    return SphericalPoint(r, theta, phi)


def spherical_to_cart(s: SphericalPoint) -> np.ndarray:
    cp = np.cos(s.phi)
    return np.array([s.r * cp * np.cos(s.theta),
                     s.r * cp * np.sin(s.theta),
                     s.r * np.sin(s.phi)])


def spherical_jacobian(p: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Jacobian of cart_to_spherical, rows ordered (r, theta, phi).

    Raises PoleSingularity when the point is within ``eps`` (relative) of
    the +/-z axis, where the azimuth and elevation rows blow up.
    """
    x, y, z = np.asarray(p, dtype=float).reshape(3)
    r2 = x * x + y * y + z * z
    rho2 = x * x + y * y
    if r2 == 0.0 or rho2 < eps * r2:
        raise PoleSingularity("spherical Jacobian undefined on the z-axis")
    r = np.sqrt(r2)
    rho = np.sqrt(rho2)
    return np.array([
        [x / r, y / r, z / r],
        [-y / rho2, x / rho2, 0.0],
        [-x * z / (r2 * rho), -y * z / (r2 * rho), rho / r2],
    ])


@dataclass(frozen=True)
class RadarFrame:
    """One polar power image with its capture pose.

    ``power`` is (n_azimuth, n_range), values in [0, 1]; row i is the beam
    at world angle i * azimuth_resolution relative to the sensor +x axis.
    """

    config: RadarConfig
    pose: Pose
    power: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if p.shape != (self.config.n_azimuth, self.config.n_range):
            raise DimensionMismatch(
                f"power shape {p.shape} != ({self.config.n_azimuth}, {self.config.n_range})")
        if p.min() < 0.0 or p.max() > 1.0 + 1e-12:
            raise ValueError("power values must lie in [0, 1]")
        object.__setattr__(self, "power", p)

    def with_power(self, power: np.ndarray) -> "RadarFrame":
        return RadarFrame(self.config, self.pose, power, self.timestamp)


def save_frame(frame: RadarFrame, base: str | Path) -> tuple[Path, Path]:
    """Write ``<base>.png`` (16-bit grayscale) and ``<base>.json`` sidecar."""
    base = Path(base)
    png_path = base.with_suffix(".png")
    json_path = base.with_suffix(".json")
    raw = np.round(np.clip(frame.power, 0.0, 1.0) * 65535.0).astype("<u2")
    Image.fromarray(raw).save(png_path)
    meta = {
        "config": frame.config.to_dict(),
        "pose": {
            "translation": frame.pose.translation.tolist(),
            "quaternion_wxyz": frame.pose.quaternion.tolist(),
        },
        "timestamp": frame.timestamp,
    }
    json_path.write_text(json.dumps(meta, indent=1))
    return png_path, json_path


def load_frame(base: str | Path) -> RadarFrame:
    """Load a frame written by :func:`save_frame`; ``base`` may include .png."""
    base = Path(base)
    png_path = base.with_suffix(".png")
    json_path = base.with_suffix(".json")
    meta = json.loads(json_path.read_text())
    raw = np.array(Image.open(png_path), dtype=np.float64)
    cfg = RadarConfig.from_dict(meta["config"])
    pose = Pose(np.array(meta["pose"]["translation"]),
                np.array(meta["pose"]["quaternion_wxyz"]))
    return RadarFrame(cfg, pose, raw / 65535.0, float(meta["timestamp"]))
