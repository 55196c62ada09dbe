"""Gaussian scene representation and the differentiable polar radar renderer.

The rendering pipeline has three stages: elevation projection onto a fine
azimuth grid, strided azimuth-beam convolution, and range leakage blur.
Everything runs in float64 torch so gradients flow to every scene parameter.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .core import DimensionMismatch, Pose, RadarConfig
from .gains import AntennaGains
from .spectral import gaussian_kernel, leakage_sigma

DTYPE = torch.float64
SCENE_FORMAT_TAG = "radarscene-gaussians-v1"
DEFAULT_SH_DEGREE = 10
DEFAULT_Q = 10
DEFAULT_TRUNCATION = 6.0   # footprint window half-extent in marginal stds
DEFAULT_S_MAX = 1.0        # meters
RHO_MAX = 1.0
_LOGIT_CLIP = 1e-6


class RenderMode(enum.Enum):
    SIGMA = "sigma"         # rho * min(alpha + eta, 1)
    ALPHA = "alpha"         # occupancy only
    RHO_ALPHA = "rhoalpha"  # noise-free target component
    RHO_ETA = "rhoeta"      # noise component


def _logit(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
    return np.log(x / (1.0 - x))


@dataclass(frozen=True)
class Gaussian:
    """User-facing view of one scene Gaussian."""

    mean: np.ndarray          # world, meters
    quat: np.ndarray          # wxyz
    scale: np.ndarray         # per-axis std, meters
    alpha: float              # occupancy probability
    eta: float                # noise probability
    sh: np.ndarray            # [a_0..a_L, b_1..b_L] azimuth harmonics

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(3))
        object.__setattr__(self, "quat", np.asarray(self.quat, dtype=float).reshape(4))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).reshape(3))
        object.__setattr__(self, "sh", np.asarray(self.sh, dtype=float).ravel())
        if np.any(self.scale <= 0):
            raise ValueError("scale components must be > 0")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ValueError("alpha and eta must lie in [0, 1]")


def reflectivity(g: Gaussian, theta_view: float) -> float:
    """View-dependent reflectivity: clamped azimuth harmonic expansion."""
    sh = g.sh
    degree = (len(sh) - 1) // 2
    val = sh[0]
    for l in range(1, degree + 1):
        val += sh[l] * np.cos(l * theta_view) + sh[degree + l] * np.sin(l * theta_view)
    return float(np.clip(val, 0.0, RHO_MAX))


def power_return_ratio(g: Gaussian, theta_view: float) -> float:
    """rho(theta) * min(alpha + eta, 1)."""
    return reflectivity(g, theta_view) * min(g.alpha + g.eta, 1.0)


class GaussianScene:
    """Batched scene parameters; probabilities live in logit space and scales
    in log space so their constraints hold by construction."""

    def __init__(self, means, quats, log_scales, alpha_logit, eta_logit, sh,
                 log_transmit, s_max: float = DEFAULT_S_MAX):
        as_t = lambda v: torch.as_tensor(v, dtype=DTYPE)
        self.means = as_t(means).reshape(-1, 3)
        n = len(self.means)
        self.quats = as_t(quats).reshape(n, 4)
        self.log_scales = as_t(log_scales).reshape(n, 3)
        self.alpha_logit = as_t(alpha_logit).reshape(n)
        self.eta_logit = as_t(eta_logit).reshape(n)
        self.sh = as_t(sh).reshape(n, -1)
        self.log_transmit = as_t(log_transmit).reshape(())
        self.s_max = float(s_max)
        if n < 1:
            raise ValueError("scene needs at least one Gaussian")

    def __len__(self) -> int:
        return len(self.means)

    @property
    def sh_degree(self) -> int:
        return (self.sh.shape[1] - 1) // 2

    @property
    def alpha(self) -> torch.Tensor:
        return torch.sigmoid(self.alpha_logit)

    @property
    def eta(self) -> torch.Tensor:
        return torch.sigmoid(self.eta_logit)

    @property
    def scales(self) -> torch.Tensor:
        return torch.exp(self.log_scales)

    @property
    def transmit_scale(self) -> torch.Tensor:
        return torch.exp(self.log_transmit)

    def parameters(self) -> dict[str, torch.Tensor]:
        return {"means": self.means, "quats": self.quats,
                "log_scales": self.log_scales, "alpha_logit": self.alpha_logit,
                "eta_logit": self.eta_logit, "sh": self.sh,
                "log_transmit": self.log_transmit}

    def requires_grad_(self, flag: bool = True) -> "GaussianScene":
        for p in self.parameters().values():
            p.requires_grad_(flag)
        return self

    def detach_clone(self) -> "GaussianScene":
        ps = {k: v.detach().clone() for k, v in self.parameters().items()}
        return GaussianScene(ps["means"], ps["quats"], ps["log_scales"],
                             ps["alpha_logit"], ps["eta_logit"], ps["sh"],
                             ps["log_transmit"], self.s_max)

    @classmethod
    def from_gaussians(cls, gaussians: list[Gaussian], transmit_scale: float = 1.0,
                       s_max: float = DEFAULT_S_MAX) -> "GaussianScene":
        if not gaussians:
            raise ValueError("scene needs at least one Gaussian")
        return cls(np.stack([g.mean for g in gaussians]),
                   np.stack([g.quat for g in gaussians]),
                   np.log(np.stack([g.scale for g in gaussians])),
                   _logit(np.array([g.alpha for g in gaussians])),
                   _logit(np.array([g.eta for g in gaussians])),
                   np.stack([g.sh for g in gaussians]),
                   math.log(transmit_scale), s_max)

    def to_gaussians(self) -> list[Gaussian]:
        means = self.means.detach().numpy()
        quats = self.quats.detach().numpy()
        scales = self.scales.detach().numpy()
        alpha = self.alpha.detach().numpy()
        eta = self.eta.detach().numpy()
        sh = self.sh.detach().numpy()
        return [Gaussian(means[i], quats[i], scales[i], float(alpha[i]),
                         float(eta[i]), sh[i]) for i in range(len(self))]

    def save(self, path: str | Path) -> None:
        payload = {
            "format": SCENE_FORMAT_TAG,
            "transmit_scale": float(self.transmit_scale.detach()),
            "s_max": self.s_max,
            "sh_degree": self.sh_degree,
            "gaussians": [{
                "mean": g.mean.tolist(), "quat": g.quat.tolist(),
                "scale": g.scale.tolist(), "alpha": g.alpha, "eta": g.eta,
                "sh": g.sh.tolist(),
            } for g in self.to_gaussians()],
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "GaussianScene":
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != SCENE_FORMAT_TAG:
            raise ValueError(f"unsupported scene format {payload.get('format')!r}")
        gaussians = [Gaussian(np.array(d["mean"]), np.array(d["quat"]),
                              np.array(d["scale"]), d["alpha"], d["eta"],
                              np.array(d["sh"]))
                     for d in payload["gaussians"]]
        return cls.from_gaussians(gaussians, payload["transmit_scale"],
                                  payload["s_max"])


def scene_init(n_gaussians: int, poses: list[Pose], r_min: float, r_max: float,
               size: float = 0.5, alpha0: float = 0.1, eta0: float = 0.1,
               sh0: float = 0.1, z_range: tuple[float, float] = (-0.5, 0.5),
               sh_degree: int = DEFAULT_SH_DEGREE, transmit_scale: float = 1.0,
               s_max: float = DEFAULT_S_MAX, seed: int = 0) -> GaussianScene:
    """Isotropic Gaussians scattered uniformly (by area) over the union of the
    training fields of view; deterministic for a fixed seed."""
    if n_gaussians < 1:
        raise ValueError("need at least one Gaussian")
    rng = np.random.default_rng(seed)
    centers = np.stack([p.translation for p in poses])
    pick = rng.integers(0, len(poses), n_gaussians)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_gaussians)
    r = np.sqrt(rng.uniform(r_min ** 2, r_max ** 2, n_gaussians))
    z = rng.uniform(z_range[0], z_range[1], n_gaussians)
    means = centers[pick] + np.stack(
        [r * np.cos(theta), r * np.sin(theta), z], axis=1)
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (n_gaussians, 1))
    sh = np.zeros((n_gaussians, 2 * sh_degree + 1))
    sh[:, 0] = sh0
    return GaussianScene(means, quats, np.full((n_gaussians, 3), np.log(size)),
                         np.full(n_gaussians, _logit(np.array([alpha0]))[0]),
                         np.full(n_gaussians, _logit(np.array([eta0]))[0]),
                         sh, math.log(transmit_scale), s_max)


# --- rendering ---

def _quats_to_rotmats(quats: torch.Tensor) -> torch.Tensor:
    q = quats / torch.linalg.norm(quats, dim=1, keepdim=True)
    w, x, y, z = q.unbind(dim=1)
    row0 = torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z),
                        2 * (x * z + w * y)], dim=1)
    row1 = torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z),
                        2 * (y * z - w * x)], dim=1)
    row2 = torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x),
                        1 - 2 * (x * x + y * y)], dim=1)
    return torch.stack([row0, row1, row2], dim=1)


def _scene_reflectivity(scene: GaussianScene, theta_view: torch.Tensor) -> torch.Tensor:
    degree = scene.sh_degree
    rho = scene.sh[:, 0]
    if degree > 0:
        l = torch.arange(1, degree + 1, dtype=DTYPE)
        ang = theta_view[:, None] * l[None, :]
        rho = rho + (scene.sh[:, 1:degree + 1] * torch.cos(ang)).sum(dim=1)
        rho = rho + (scene.sh[:, degree + 1:] * torch.sin(ang)).sum(dim=1)
    return torch.clamp(rho, 0.0, RHO_MAX)


def _mode_weights(scene: GaussianScene, pose: Pose,
                  modes: tuple[RenderMode, ...]) -> torch.Tensor:
    """(C, N) per-Gaussian accumulation weights for each requested mode."""
    delta = torch.as_tensor(pose.translation, dtype=DTYPE)[None, :2] - scene.means[:, :2]
    theta_view = torch.atan2(delta[:, 1], delta[:, 0])
    rho = _scene_reflectivity(scene, theta_view)
    alpha, eta = scene.alpha, scene.eta
    rows = []
    for mode in modes:
        if mode == RenderMode.SIGMA:
            rows.append(rho * torch.clamp(alpha + eta, max=1.0))
        elif mode == RenderMode.ALPHA:
            rows.append(alpha)
        elif mode == RenderMode.RHO_ALPHA:
            rows.append(rho * alpha)
        elif mode == RenderMode.RHO_ETA:
            rows.append(rho * eta)
        else:
            raise ValueError(f"unknown mode {mode}")
    return torch.stack(rows, dim=0)


def _project_to_spherical(scene: GaussianScene, pose: Pose):
    """Sensor-frame spherical means and (theta, r) footprint covariances.

    Returns (r, theta, phi, cov2d, valid); invalid entries sit on the pole
    or have degenerate footprints and must be dropped by the caller.
    """
    rot = torch.as_tensor(pose.rotation_matrix(), dtype=DTYPE)
    t = torch.as_tensor(pose.translation, dtype=DTYPE)
    local = (scene.means - t) @ rot
    x, y, z = local.unbind(dim=1)
    r2 = (local ** 2).sum(dim=1)
    r = torch.sqrt(r2)
    rho2 = x * x + y * y
    pole_ok = rho2 > 1e-12 * r2
    safe_rho2 = torch.where(pole_ok, rho2, torch.ones_like(rho2))
    rho = torch.sqrt(safe_rho2)
    theta = torch.atan2(y, x)
    phi = torch.asin(torch.clamp(z / torch.clamp(r, min=1e-12), -1.0, 1.0))

    rot_g = _quats_to_rotmats(scene.quats)
    m = rot_g * scene.scales[:, None, :]
    cov_world = m @ m.transpose(1, 2)
    cov_local = rot.T @ cov_world @ rot

    # Jacobian rows (r, theta); phi marginalizes out of the 2D footprint.
    j_r = local / torch.clamp(r, min=1e-12)[:, None]
    zeros = torch.zeros_like(x)
    j_t = torch.stack([-y / safe_rho2, x / safe_rho2, zeros], dim=1)
    j = torch.stack([j_t, j_r], dim=1)            # (N, 2, 3), rows (theta, r)
    cov2d = j @ cov_local @ j.transpose(1, 2)     # (N, 2, 2)
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    valid = pole_ok & (det > 1e-30) & torch.isfinite(det)
    return r, theta, phi, cov2d, valid


def project_elevation(scene: GaussianScene, pose: Pose, cfg: RadarConfig,
                      gains: AntennaGains | None = None,
                      q_upsample: int = DEFAULT_Q,
                      modes: tuple[RenderMode, ...] = (RenderMode.SIGMA,),
                      truncation: float = DEFAULT_TRUNCATION,
                      chunk: int = 256) -> torch.Tensor:
    """Fine-azimuth polar image(s), shape (len(modes), H*Q, W).

    Each Gaussian adds transmit_scale * G_phi(phi_i)^2 * weight_i * w_i / R_n^4
    to the pixels under its (theta, r) footprint, where w_i is the footprint
    density per unit BEV scene area (mass-conserving, hence the peak falls off
    as 1/R^4). Gaussians closer than min_valid_range, on the pole, or with
    degenerate footprints contribute nothing.
    """
    if q_upsample < 1:
        raise ValueError("q_upsample must be >= 1")
    if gains is None:
        gains = AntennaGains.from_config(cfg)
    h_fine = cfg.n_azimuth * q_upsample
    w = cfg.n_range
    dtheta_f = cfg.azimuth_step_rad / q_upsample
    dr = cfg.range_resolution
    channels = [torch.zeros(h_fine * w, dtype=DTYPE) for _ in modes]

    weights = _mode_weights(scene, pose, modes)
    r, theta, phi, cov2d, valid = _project_to_spherical(scene, pose)
    valid = valid & (r > cfg.min_valid_range)
    pref = (scene.transmit_scale * gains.elevation(phi) ** 2)

    sig_t = torch.sqrt(torch.clamp(cov2d[:, 0, 0], min=1e-30)).detach()
    sig_r = torch.sqrt(torch.clamp(cov2d[:, 1, 1], min=1e-30)).detach()
    hw_t = torch.ceil(truncation * sig_t / dtheta_f).long().clamp(1, h_fine // 2)
    hw_r = torch.ceil(truncation * sig_r / dr).long().clamp(1, w)
    jc = torch.round(theta.detach() / dtheta_f - 0.5).long()
    nc = torch.round(r.detach() / dr - 0.5).long()
    valid = valid & (nc - hw_r < w) & (nc + hw_r >= 0)

    idx_all = torch.nonzero(valid).squeeze(1)
    if len(idx_all) == 0:
        return torch.stack(channels).view(len(modes), h_fine, w)
    order = torch.argsort((2 * hw_t[idx_all] + 1) * (2 * hw_r[idx_all] + 1),
                          stable=True)
    idx_all = idx_all[order]

    for start in range(0, len(idx_all), chunk):
        sel = idx_all[start:start + chunk]
        kt = int(hw_t[sel].max())
        kr = int(hw_r[sel].max())
        off_t = torch.arange(-kt, kt + 1)
        off_r = torch.arange(-kr, kr + 1)
        rows = (jc[sel][:, None] + off_t[None, :]) % h_fine        # (n, Kt)
        cols = nc[sel][:, None] + off_r[None, :]                   # (n, Kr)
        col_ok = (cols >= 0) & (cols < w)
        cols_safe = cols.clamp(0, w - 1)
        ang = (jc[sel][:, None] + off_t[None, :] + 0.5).to(DTYPE) * dtheta_f
        d_t = ang - theta[sel][:, None]                            # (n, Kt)
        r_n = (cols_safe.to(DTYPE) + 0.5) * dr
        d_r = r_n - r[sel][:, None]                                # (n, Kr)

        c2 = cov2d[sel]
        a, b, c = c2[:, 0, 0], c2[:, 0, 1], c2[:, 1, 1]
        det = a * c - b * b
        quad = (c[:, None, None] * d_t[:, :, None] ** 2
                - 2.0 * b[:, None, None] * d_t[:, :, None] * d_r[:, None, :]
                + a[:, None, None] * d_r[:, None, :] ** 2) / det[:, None, None]
        dens = torch.exp(-0.5 * quad) / (2.0 * math.pi * torch.sqrt(det))[:, None, None]
        geom = (pref[sel][:, None, None] * dens / r_n[:, None, :] ** 5) * col_ok[:, None, :]
        flat = (rows[:, :, None] * w + cols_safe[:, None, :]).reshape(-1)
        for ci in range(len(modes)):
            src = (weights[ci, sel][:, None, None] * geom).reshape(-1)
            channels[ci] = channels[ci].index_add(0, flat, src)
    return torch.stack(channels).view(len(modes), h_fine, w)


def azimuth_kernel(cfg: RadarConfig, gains: AntennaGains,
                   q_upsample: int) -> torch.Tensor:
    """Unit-sum 2Q-tap beam kernel sampled symmetrically across the spread."""
    offsets = (torch.arange(2 * q_upsample, dtype=DTYPE)
               - q_upsample + 0.5) * (cfg.azimuth_step_rad / q_upsample)
    k = torch.as_tensor(gains.azimuth(offsets), dtype=DTYPE)
    return k / k.sum()


def project_azimuth(i_elev: torch.Tensor, cfg: RadarConfig,
                    gains: AntennaGains | None = None,
                    q_upsample: int = DEFAULT_Q) -> torch.Tensor:
    """Strided 1D convolution along azimuth with circular padding.

    (C, H*Q, W) -> (C, H, W); beam h integrates fine rows hQ-Q .. hQ+Q-1.
    """
    if gains is None:
        gains = AntennaGains.from_config(cfg)
    squeeze = i_elev.dim() == 2
    if squeeze:
        i_elev = i_elev[None]
    c, hq, w = i_elev.shape
    if hq % q_upsample != 0:
        raise DimensionMismatch(f"fine height {hq} not divisible by Q={q_upsample}")
    kernel = azimuth_kernel(cfg, gains, q_upsample)
    padded = torch.cat([i_elev[:, -q_upsample:, :], i_elev], dim=1)
    x = padded.permute(0, 2, 1).reshape(c * w, 1, hq + q_upsample)
    out = torch.nn.functional.conv1d(x, kernel.view(1, 1, -1), stride=q_upsample)
    out = out.reshape(c, w, hq // q_upsample).permute(0, 2, 1)
    return out[0] if squeeze else out


def _pad_symmetric(x: torch.Tensor, radius: int) -> torch.Tensor:
    left = x[..., :radius].flip(-1)
    right = x[..., -radius:].flip(-1)
    return torch.cat([left, x, right], dim=-1)


def apply_leakage(i_azi: torch.Tensor, cfg: RadarConfig) -> torch.Tensor:
    """Per-beam Gaussian blur along range with edge-repeating padding."""
    kernel = torch.as_tensor(
        gaussian_kernel(leakage_sigma(cfg) / cfg.range_resolution), dtype=DTYPE)
    radius = (len(kernel) - 1) // 2
    squeeze = i_azi.dim() == 2
    if squeeze:
        i_azi = i_azi[None]
    c, h, w = i_azi.shape
    x = _pad_symmetric(i_azi.reshape(c * h, 1, w), radius)
    out = torch.nn.functional.conv1d(x, kernel.flip(0).view(1, 1, -1))
    out = out.reshape(c, h, w)
    return out[0] if squeeze else out


def render_tensor(scene: GaussianScene, pose: Pose, cfg: RadarConfig,
                  modes: tuple[RenderMode, ...] = (RenderMode.SIGMA,),
                  gains: AntennaGains | None = None,
                  q_upsample: int = DEFAULT_Q,
                  truncation: float = DEFAULT_TRUNCATION) -> torch.Tensor:
    """Full differentiable pipeline; returns (len(modes), H, W), unclamped."""
    if gains is None:
        gains = AntennaGains.from_config(cfg)
    i_elev = project_elevation(scene, pose, cfg, gains, q_upsample, modes,
                               truncation)
    i_azi = project_azimuth(i_elev, cfg, gains, q_upsample)
    return apply_leakage(i_azi, cfg)


def render(scene: GaussianScene, pose: Pose, cfg: RadarConfig,
           mode: RenderMode = RenderMode.SIGMA,
           gains: AntennaGains | None = None, q_upsample: int = DEFAULT_Q,
           truncation: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Single-mode convenience wrapper returning a numpy image."""
    with torch.no_grad():
        out = render_tensor(scene, pose, cfg, (mode,), gains, q_upsample,
                            truncation)
    return out[0].numpy()


def compose_final(i_sigma: np.ndarray, i_multipath: np.ndarray) -> np.ndarray:
    """Final synthesis: clamp(I_sigma + I_multipath, 0, 1)."""
    a = np.asarray(i_sigma, dtype=float)
    b = np.asarray(i_multipath, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    return np.clip(a + b, 0.0, 1.0)
