"""Losses, SSIM, gradient-based scene fitting, and the gradient-check harness."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import DimensionMismatch, Pose, RadarConfig, RadarFrame
from .gains import AntennaGains
from .multipath import MultipathSourceMap, render_multipath
from .noise import NoiseReport
from .occupancy import OccupancyGrid, grid_to_polar
from .splat import DTYPE, GaussianScene, RenderMode, render_tensor

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


class NonFiniteLoss(RuntimeError):
    """Training loss left the finite range."""


@dataclass(frozen=True)
class LossWeights:
    l1: float = 0.8
    ssim: float = 0.2
    occ: float = 5.0
    size: float = 1e2
    reg: float = 1e2

    def __post_init__(self):
        if min(self.l1, self.ssim, self.occ, self.size, self.reg) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class TrainConfig:
    iterations: int = 3000
    lr_means: float = 1.6e-4
    lr_quats: float = 1e-3
    lr_scales: float = 5e-3
    lr_probs: float = 1e-3      # logit alpha / eta
    lr_sh: float = 1e-3
    lr_transmit: float = 1e-3
    seed: int = 0
    s_max: float = 1.0          # meters, size-regularizer knee
    compose_multipath: bool = True
    q_upsample: int = 10
    checkpoint_every: int = 0   # iterations; 0 disables
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def _gaussian_window(size: int, sigma: float) -> torch.Tensor:
    i = torch.arange(size, dtype=DTYPE) - (size - 1) / 2.0
    g = torch.exp(-0.5 * (i / sigma) ** 2)
    g = g / g.sum()
    return g[:, None] @ g[None, :]


_SSIM_KERNEL = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA).view(1, 1, SSIM_WINDOW,
                                                              SSIM_WINDOW)


def _pad2d_symmetric(x: torch.Tensor, r: int) -> torch.Tensor:
    x = torch.cat([x[..., :, :r].flip(-1), x, x[..., :, -r:].flip(-1)], dim=-1)
    return torch.cat([x[..., :r, :].flip(-2), x, x[..., -r:, :].flip(-2)], dim=-2)


def _local_mean(x: torch.Tensor) -> torch.Tensor:
    r = SSIM_WINDOW // 2
    return torch.nn.functional.conv2d(
        _pad2d_symmetric(x[None, None], r), _SSIM_KERNEL)[0, 0]


def ssim_map(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-pixel SSIM with an 11x11 Gaussian window (sigma 1.5), unit range."""
    mu1, mu2 = _local_mean(a), _local_mean(b)
    var1 = _local_mean(a * a) - mu1 * mu1
    var2 = _local_mean(b * b) - mu2 * mu2
    cov = _local_mean(a * b) - mu1 * mu2
    return (((2 * mu1 * mu2 + SSIM_C1) * (2 * cov + SSIM_C2))
            / ((mu1 * mu1 + mu2 * mu2 + SSIM_C1) * (var1 + var2 + SSIM_C2)))


def ssim(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean SSIM score over valid pixels for unit-range images."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    with torch.no_grad():
        smap = ssim_map(torch.as_tensor(a, dtype=DTYPE),
                        torch.as_tensor(b, dtype=DTYPE))
    if mask is not None:
        smap = smap[torch.as_tensor(np.array(mask, dtype=bool))]
    return float(smap.mean())


def total_loss(i_render: torch.Tensor, i_gt: torch.Tensor, i_alpha: torch.Tensor,
               i_occ_polar: torch.Tensor, scene: GaussianScene,
               weights: LossWeights = LossWeights(),
               mask: torch.Tensor | None = None) -> tuple[torch.Tensor, dict]:
    """Weighted training loss; differentiable w.r.t. every scene parameter.

    Terms: masked L1 and (1 - SSIM) against the measured image, masked L1
    between the occupancy render and the preprocessed occupancy image, a
    hinge on Gaussian sizes above s_max, and a hinge on alpha + eta above 1.
    """
    for other in (i_gt, i_alpha, i_occ_polar):
        if other.shape != i_render.shape:
            raise DimensionMismatch(f"shapes {other.shape} vs {i_render.shape}")
    if mask is None:
        mask = torch.ones_like(i_gt, dtype=torch.bool)
    l_l1 = (i_render - i_gt).abs()[mask].mean()
    l_ssim = 1.0 - ssim_map(i_render, i_gt)[mask].mean()
    l_occ = (i_alpha - i_occ_polar).abs()[mask].mean()
    l_size = torch.relu(scene.scales - scene.s_max).sum(dim=1).mean()
    l_reg = torch.relu(scene.alpha + scene.eta - 1.0).mean()
    total = (weights.l1 * l_l1 + weights.ssim * l_ssim + weights.occ * l_occ
             + weights.size * l_size + weights.reg * l_reg)
    parts = {"l1": float(l_l1.detach()), "ssim": float(l_ssim.detach()),
             "occ": float(l_occ.detach()), "size": float(l_size.detach()),
             "reg": float(l_reg.detach()), "total": float(total.detach())}
    return total, parts


class SceneOptimizer:
    """Adaptive-moment gradient descent with per-group step sizes.

    Standard first and second moment accumulators with bias correction;
    quaternions are renormalized after every effective step.
    """

    def __init__(self, scene: GaussianScene, cfg: TrainConfig,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.scene = scene
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        params = scene.parameters()
        self.groups = [
            (params["means"], cfg.lr_means, None),
            (params["quats"], cfg.lr_quats, "renorm"),
            (params["log_scales"], cfg.lr_scales, None),
            (params["alpha_logit"], cfg.lr_probs, None),
            (params["eta_logit"], cfg.lr_probs, None),
            (params["sh"], cfg.lr_sh, None),
            (params["log_transmit"], cfg.lr_transmit, None),
        ]
        self.m = [torch.zeros_like(p) for p, _, _ in self.groups]
        self.v = [torch.zeros_like(p) for p, _, _ in self.groups]

    def zero_grad(self) -> None:
        for p, _, _ in self.groups:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (p, lr, post) in enumerate(self.groups):
            if lr == 0.0 or p.grad is None:
                continue
            g = p.grad
            self.m[i].mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            self.v[i].mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            update = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            p.add_(update, alpha=-lr)
            if post == "renorm":
                p.div_(torch.linalg.norm(p, dim=-1, keepdim=True))


def valid_mask_tensor(cfg: RadarConfig) -> torch.Tensor:
    """(H, W) bool mask excluding the near-range ego region."""
    cols = torch.as_tensor(cfg.valid_range_mask(), dtype=torch.bool)
    return cols[None, :].expand(cfg.n_azimuth, cfg.n_range).clone()


def optimize(scene: GaussianScene, frames: list[RadarFrame],
             occ_grids: list[OccupancyGrid],
             reports: list[NoiseReport] | None = None,
             source_map: MultipathSourceMap | None = None,
             cfg: TrainConfig = None,
             weights: LossWeights = LossWeights(),
             gains: AntennaGains | None = None) -> tuple[GaussianScene, list[dict]]:
    """Fit the scene to the frames; returns the scene and per-step loss parts.

    Each step renders one frame (sigma and alpha channels share geometry),
    optionally composes the precomputed ghost image on multipath-flagged
    frames, and applies one optimizer update. Deterministic for a fixed seed.
    """
    if cfg is None:
        cfg = TrainConfig()
    if not frames:
        raise ValueError("need at least one training frame")
    if len(occ_grids) != len(frames):
        raise ValueError("occ_grids must pair with frames")
    if reports is not None and len(reports) != len(frames):
        raise ValueError("reports must pair with frames")
    radar_cfg = frames[0].config
    scene.s_max = float(cfg.s_max)
    mask = valid_mask_tensor(radar_cfg)
    gts, occs, ghosts = [], [], []
    for i, frame in enumerate(frames):
        gts.append(torch.as_tensor(frame.power, dtype=DTYPE))
        occs.append(torch.as_tensor(
            grid_to_polar(occ_grids[i], frame.pose, radar_cfg), dtype=DTYPE))
        ghost = None
        if (cfg.compose_multipath and source_map is not None and len(source_map)
                and reports is not None and reports[i].multipath):
            img = render_multipath(source_map, frame.pose, radar_cfg)
            if img.any():
                ghost = torch.as_tensor(img, dtype=DTYPE)
        ghosts.append(ghost)

    scene.requires_grad_(True)
    opt = SceneOptimizer(scene, cfg)
    rng = np.random.default_rng(cfg.seed)
    order = np.array([], dtype=int)
    history: list[dict] = []
    for it in range(cfg.iterations):
        if len(order) == 0:
            order = rng.permutation(len(frames))
        i, order = int(order[0]), order[1:]
        imgs = render_tensor(scene, frames[i].pose, radar_cfg,
                             (RenderMode.SIGMA, RenderMode.ALPHA), gains,
                             cfg.q_upsample)
        i_render = imgs[0]
        if ghosts[i] is not None:
            i_render = torch.clamp(i_render + ghosts[i], 0.0, 1.0)
        loss, parts = total_loss(i_render, gts[i], imgs[1], occs[i], scene,
                                 weights, mask)
        if not math.isfinite(parts["total"]):
            raise NonFiniteLoss(f"iteration {it}, frame {i}: loss parts {parts}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        parts["iteration"] = it
        parts["frame"] = i
        history.append(parts)
        if cfg.checkpoint_every and cfg.checkpoint_dir and \
                (it + 1) % cfg.checkpoint_every == 0:
            scene.save(Path(cfg.checkpoint_dir) / f"scene_{it + 1:06d}.json")
    scene.requires_grad_(False)
    return scene, history


def save_loss_history(history: list[dict], path: str | Path) -> None:
    cols = ["iteration", "total", "l1", "ssim", "occ", "size", "reg"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in history:
            writer.writerow([row.get(c, "") for c in cols])


def grad_check(scene: GaussianScene, pose: Pose, cfg: RadarConfig,
               weights: LossWeights = LossWeights(),
               gains: AntennaGains | None = None, q_upsample: int = 4,
               seed: int = 0, h_rel: float = 1e-4, atol: float = 1e-8) -> float:
    """Max relative error between autograd and central-difference gradients
    of the full loss over every scene parameter.

    The fixed targets are the scene's own renders offset by a +/-0.1
    checkerboard: every pixel then sits far from the L1 kink relative to
    the finite-difference step, so central differences see a smooth loss.
    Elements on the alpha+eta hinge are skipped (subgradient ambiguity),
    and ``atol`` absorbs the O(h^2) truncation floor of the differences
    themselves, two orders below any gradient the loss terms produce.
    """
    if len(scene) > 10:
        raise ValueError("grad_check is for scenes of at most 10 Gaussians")
    rng = np.random.default_rng(seed)
    checker = torch.as_tensor(
        np.indices((cfg.n_azimuth, cfg.n_range)).sum(axis=0) % 2, dtype=DTYPE)
    offsets = (0.2 * checker - 0.1) * torch.as_tensor(
        rng.uniform(0.5, 1.0, (cfg.n_azimuth, cfg.n_range)), dtype=DTYPE)
    with torch.no_grad():
        base = render_tensor(scene, pose, cfg,
                             (RenderMode.SIGMA, RenderMode.ALPHA), gains,
                             q_upsample)
    i_gt = base[0] + offsets
    i_occ = base[1] - offsets
    mask = valid_mask_tensor(cfg)

    def loss_of(s: GaussianScene) -> torch.Tensor:
        imgs = render_tensor(s, pose, cfg, (RenderMode.SIGMA, RenderMode.ALPHA),
                             gains, q_upsample)
        return total_loss(imgs[0], i_gt, imgs[1], i_occ, s, weights, mask)[0]

    work = scene.detach_clone().requires_grad_(True)
    loss = loss_of(work)
    params = work.parameters()
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    grads = {k: (g if g is not None else torch.zeros_like(params[k]))
             for k, g in zip(params.keys(), grads)}

    probe = scene.detach_clone()
    probe_params = probe.parameters()
    alpha_eta_sum = (probe.alpha + probe.eta).detach()
    max_err = 0.0
    with torch.no_grad():
        for name, p in probe_params.items():
            flat = p.view(-1)
            gflat = grads[name].view(-1)
            for j in range(flat.numel()):
                if name in ("alpha_logit", "eta_logit"):
                    if abs(float(alpha_eta_sum[j]) - 1.0) < 1e-3:
                        continue
                orig = float(flat[j])
                h = h_rel * max(1.0, abs(orig))
                flat[j] = orig + h
                f_plus = float(loss_of(probe))
                flat[j] = orig - h
                f_minus = float(loss_of(probe))
                flat[j] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                a = float(gflat[j])
                if abs(a - fd) <= atol:
                    continue
                err = abs(a - fd) / max(abs(a), abs(fd))
                max_err = max(max_err, err)
    return max_err
