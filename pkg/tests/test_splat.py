import math

import numpy as np
import pytest
import torch

from radarscene import (AntennaGains, Gaussian, GaussianScene, Pose,
                        RadarConfig, RenderMode, compose_final,
                        power_return_ratio, project_azimuth,
                        project_elevation, reflectivity, render,
                        render_tensor, scene_init)
from radarscene.core import DimensionMismatch, quat_from_yaw
from radarscene.spectral import leakage_sigma
from radarscene.splat import apply_leakage

from conftest import random_scene


def iso_gaussian(mean, scale=0.5, alpha=1.0, eta=0.0, rho=1.0):
    sh = np.zeros(21)
    sh[0] = rho
    return Gaussian(mean=mean, quat=[1, 0, 0, 0], scale=[scale] * 3,
                    alpha=alpha, eta=eta, sh=sh)


class TestReflectivity:
    def test_isotropic(self):
        g = iso_gaussian([5, 0, 0], rho=0.5)
        for theta in np.linspace(-np.pi, np.pi, 9):
            assert reflectivity(g, theta) == pytest.approx(0.5)

    def test_zero_coefficients(self):
        g = Gaussian([5, 0, 0], [1, 0, 0, 0], [0.5] * 3, 1.0, 0.0, np.zeros(21))
        assert reflectivity(g, 1.0) == 0.0

    def test_clamp_floor(self):
        sh = np.zeros(21)
        sh[1] = 1.0   # a_1 cos(theta) = -1 at theta = pi
        g = Gaussian([5, 0, 0], [1, 0, 0, 0], [0.5] * 3, 1.0, 0.0, sh)
        assert reflectivity(g, np.pi) == 0.0

    def test_clamp_ceiling(self):
        sh = np.zeros(21)
        sh[0] = 1.3
        g = Gaussian([5, 0, 0], [1, 0, 0, 0], [0.5] * 3, 1.0, 0.0, sh)
        assert reflectivity(g, 0.3) == 1.0


class TestPowerReturnRatio:
    def test_plain_product(self):
        g = iso_gaussian([5, 0, 0], alpha=1.0, eta=0.0, rho=0.7)
        assert power_return_ratio(g, 0.0) == pytest.approx(0.7)

    def test_sum_clamped(self):
        g = iso_gaussian([5, 0, 0], alpha=0.6, eta=0.6, rho=1.0)
        assert power_return_ratio(g, 0.0) == pytest.approx(1.0)

    def test_zero_probabilities(self):
        g = iso_gaussian([5, 0, 0], alpha=0.0, eta=0.0, rho=0.9)
        assert power_return_ratio(g, 0.0) == 0.0


def integration_oracle_peak(mean, scale, cfg, q_upsample, transmit_scale,
                            weight):
    """Dense per-pixel quadrature of the 3D Gaussian mass in polar space.

    Independent of the renderer's Jacobian linearization: integrates the
    exact isotropic Gaussian density over each candidate (theta, r) pixel
    and the full elevation extent using the spherical volume element, then
    converts pixel mass to BEV-area density. Follows the renderer's
    per-Gaussian elevation-gain convention.
    """
    gains = AntennaGains.from_config(cfg)
    r_c = float(np.linalg.norm(mean))
    dtheta_f = cfg.azimuth_step_rad / q_upsample
    dr = cfg.range_resolution
    theta_c = float(np.arctan2(mean[1], mean[0]))
    phi_c = float(np.arcsin(mean[2] / r_c))
    gain2 = float(np.asarray(gains.elevation(np.array([phi_c])))[0]) ** 2

    # candidate pixels around the projected center (1/R^5 pulls the peak in)
    row_c = int(np.floor((theta_c % (2 * np.pi)) / dtheta_f))
    col_c = int(np.floor(r_c / dr))
    sigma_phi = scale / r_c
    phi_grid = phi_c + np.linspace(-6 * sigma_phi, 6 * sigma_phi, 801)
    dphi = phi_grid[1] - phi_grid[0]
    best = 0.0
    norm = (2 * np.pi * scale ** 2) ** 1.5
    for col in range(max(0, col_c - 10), min(cfg.n_range, col_c + 4)):
        for row in (row_c - 1, row_c, row_c + 1):
            r_grid = (col + (np.arange(7) + 0.5) / 7) * dr
            t_grid = (row + (np.arange(7) + 0.5) / 7) * dtheta_f
            rr, tt, pp = np.meshgrid(r_grid, t_grid, phi_grid, indexing="ij")
            x = rr * np.cos(pp) * np.cos(tt)
            y = rr * np.cos(pp) * np.sin(tt)
            z = rr * np.sin(pp)
            d2 = (x - mean[0]) ** 2 + (y - mean[1]) ** 2 + (z - mean[2]) ** 2
            dens = np.exp(-0.5 * d2 / scale ** 2) / norm
            vol = rr ** 2 * np.cos(pp) * (dr / 7) * (dtheta_f / 7) * dphi
            mass = float(np.sum(dens * vol))
            r_n = (col + 0.5) * dr
            value = (transmit_scale * gain2 * weight * mass
                     / (dtheta_f * dr * r_n ** 5))
            best = max(best, value)
    return best


class TestProjectElevation:
    def test_zero_weights_zero_image(self, desk_cfg):
        scene = random_scene(5, 1, 2.0, 8.0)
        scene.sh.zero_()   # rho = 0 everywhere -> sigma = 0
        img = project_elevation(scene, Pose.identity(), desk_cfg, q_upsample=4)
        assert not img.abs().any()

    def test_peak_matches_integration_oracle(self, default_cfg):
        # scale 0.3 keeps the first-order spherical linearization inside the
        # oracle tolerance; the error grows as (scale / range)^2
        cfg = default_cfg
        scene = GaussianScene.from_gaussians(
            [iso_gaussian([10.0, 0.0, 0.0], scale=0.3)], transmit_scale=1.0)
        img = project_elevation(scene, Pose.identity(), cfg, q_upsample=10)
        peak = float(img.max())
        expected = integration_oracle_peak(np.array([10.0, 0.0, 0.0]), 0.3,
                                           cfg, 10, 1.0, 1.0)
        assert peak == pytest.approx(expected, rel=0.01)

    def test_inverse_fourth_power_falloff(self, default_cfg):
        cfg = default_cfg
        peaks = []
        for r in (10.0, 20.0):
            scene = GaussianScene.from_gaussians(
                [iso_gaussian([r, 0.0, 0.0], scale=0.25)], transmit_scale=1.0)
            peaks.append(float(project_elevation(scene, Pose.identity(), cfg,
                                                 q_upsample=10).max()))
        assert peaks[0] / peaks[1] == pytest.approx(16.0, rel=0.01)

    def test_linear_in_weights(self, desk_cfg):
        base = random_scene(4, 2, 2.0, 8.0)
        base.sh[:, 0] = 0.3
        base.sh[:, 1:] *= 0.1   # pre-clamp rho stays far from both clamps
        doubled = base.detach_clone()
        doubled.sh *= 2.0   # doubles pre-clamp rho, hence every sigma
        i1 = project_elevation(base, Pose.identity(), desk_cfg, q_upsample=4)
        i2 = project_elevation(doubled, Pose.identity(), desk_cfg, q_upsample=4)
        torch.testing.assert_close(i2, 2.0 * i1, rtol=1e-9, atol=1e-18)

    def test_gaussians_inside_min_range_skipped(self, desk_cfg):
        scene = GaussianScene.from_gaussians(
            [iso_gaussian([0.5, 0.0, 0.0], scale=0.1)])
        img = project_elevation(scene, Pose.identity(), desk_cfg, q_upsample=4)
        assert not img.abs().any()


class TestProjectAzimuth:
    def test_constant_preserved(self, desk_cfg):
        q = 4
        img = torch.full((desk_cfg.n_azimuth * q, desk_cfg.n_range), 0.37,
                         dtype=torch.float64)
        out = project_azimuth(img, desk_cfg, q_upsample=q)
        torch.testing.assert_close(out, torch.full_like(out, 0.37))

    def test_impulse_spans_two_rows(self, desk_cfg):
        q = 5
        img = torch.zeros((desk_cfg.n_azimuth * q, desk_cfg.n_range),
                          dtype=torch.float64)
        img[52, 10] = 1.0
        out = project_azimuth(img, desk_cfg, q_upsample=q)
        lit = torch.nonzero(out[:, 10]).flatten().tolist()
        assert lit == [10, 11]   # fine row 52 sits in windows of beams 10, 11

    def test_shape_contract(self, default_cfg):
        q = 10
        img = torch.zeros((default_cfg.n_azimuth * q, default_cfg.n_range),
                          dtype=torch.float64)
        out = project_azimuth(img, default_cfg, q_upsample=q)
        assert out.shape == (400, 839)

    def test_indivisible_height_rejected(self, desk_cfg):
        img = torch.zeros((desk_cfg.n_azimuth * 4 + 1, desk_cfg.n_range),
                          dtype=torch.float64)
        with pytest.raises(DimensionMismatch):
            project_azimuth(img, desk_cfg, q_upsample=4)


class TestApplyLeakage:
    def test_zero_image(self, desk_cfg):
        img = torch.zeros((desk_cfg.n_azimuth, desk_cfg.n_range),
                          dtype=torch.float64)
        assert not apply_leakage(img, desk_cfg).abs().any()

    def test_impulse_spread_width(self, desk_cfg):
        img = torch.zeros((desk_cfg.n_azimuth, desk_cfg.n_range),
                          dtype=torch.float64)
        img[3, 80] = 1.0
        out = apply_leakage(img, desk_cfg)[3].numpy()
        i = np.arange(len(out))
        mu = np.sum(out * i) / out.sum()
        std = np.sqrt(np.sum(out * (i - mu) ** 2) / out.sum())
        target = leakage_sigma(desk_cfg) / desk_cfg.range_resolution
        assert std == pytest.approx(target, rel=0.02)
        assert std == pytest.approx(2.85, abs=0.15)

    def test_row_sums_preserved(self, desk_cfg, rng):
        img = torch.as_tensor(rng.uniform(0, 1, (desk_cfg.n_azimuth,
                                                 desk_cfg.n_range)))
        out = apply_leakage(img, desk_cfg)
        torch.testing.assert_close(out.sum(dim=1), img.sum(dim=1),
                                   rtol=1e-6, atol=0)


class TestRender:
    def test_alpha_mode_ignores_rho_eta(self, desk_cfg):
        scene = random_scene(4, 3, 2.0, 8.0)
        scene.alpha_logit.fill_(-30.0)   # alpha ~ 1e-13
        ref = random_scene(4, 3, 2.0, 8.0)
        ref.alpha_logit.fill_(0.0)
        peak = render(ref, Pose.identity(), desk_cfg, RenderMode.ALPHA,
                      q_upsample=4).max()
        img = render(scene, Pose.identity(), desk_cfg, RenderMode.ALPHA,
                     q_upsample=4)
        assert img.max() <= 1e-10 * peak

    def test_decomposition_identity(self, desk_cfg):
        # alpha + eta <= 1 for every Gaussian: sigma = rho alpha + rho eta
        scene = random_scene(6, 4, 2.0, 8.0)
        out = render_tensor(scene, Pose.identity(), desk_cfg,
                            (RenderMode.SIGMA, RenderMode.RHO_ALPHA,
                             RenderMode.RHO_ETA), q_upsample=4).numpy()
        np.testing.assert_allclose(out[1] + out[2], out[0], atol=1e-9)

    def test_sigma_equals_rho_alpha_when_eta_zero(self, desk_cfg):
        scene = random_scene(5, 5, 2.0, 8.0)
        scene.eta_logit.fill_(-40.0)   # eta ~ 4e-18
        out = render_tensor(scene, Pose.identity(), desk_cfg,
                            (RenderMode.SIGMA, RenderMode.RHO_ALPHA),
                            q_upsample=4).numpy()
        np.testing.assert_allclose(out[0], out[1], atol=1e-12)

    def test_full_render_linear_in_sigma(self, desk_cfg):
        base = random_scene(5, 6, 2.0, 8.0)
        scaled = base.detach_clone()
        scaled.log_transmit += math.log(3.0)
        i1 = render(base, Pose.identity(), desk_cfg, q_upsample=4)
        i2 = render(scaled, Pose.identity(), desk_cfg, q_upsample=4)
        np.testing.assert_allclose(i2, 3.0 * i1, rtol=1e-9, atol=1e-18)

    def test_rotation_equivariance(self, desk_cfg):
        from radarscene.core import quat_mul
        cfg = desk_cfg
        scene = random_scene(6, 7, 2.0, 8.0)
        scene.sh[:, 1:] = 0.0   # view-dependent reflectivity breaks symmetry
        base = render(scene, Pose.identity(), cfg, q_upsample=4)
        k = 5
        ang = k * cfg.azimuth_step_rad
        rot = np.array([[np.cos(ang), -np.sin(ang), 0],
                        [np.sin(ang), np.cos(ang), 0],
                        [0, 0, 1]])
        q_rot = quat_from_yaw(ang)
        rotated = scene.detach_clone()
        rotated.means = torch.as_tensor(
            scene.means.numpy() @ rot.T, dtype=torch.float64)
        rotated.quats = torch.as_tensor(
            np.stack([quat_mul(q_rot, q) for q in scene.quats.numpy()]),
            dtype=torch.float64)
        turned = render(rotated, Pose.identity(), cfg, q_upsample=4)
        np.testing.assert_allclose(turned, np.roll(base, k, axis=0), atol=1e-3)

    def test_pose_rotation_shifts_rows(self, desk_cfg):
        scene = random_scene(6, 8, 2.0, 8.0)
        base = render(scene, Pose.identity(), desk_cfg, q_upsample=4)
        pose = Pose(np.zeros(3), quat_from_yaw(desk_cfg.azimuth_step_rad))
        turned = render(scene, pose, desk_cfg, q_upsample=4)
        np.testing.assert_allclose(turned, np.roll(base, -1, axis=0), atol=1e-3)


class TestComposeFinal:
    def test_zero_ghost_identity(self, rng):
        img = rng.uniform(0, 0.8, (8, 16))
        np.testing.assert_array_equal(compose_final(img, np.zeros_like(img)), img)

    def test_clamps_sum(self):
        a = np.full((4, 4), 0.6)
        np.testing.assert_array_equal(compose_final(a, a), np.ones((4, 4)))

    def test_monotone(self, rng):
        a = rng.uniform(0, 1, (8, 8))
        b = rng.uniform(0, 1, (8, 8))
        assert np.all(compose_final(a + 0.1, b) >= compose_final(a, b))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            compose_final(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSceneInit:
    def test_deterministic(self):
        poses = [Pose.identity()]
        a = scene_init(1, poses, 1.0, 10.0, seed=11)
        b = scene_init(1, poses, 1.0, 10.0, seed=11)
        torch.testing.assert_close(a.means, b.means)

    def test_defaults(self):
        poses = [Pose.identity()]
        scene = scene_init(20000, poses, 2.5, 50.0)
        assert len(scene) == 20000
        torch.testing.assert_close(scene.scales,
                                   torch.full_like(scene.scales, 0.5))
        torch.testing.assert_close(scene.alpha,
                                   torch.full_like(scene.alpha, 0.1))
        torch.testing.assert_close(scene.eta, torch.full_like(scene.eta, 0.1))
        assert scene.sh_degree == 10

    def test_means_within_bounds(self):
        poses = [Pose(np.array([3.0, 1.0, 0.0]), np.array([1.0, 0, 0, 0])),
                 Pose(np.array([-2.0, 4.0, 0.0]), np.array([1.0, 0, 0, 0]))]
        scene = scene_init(500, poses, 1.0, 50.0, seed=3)
        means = scene.means.numpy()
        centers = np.stack([p.translation for p in poses])
        d = np.linalg.norm(means[:, None, :2] - centers[None, :, :2], axis=-1)
        assert np.all(d.min(axis=1) <= 50.0)


class TestSceneSerialization:
    def test_round_trip(self, tmp_path):
        scene = random_scene(7, 9, 2.0, 8.0)
        scene.save(tmp_path / "scene.json")
        back = GaussianScene.load(tmp_path / "scene.json")
        torch.testing.assert_close(back.means, scene.means)
        torch.testing.assert_close(back.sh, scene.sh)
        np.testing.assert_allclose(float(back.transmit_scale),
                                   float(scene.transmit_scale), rtol=1e-12)

    def test_format_tag_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else", "gaussians": []}')
        with pytest.raises(ValueError):
            GaussianScene.load(path)
