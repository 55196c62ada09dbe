import numpy as np
import pytest

from radarscene import Gaussian, GaussianScene, RadarConfig


def random_scene(n: int, seed: int, r_lo: float, r_hi: float,
                 transmit_scale: float = 30.0, scale_hi: float = 0.3,
                 s_max: float = 1.0) -> GaussianScene:
    """Random well-conditioned scene: off-pole means, pre-clamp rho inside
    (0, 1), alpha + eta away from the regularizer hinge."""
    r = np.random.default_rng(seed)
    gaussians = []
    for _ in range(n):
        theta = r.uniform(0, 2 * np.pi)
        rad = r.uniform(r_lo, r_hi)
        sh = np.zeros(21)
        sh[0] = r.uniform(0.3, 0.7)
        sh[1:] = r.normal(0.0, 0.02, 20)
        gaussians.append(Gaussian(
            mean=[rad * np.cos(theta), rad * np.sin(theta), r.uniform(-0.2, 0.2)],
            quat=r.normal(0, 1, 4),
            scale=r.uniform(0.08, scale_hi, 3),
            alpha=r.uniform(0.1, 0.4),
            eta=r.uniform(0.1, 0.4),
            sh=sh))
    return GaussianScene.from_gaussians(gaussians, transmit_scale, s_max)


@pytest.fixture(scope="session")
def default_cfg() -> RadarConfig:
    return RadarConfig()


@pytest.fixture(scope="session")
def desk_cfg() -> RadarConfig:
    """Desk-scale sensor: 120 x 168 image out to ~10 m, same chirp."""
    return RadarConfig(n_azimuth=120, n_range=168, range_resolution=0.0596,
                       max_range=10.0, min_valid_range=1.0,
                       azimuth_resolution=3.0, beam_spread=6.0)


@pytest.fixture(scope="session")
def tiny_cfg() -> RadarConfig:
    """32 x 64 image for gradient checks."""
    return RadarConfig(n_azimuth=32, n_range=64, range_resolution=0.0596,
                       max_range=64 * 0.0596, min_valid_range=1.0,
                       azimuth_resolution=11.25, beam_spread=22.5)


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20240901)
