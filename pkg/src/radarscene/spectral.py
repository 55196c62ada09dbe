"""Per-beam spectral machinery: range FFT, smoothing, and the leakage kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RadarConfig

SPEED_OF_LIGHT = 299792458.0

# Guards the constant-ratio denominator for pure-DC beams.
RATIO_EPS = 1e-12


class EmptyBeam(ValueError):
    """Beam too short to transform."""


@dataclass(frozen=True)
class BeamSpectrum:
    """Magnitude/phase of the unnormalized forward DFT of one beam."""

    magnitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        if self.magnitudes.shape != self.phases.shape:
            raise ValueError("magnitudes and phases must have the same length")

    @property
    def n(self) -> int:
        return len(self.magnitudes)


def range_fft(beam: np.ndarray) -> BeamSpectrum:
    """Unnormalized forward DFT: X[k] = sum_n x[n] exp(-j 2pi k n / N)."""
    x = np.asarray(beam, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise EmptyBeam("beam must be a 1-D array with at least 2 samples")
    spec = np.fft.fft(x)
    return BeamSpectrum(np.abs(spec), np.angle(spec))


def constant_ratio(s: BeamSpectrum) -> float:
    """DC magnitude over the summed non-DC magnitudes.

    Large for beams with a uniform power offset (receiver saturation).
    """
    return float(s.magnitudes[0] / (np.sum(s.magnitudes[1:]) + RATIO_EPS))


def peak_component(s: BeamSpectrum) -> tuple[int, float, float]:
    """Strongest positive-frequency component, DC excluded.

    Returns (k_m, magnitude, phase); the search covers k in [1, N//2] and
    ties break toward the smaller index.
    """
    if s.n < 4:
        raise EmptyBeam("need at least 4 bins to search for a non-DC peak")
    half = s.n // 2
    k = 1 + int(np.argmax(s.magnitudes[1:half + 1]))
    return k, float(s.magnitudes[k]), float(s.phases[k])


def gaussian_kernel(sigma_bins: float, truncate: float = 3.0) -> np.ndarray:
    """Unit-sum Gaussian kernel truncated at +/- truncate * sigma."""
    if sigma_bins <= 0:
        raise ValueError("sigma must be > 0")
    radius = int(np.ceil(truncate * sigma_bins))
    i = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (i / sigma_bins) ** 2)
    return k / k.sum()


def gaussian_smooth(x: np.ndarray, sigma_bins: float = 5.0) -> np.ndarray:
    """Convolve with a unit-sum Gaussian, reflective (edge-repeating) padding.

    Output length equals input length and the total signal sum is preserved.
    """
    x = np.asarray(x, dtype=float)
    k = gaussian_kernel(sigma_bins)
    radius = (len(k) - 1) // 2
    padded = np.pad(x, radius, mode="symmetric")
    return np.convolve(padded, k, mode="valid")


def leakage_width(cfg: RadarConfig) -> float:
    """Range-domain width d_w of the blur caused by finite-time sampling.

    The sinc main lobe has angular width 2*pi/T_s; converting that frequency
    to distance with D = c f / (2 mu) gives d_w = pi c / (mu T_s).
    """
    f_w = 2.0 * np.pi / cfg.sampling_duration
    return SPEED_OF_LIGHT * f_w / (2.0 * cfg.chirp_slope)


def leakage_sigma(cfg: RadarConfig) -> float:
    """Std of the Gaussian blur approximation: half of d_w covered at 3 sigma."""
    return (0.5 * leakage_width(cfg)) / 3.0


def leakage_kernel(cfg: RadarConfig) -> tuple[float, np.ndarray]:
    """(sigma_w in meters, unit-sum Gaussian kernel in range bins)."""
    sigma_w = leakage_sigma(cfg)
    return sigma_w, gaussian_kernel(sigma_w / cfg.range_resolution)
