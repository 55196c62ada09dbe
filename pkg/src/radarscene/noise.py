"""Saturation/multipath beam classification and decay-region denoising."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DimensionMismatch, RadarFrame
from .spectral import constant_ratio, gaussian_smooth, peak_component, range_fft

# Experimentally determined defaults for [0, 1]-normalized power images.
DEFAULT_C_TH = 0.21        # saturation: constant ratio threshold
DEFAULT_C_MULTI_TH = 0.2   # multipath: relaxed constant ratio threshold
DEFAULT_A_TH = 0.3         # multipath: peak magnitude threshold, see note below

# The peak magnitude is compared as |X[k_m]| / sqrt(N) (orthonormal DFT
# scaling) so the A_th threshold carries across range-bin counts; the raw
# magnitude is kept in the record because the inverse-FFT reconstruction
# needs it.


@dataclass(frozen=True)
class MultipathDetection:
    azimuth: int
    k_m: int
    magnitude: float   # raw |X[k_m]|
    phase: float

    def to_dict(self) -> dict:
        return {"azimuth": self.azimuth, "k_m": self.k_m,
                "mag": self.magnitude, "phase": self.phase}

    @classmethod
    def from_dict(cls, d: dict) -> "MultipathDetection":
        return cls(d["azimuth"], d["k_m"], d["mag"], d["phase"])


@dataclass(frozen=True)
class NoiseReport:
    """Per-frame noisy-beam classification."""

    saturated: frozenset[int] = frozenset()
    multipath: tuple[MultipathDetection, ...] = ()
    thresholds: dict = field(default_factory=dict)

    @property
    def noisy_beams(self) -> frozenset[int]:
        return self.saturated | {m.azimuth for m in self.multipath}

    def to_json(self) -> str:
        return json.dumps({
            "saturated": sorted(self.saturated),
            "multipath": [m.to_dict() for m in self.multipath],
            "thresholds": self.thresholds,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "NoiseReport":
        d = json.loads(text)
        return cls(frozenset(d["saturated"]),
                   tuple(MultipathDetection.from_dict(m) for m in d["multipath"]),
                   d.get("thresholds", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "NoiseReport":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class DecayRegion:
    n_s: int
    n_e: int

    def __post_init__(self):
        if not (0 <= self.n_s <= self.n_e):
            raise ValueError("need 0 <= n_s <= n_e")


def detect_noise(frame: RadarFrame,
                 c_th: float = DEFAULT_C_TH,
                 c_multi_th: float = DEFAULT_C_MULTI_TH,
                 a_th: float = DEFAULT_A_TH) -> NoiseReport:
    """Classify each azimuth beam as saturated and/or multipath.

    Saturated: constant ratio C > c_th. Multipath: peak non-DC magnitude
    above a_th (orthonormal scaling) and C > c_multi_th. A beam can carry
    both labels.
    """
    if min(c_th, c_multi_th, a_th) <= 0:
        raise ValueError("thresholds must be > 0")
    n = frame.config.n_range
    norm = np.sqrt(n)
    saturated = set()
    multipath = []
    for i in range(frame.config.n_azimuth):
        spec = range_fft(frame.power[i])
        c = constant_ratio(spec)
        if c > c_th:
            saturated.add(i)
        k_m, mag, phase = peak_component(spec)
        if mag / norm > a_th and c > c_multi_th:
            multipath.append(MultipathDetection(i, k_m, mag, phase))
    return NoiseReport(frozenset(saturated), tuple(multipath),
                       {"c_th": c_th, "c_multi_th": c_multi_th, "a_th": a_th})


def decay_region(beam: np.ndarray, sigma_bins: float = 5.0) -> DecayRegion:
    """Region around the smoothed power maximum, grown while values decay.

    The walk uses non-strict comparisons, so plateaus are absorbed.
    """
    x = np.asarray(beam, dtype=float)
    if len(x) < 2:
        raise ValueError("beam must have at least 2 bins")
    smooth = gaussian_smooth(x, sigma_bins)
    n_max = int(np.argmax(smooth))
    n_s = n_max
    while n_s > 0 and smooth[n_s - 1] <= smooth[n_s]:
        n_s -= 1
    n_e = n_max
    while n_e < len(smooth) - 1 and smooth[n_e + 1] <= smooth[n_e]:
        n_e += 1
    return DecayRegion(n_s, n_e)


def denoise_frame(frame: RadarFrame, report: NoiseReport,
                  sigma_bins: float = 5.0) -> RadarFrame:
    """Zero every bin outside the decay region on beams flagged in ``report``.

    The region is selected on the smoothed beam but masking applies to the
    raw data; untouched beams come back bit-identical.
    """
    power = frame.power.copy()
    for i in sorted(report.noisy_beams):
        if i < 0 or i >= frame.config.n_azimuth:
            raise DimensionMismatch(f"report beam {i} outside frame with "
                                    f"{frame.config.n_azimuth} beams")
        region = decay_region(power[i], sigma_bins)
        masked = np.zeros_like(power[i])
        masked[region.n_s:region.n_e + 1] = power[i, region.n_s:region.n_e + 1]
        power[i] = masked
    return frame.with_power(power)
