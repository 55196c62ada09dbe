"""Multipath source map construction and novel-view ghost rendering."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Pose, RadarConfig, RadarFrame, bin_to_range, range_to_bin
from .noise import NoiseReport, denoise_frame
from .spectral import range_fft

log = logging.getLogger(__name__)

DEFAULT_RANGE_GATE = 0.5        # meters
DEFAULT_ANGLE_GATE_DEG = 10.0
DEFAULT_MERGE_RADIUS = 0.5      # meters
DEFAULT_MERGE_ANGLE_DEG = 5.0


class ZeroFrequency(ValueError):
    """k_m = 0 has no associated period."""


class DegenerateFit(ValueError):
    """Too few envelope peaks to fit the attenuation model."""


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((a + np.pi) % (2.0 * np.pi) - np.pi)


@dataclass(frozen=True)
class MultipathSource:
    """One ghost-pattern source: where it lives and how it rings.

    ``a_m``/``gamma_m`` scale and attenuate the captured spectral component
    (``k_m``, ``magnitude``, ``phase``) when re-rendering from nearby views.
    """

    position: np.ndarray   # world, meters
    theta_view: float      # world azimuth of the source seen from capture pose
    r_view: float          # capture range to the source, meters
    a_m: float
    gamma_m: float
    k_m: int
    magnitude: float
    phase: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float).reshape(3))
        if self.a_m < 0 or self.gamma_m < 0 or self.r_view <= 0:
            raise ValueError("need a_m >= 0, gamma_m >= 0, r_view > 0")

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "theta_view": self.theta_view,
                "r_view": self.r_view, "a_m": self.a_m, "gamma_m": self.gamma_m,
                "k_m": self.k_m, "mag": self.magnitude, "phase": self.phase}

    @classmethod
    def from_dict(cls, d: dict) -> "MultipathSource":
        return cls(np.array(d["position"]), d["theta_view"], d["r_view"],
                   d["a_m"], d["gamma_m"], d["k_m"], d["mag"], d["phase"])


@dataclass(frozen=True)
class MultipathSourceMap:
    sources: tuple[MultipathSource, ...] = ()

    def __len__(self) -> int:
        return len(self.sources)

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.sources], indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MultipathSourceMap":
        return cls(tuple(MultipathSource.from_dict(d) for d in json.loads(text)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "MultipathSourceMap":
        return cls.from_json(Path(path).read_text())


def source_distance(k_m: int, cfg: RadarConfig) -> float:
    """Ghost-pattern period in meters: d_m = 1 / f_m with f_m = k_m / (N dr)."""
    if k_m == 0:
        raise ZeroFrequency("DC component has no period")
    return cfg.n_range * cfg.range_resolution / k_m


def distance_to_peak_index(d: float, cfg: RadarConfig) -> int:
    """Inverse of source_distance, rounded to the nearest usable index."""
    k = int(round(cfg.n_range * cfg.range_resolution / d))
    return int(np.clip(k, 1, cfg.n_range // 2))


def reconstruct_component(k_m: int, magnitude: float, phase: float,
                          n: int) -> np.ndarray:
    """Single-component inverse DFT: (1/N)|X| cos(2 pi k n / N + phase)."""
    if not 0 < k_m < n:
        raise ValueError(f"need 0 < k_m < {n}")
    idx = np.arange(n, dtype=float)
    return magnitude / n * np.cos(2.0 * np.pi * k_m * idx / n + phase)


def _crest_ratios(raw: np.ndarray, component: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """raw/component ratios at the analytic crest positions of the component.

    The crest nearest the strongest raw return is dropped: that bin holds
    the real target, whose power does not follow the ghost envelope.
    """
    spec = range_fft(component)
    n = len(component)
    half = n // 2
    k = 1 + int(np.argmax(spec.magnitudes[1:half + 1]))
    phase = spec.phases[k]
    # cos(2 pi k n / N + phase) = 1 at n = (m - phase / 2pi) N / k
    m = np.arange(-1, k + 2)
    crest_n = np.round((m - phase / (2.0 * np.pi)) * n / k).astype(int)
    crest_n = np.unique(crest_n[(crest_n >= 0) & (crest_n < n)])
    keep = np.abs(component[crest_n]) > 1e-12 * np.abs(component).max()
    crest_n = crest_n[keep]
    exclusion = max(3, n // 50)
    crest_n = crest_n[np.abs(crest_n - int(np.argmax(raw))) > exclusion]
    return crest_n.astype(float), raw[crest_n] / component[crest_n]


def fit_attenuation(raw: np.ndarray, component: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of raw[n] ~ A exp(-gamma n) component[n].

    The envelope objective is evaluated at the component's crest bins,
    where ghost returns are unambiguous (a full-beam objective is biased
    by the unmodeled main return and by troughs that real power images
    clamp at zero). A log-linear fit on the crest ratios seeds (A, gamma)
    and one Gauss-Newton step on the crest residuals refines them; both
    come back clamped nonnegative. Raises DegenerateFit with fewer than
    two usable crests; an all-zero target returns (0, 0).
    """
    raw = np.asarray(raw, dtype=float)
    component = np.asarray(component, dtype=float)
    if raw.shape != component.shape:
        raise ValueError("raw and component must have the same length")
    if np.max(np.abs(raw)) == 0.0:
        return 0.0, 0.0
    crest_n, ratios = _crest_ratios(raw, component)
    pos = ratios > 0
    if np.count_nonzero(pos) < 2:
        raise DegenerateFit("fewer than two positive envelope crests")
    crest_n, ratios = crest_n[pos], ratios[pos]
    slope, intercept = np.polyfit(crest_n, np.log(ratios), 1)
    a = float(np.exp(intercept))
    gamma = float(max(0.0, -slope))

    # One Gauss-Newton step on the crest residuals (linear-domain weights).
    crest_i = crest_n.astype(int)
    y = raw[crest_i]
    c = component[crest_i]
    decay = np.exp(-gamma * crest_n)
    resid = y - a * decay * c
    j_a = decay * c
    j_g = -a * crest_n * decay * c
    jtj = np.array([[j_a @ j_a, j_a @ j_g], [j_a @ j_g, j_g @ j_g]])
    rhs = np.array([j_a @ resid, j_g @ resid])
    try:
        step = np.linalg.solve(jtj, rhs)
        a = max(0.0, a + float(step[0]))
        gamma = max(0.0, gamma + float(step[1]))
    except np.linalg.LinAlgError:
        pass
    return a, gamma


def _merge_key_match(entry: dict, position: np.ndarray, theta_view: float,
                     radius: float, angle_rad: float) -> bool:
    return (np.linalg.norm(entry["position"] - position) < radius
            and abs(wrap_angle(entry["theta_view"] - theta_view)) < angle_rad)


def build_source_map(frames: list[RadarFrame], reports: list[NoiseReport],
                     merge_radius: float = DEFAULT_MERGE_RADIUS,
                     merge_angle_deg: float = DEFAULT_MERGE_ANGLE_DEG,
                     sigma_bins: float = 5.0) -> MultipathSourceMap:
    """One source per multipath detection, anchored at the strongest denoised
    return of the flagged beam and deduplicated across frames by averaging."""
    if len(frames) != len(reports):
        raise ValueError("frames and reports must pair up")
    angle_rad = np.deg2rad(merge_angle_deg)
    entries: list[dict] = []
    skipped = 0
    for frame, report in zip(frames, reports):
        if not report.multipath:
            continue
        cfg = frame.config
        denoised = denoise_frame(frame, report, sigma_bins)
        for det in report.multipath:
            beam = denoised.power[det.azimuth]
            if beam.max() <= 0.0:
                skipped += 1
                continue
            n_star = int(np.argmax(beam))
            r_star = bin_to_range(n_star, cfg)
            theta_b = det.azimuth * cfg.azimuth_step_rad
            sensor_pt = np.array([r_star * np.cos(theta_b),
                                  r_star * np.sin(theta_b), 0.0])
            position = frame.pose.apply(sensor_pt)
            delta = position - frame.pose.translation
            theta_view = float(np.arctan2(delta[1], delta[0]))
            component = reconstruct_component(det.k_m, det.magnitude,
                                              det.phase, cfg.n_range)
            try:
                a_m, gamma_m = fit_attenuation(frame.power[det.azimuth], component)
            except DegenerateFit:
                skipped += 1
                continue
            merged = False
            for entry in entries:
                if _merge_key_match(entry, position, theta_view,
                                    merge_radius, angle_rad):
                    c = entry["count"]
                    entry["position"] = (entry["position"] * c + position) / (c + 1)
                    entry["theta_view"] = wrap_angle(
                        entry["theta_view"]
                        + wrap_angle(theta_view - entry["theta_view"]) / (c + 1))
                    for key, val in (("r_view", r_star), ("a_m", a_m),
                                     ("gamma_m", gamma_m), ("mag", det.magnitude)):
                        entry[key] = (entry[key] * c + val) / (c + 1)
                    entry["count"] = c + 1
                    merged = True
                    break
            if not merged:
                entries.append({"position": position, "theta_view": theta_view,
                                "r_view": r_star, "a_m": a_m, "gamma_m": gamma_m,
                                "k_m": det.k_m, "mag": det.magnitude,
                                "phase": det.phase, "count": 1})
    if skipped:
        log.warning("build_source_map: skipped %d detections with degenerate fits",
                    skipped)
    sources = tuple(MultipathSource(e["position"], e["theta_view"], e["r_view"],
                                    e["a_m"], e["gamma_m"], e["k_m"], e["mag"],
                                    e["phase"])
                    for e in entries)
    return MultipathSourceMap(sources)


def render_multipath(source_map: MultipathSourceMap, pose: Pose, cfg: RadarConfig,
                     r_th: float = DEFAULT_RANGE_GATE,
                     theta_th_deg: float = DEFAULT_ANGLE_GATE_DEG,
                     clamp: bool = True) -> np.ndarray:
    """Ghost image at ``pose``: sources passing the view gate ring on the beam
    that points at them, with the period recomputed from the new range.

    Contributions start at the source range bin and sum per beam; the result
    is clamped to [0, 1] unless ``clamp`` is False.
    """
    if r_th <= 0 or theta_th_deg <= 0:
        raise ValueError("gates must be > 0")
    theta_th = np.deg2rad(theta_th_deg)
    image = np.zeros((cfg.n_azimuth, cfg.n_range))
    n_idx = np.arange(cfg.n_range, dtype=float)
    for src in source_map.sources:
        local = pose.apply_inverse(src.position)
        r_new = float(np.linalg.norm(local))
        if r_new <= cfg.range_resolution:
            continue
        delta = src.position - pose.translation
        theta_view_new = float(np.arctan2(delta[1], delta[0]))
        if abs(r_new - src.r_view) >= r_th:
            continue
        if abs(wrap_angle(theta_view_new - src.theta_view)) >= theta_th:
            continue
        k_new = distance_to_peak_index(r_new, cfg)
        row = int(round(np.arctan2(local[1], local[0]) / cfg.azimuth_step_rad))
        row %= cfg.n_azimuth
        n_src = int(np.clip(range_to_bin(r_new, cfg), 0, cfg.n_range - 1))
        tail = (src.a_m * np.exp(-src.gamma_m * n_idx) * src.magnitude
                / cfg.n_range
                * np.cos(2.0 * np.pi * k_new * n_idx / cfg.n_range + src.phase))
        tail[:n_src] = 0.0
        image[row] += tail
    if clamp:
        image = np.clip(image, 0.0, 1.0)
    return image
