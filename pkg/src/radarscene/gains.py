"""Antenna gain profiles: parametric defaults with sampled-table overrides.

All evaluators accept numpy arrays or torch tensors (gradients flow through
the torch path), so the renderer and the forward simulator share one model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

LN2 = float(np.log(2.0))


def _xp(x):
    return torch if isinstance(x, torch.Tensor) else np


def _interp(x, xs: np.ndarray, ys: np.ndarray):
    """Piecewise-linear table lookup, clamped at the table ends."""
    if isinstance(x, torch.Tensor):
        xs_t = torch.as_tensor(xs, dtype=x.dtype)
        ys_t = torch.as_tensor(ys, dtype=x.dtype)
        xc = x.clamp(float(xs[0]), float(xs[-1]))
        idx = torch.searchsorted(xs_t, xc.detach(), right=True).clamp(1, len(xs) - 1)
        x0, x1 = xs_t[idx - 1], xs_t[idx]
        y0, y1 = ys_t[idx - 1], ys_t[idx]
        t = (xc - x0) / (x1 - x0)
        return y0 + t * (y1 - y0)
    return np.interp(x, xs, ys)


@dataclass(frozen=True)
class AntennaGains:
    """One-way power gain vs angle for the azimuth and elevation axes.

    Defaults: a Gaussian azimuth lobe with half power at the -3 dB
    half-beamwidth, and the same lobe in elevation extended by a smooth
    cosecant-squared fill-in reaching ``fill_end`` below the sensor plane.
    Sampled tables (angle ascending, gain) override the parametric shapes.
    """

    azimuth_half_beamwidth: float = np.deg2rad(0.9)
    elevation_half_beamwidth: float = np.deg2rad(0.9)
    fill_end: float = np.deg2rad(40.0)
    gate_width: float = np.deg2rad(0.15)
    azimuth_table: tuple[np.ndarray, np.ndarray] | None = None
    elevation_table: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def from_config(cls, cfg) -> "AntennaGains":
        half = np.deg2rad(cfg.beam_spread / 2.0)
        return cls(azimuth_half_beamwidth=half, elevation_half_beamwidth=half)

    def azimuth(self, theta):
        """Gain at azimuth offset ``theta`` (radians) from the beam center."""
        if self.azimuth_table is not None:
            return _interp(theta, *self.azimuth_table)
        xp = _xp(theta)
        return xp.exp(-LN2 * (theta / self.azimuth_half_beamwidth) ** 2)

    def elevation(self, phi):
        """Gain at elevation ``phi`` (radians); negative is below the plane."""
        if self.elevation_table is not None:
            return _interp(phi, *self.elevation_table)
        xp = _xp(phi)
        main = xp.exp(-LN2 * (phi / self.elevation_half_beamwidth) ** 2)
        # Smoothly gated csc^2 fill-in over (-fill_end, -half_beamwidth).
        gate = (1.0 / (1.0 + xp.exp((phi + self.elevation_half_beamwidth)
                                    / self.gate_width))
                * 1.0 / (1.0 + xp.exp(-(phi + self.fill_end) / self.gate_width)))
        anchor = float(np.sin(self.elevation_half_beamwidth) ** 2)
        fill = anchor / (xp.sin(phi) ** 2 + anchor)
        return main + gate * fill
