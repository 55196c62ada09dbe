"""Image- and geometry-quality metrics against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import DimensionMismatch
from .occupancy import OccupancyGrid

DEFAULT_TAU = 0.5   # meters


class EmptySet(ValueError):
    """Point-set metric on an empty set."""


class DegenerateGroundTruth(ValueError):
    """All ground-truth points coincide; the relative metric is undefined."""


@dataclass(frozen=True)
class PointSet2D:
    points: np.ndarray   # (N, 2) BEV world meters

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


def _as_points(p) -> np.ndarray:
    if isinstance(p, PointSet2D):
        return p.points
    return np.asarray(p, dtype=float).reshape(-1, 2)


def _nn_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point of ``a`` to its nearest in ``b``."""
    return cKDTree(b).query(a, k=1)[0]


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10 log10(1 / MSE) for unit-range images; +inf when identical."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    if mask is not None:
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def chamfer(p, q) -> float:
    """Mean squared nearest-neighbor distance, both directions summed."""
    p, q = _as_points(p), _as_points(q)
    if len(p) == 0 or len(q) == 0:
        raise EmptySet("chamfer distance needs nonempty sets")
    return float(np.mean(_nn_dists(p, q) ** 2) + np.mean(_nn_dists(q, p) ** 2))


def relative_chamfer(p, q) -> float:
    """Chamfer distance normalized by the squared ground-truth diameter."""
    q_arr = _as_points(q)
    if len(q_arr) < 2:
        raise EmptySet("relative chamfer needs at least 2 ground-truth points")
    # Diameter points lie on the convex hull; the pairwise scan over hull
    # vertices is exact and cheap for desk-scale sets.
    from scipy.spatial import ConvexHull, QhullError
    try:
        hull_pts = q_arr[ConvexHull(q_arr).vertices]
    except QhullError:
        hull_pts = q_arr
    diff = hull_pts[:, None, :] - hull_pts[None, :, :]
    diam2 = float(np.max(np.sum(diff ** 2, axis=-1)))
    if diam2 == 0.0:
        raise DegenerateGroundTruth("all ground-truth points coincide")
    return chamfer(p, q) / diam2


def accuracy_precision_recall(p, q, tau: float = DEFAULT_TAU) -> tuple[float, float, float]:
    """Fractions of points matched within ``tau``: combined, P->Q, Q->P."""
    p, q = _as_points(p), _as_points(q)
    if len(p) == 0 or len(q) == 0:
        raise EmptySet("need nonempty sets")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    matched_p = int(np.count_nonzero(_nn_dists(p, q) < tau))
    matched_q = int(np.count_nonzero(_nn_dists(q, p) < tau))
    accuracy = (matched_p + matched_q) / (len(p) + len(q))
    return float(accuracy), matched_p / len(p), matched_q / len(q)


def geometry_rmse(p, q) -> float:
    """Symmetric nearest-neighbor RMSE: sqrt of half the Chamfer distance.

    This repo's definition; reported geometry RMSE elsewhere may differ.
    """
    return math.sqrt(chamfer(p, q) / 2.0)


def occupancy_to_points(grid: OccupancyGrid) -> PointSet2D:
    """Centers of all occupied cells."""
    iy, ix = np.nonzero(grid.binary)
    if len(ix) == 0:
        return PointSet2D(np.zeros((0, 2)))
    return PointSet2D(grid.cell_centers(ix, iy))


def metrics_report(pred_points=None, gt_points=None, tau: float = DEFAULT_TAU,
                   psnr_value: float | None = None,
                   ssim_value: float | None = None) -> dict:
    """Bundle image and geometry metrics into the report schema."""
    report = {"psnr": psnr_value, "ssim": ssim_value, "rmse": None, "cd": None,
              "rcd": None, "accuracy": None, "precision": None, "recall": None,
              "n_points_pred": None, "n_points_gt": None}
    if pred_points is not None and gt_points is not None:
        acc, prec, rec = accuracy_precision_recall(pred_points, gt_points, tau)
        report.update({
            "rmse": geometry_rmse(pred_points, gt_points),
            "cd": chamfer(pred_points, gt_points),
            "rcd": relative_chamfer(pred_points, gt_points),
            "accuracy": acc, "precision": prec, "recall": rec,
            "n_points_pred": len(_as_points(pred_points)),
            "n_points_gt": len(_as_points(gt_points)),
        })
    return report
