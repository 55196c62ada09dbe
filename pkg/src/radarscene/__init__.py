"""Scanning-radar scene reconstruction toolkit.

Pipeline stages: FFT-based noise detection and decay-region denoising,
multipath source mapping with novel-view ghost rendering, windowed BEV
occupancy mapping, and a differentiable polar Gaussian-splat radar renderer
fitted by gradient descent. A built-in forward simulator closes the loop for
desk-scale validation.
"""

from .core import (DimensionMismatch, OutOfRange, PoleSingularity, Pose,
                   RadarConfig, RadarFrame, SphericalPoint, bin_to_range,
                   cart_to_spherical, load_frame, save_frame,
                   spherical_jacobian, spherical_to_cart)
from .gains import AntennaGains
from .metrics import (PointSet2D, accuracy_precision_recall, chamfer,
                      geometry_rmse, occupancy_to_points, psnr,
                      relative_chamfer)
from .multipath import (MultipathSource, MultipathSourceMap, build_source_map,
                        fit_attenuation, reconstruct_component,
                        render_multipath, source_distance)
from .noise import (DecayRegion, NoiseReport, decay_region, denoise_frame,
                    detect_noise)
from .occupancy import (OccupancyGrid, build_occupancy, grid_to_polar,
                        windowed_occupancy)
from .spectral import (BeamSpectrum, constant_ratio, gaussian_smooth,
                       leakage_kernel, peak_component, range_fft)
from .splat import (Gaussian, GaussianScene, RenderMode, compose_final,
                    power_return_ratio, project_azimuth, project_elevation,
                    reflectivity, render, render_tensor, scene_init)
from .synth import (PointScatterer, SceneSpec, WallSegment, arc_trajectory,
                    inject_multipath, inject_saturation, inject_speckle,
                    line_trajectory, simulate_frame)
from .train import (LossWeights, NonFiniteLoss, SceneOptimizer, TrainConfig,
                    grad_check, optimize, ssim, total_loss)

__version__ = "0.1.0"
