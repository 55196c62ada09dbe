import numpy as np
import pytest

from radarscene import (OccupancyGrid, Pose, RadarConfig, RadarFrame,
                        SceneSpec, WallSegment, accuracy_precision_recall,
                        build_occupancy, grid_to_polar, occupancy_to_points,
                        simulate_frame)
from radarscene.core import range_to_bin
from radarscene.occupancy import EmptyWindow, windowed_occupancy
from radarscene.synth import line_trajectory


@pytest.fixture(scope="module")
def wall_cfg(desk_cfg):
    return RadarConfig(**{**desk_cfg.to_dict(), "transmit_scale": 8000.0})


@pytest.fixture(scope="module")
def wall_frames(wall_cfg):
    spec = SceneSpec((WallSegment([5.0, -5.0], [5.0, 5.0], 2.0),))
    poses = line_trajectory([-0.5, 0.0], [0.5, 0.0], 10)
    return spec, [simulate_frame(spec, p, wall_cfg, timestamp=float(i))
                  for i, p in enumerate(poses)]


def zero_frame(cfg, pose=None):
    return RadarFrame(cfg, pose or Pose.identity(),
                      np.zeros((cfg.n_azimuth, cfg.n_range)))


class TestBuildOccupancy:
    def test_zero_frames_zero_grid(self, desk_cfg):
        grid = build_occupancy([zero_frame(desk_cfg)])
        assert not grid.binary.any()
        assert not grid.mean_power.any()

    def test_wall_traced_accurately(self, wall_frames):
        spec, frames = wall_frames
        grid = build_occupancy(frames)
        pred = occupancy_to_points(grid)
        gt = spec.boundary_points(0.1)
        acc, _, rec = accuracy_precision_recall(pred, gt, tau=0.5)
        assert acc >= 0.95
        assert rec >= 0.95

    def test_threshold_is_strict(self, desk_cfg):
        # one isolated sample at exactly 0.14 stays below p_th = 0.15
        power = np.zeros((desk_cfg.n_azimuth, desk_cfg.n_range))
        power[0, 100] = 0.14
        grid = build_occupancy([RadarFrame(desk_cfg, Pose.identity(), power)])
        assert not grid.binary.any()
        assert grid.mean_power.max() > 0.0

    def test_binary_equals_thresholded_mean(self, wall_frames):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        np.testing.assert_array_equal(grid.binary,
                                      (grid.mean_power > 0.15).astype(np.uint8))

    def test_zero_frame_never_adds_cells(self, wall_frames, wall_cfg):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        padded = build_occupancy(frames + [zero_frame(wall_cfg, frames[0].pose)])
        ys, xs = np.nonzero(padded.binary)
        centers = padded.cell_centers(xs, ys)
        idx = grid.cell_index(centers)
        assert np.all(grid.binary[idx[:, 1], idx[:, 0]] == 1)

    def test_order_invariant(self, wall_frames):
        _, frames = wall_frames
        a = build_occupancy(frames)
        b = build_occupancy(frames[::-1])
        np.testing.assert_array_equal(a.binary, b.binary)
        np.testing.assert_allclose(a.mean_power, b.mean_power, atol=1e-12)

    def test_empty_window(self):
        with pytest.raises(EmptyWindow):
            build_occupancy([])

    def test_save_load_round_trip(self, wall_frames, tmp_path):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        grid.save(tmp_path / "g", save_mean=True)
        back = OccupancyGrid.load(tmp_path / "g")
        np.testing.assert_array_equal(back.binary, grid.binary)
        np.testing.assert_allclose(back.origin, grid.origin)
        assert back.cell_size == grid.cell_size


class TestGridToPolar:
    def test_empty_grid_zero_image(self, desk_cfg):
        grid = build_occupancy([zero_frame(desk_cfg)])
        img = grid_to_polar(grid, Pose.identity(), desk_cfg)
        assert img.shape == (desk_cfg.n_azimuth, desk_cfg.n_range)
        assert not img.any()

    def test_wall_round_trip(self, wall_frames, wall_cfg):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        img = grid_to_polar(grid, Pose.identity(), wall_cfg)
        # boresight beam crosses the wall at ~5 m
        row = img[0]
        hit_bins = np.nonzero(row)[0]
        assert len(hit_bins) > 0
        ranges = (hit_bins + 0.5) * wall_cfg.range_resolution
        assert np.min(np.abs(ranges - 5.0)) < 0.3

    def test_values_binary(self, wall_frames, wall_cfg):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        img = grid_to_polar(grid, frames[3].pose, wall_cfg)
        assert set(np.unique(img)) <= {0.0, 1.0}

    def test_pose_shift_moves_wall(self, wall_frames, wall_cfg):
        _, frames = wall_frames
        grid = build_occupancy(frames)
        at_origin = grid_to_polar(grid, Pose.identity(), wall_cfg)
        moved = grid_to_polar(grid, Pose(np.array([1.0, 0.0, 0.0]),
                                         np.array([1.0, 0, 0, 0])), wall_cfg)
        b0 = np.nonzero(at_origin[0])[0].mean()
        b1 = np.nonzero(moved[0])[0].mean()
        expected_shift = 1.0 / wall_cfg.range_resolution  # ~16.8 bins
        assert b0 - b1 == pytest.approx(expected_shift, abs=3.0)


class TestWindowedOccupancy:
    def test_one_grid_per_frame(self, wall_frames):
        _, frames = wall_frames
        grids = windowed_occupancy(frames, window=4)
        assert len(grids) == len(frames)

    def test_window_of_one_uses_single_frame(self, wall_frames, wall_cfg):
        _, frames = wall_frames
        grids = windowed_occupancy(frames, window=1)
        direct = build_occupancy([frames[0]])
        np.testing.assert_array_equal(grids[0].binary, direct.binary)
