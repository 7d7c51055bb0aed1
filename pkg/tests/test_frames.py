import numpy as np
import pytest

from app.models.models import FrameSequence, PressureFrame, Roi
from app.services.frames import average_series, contact_area_percent, spatial_average, trim_transients
from app.utils.exceptions import (
    EmptyInputError,
    EmptyResultError,
    InvalidParameterError,
    RoiBoundsError,
)


def frame(values, t=0.0):
    return PressureFrame(t, np.asarray(values, dtype=float))


class TestSpatialAverage:

    def test_excludes_sensels_below_floor(self):
        result = spatial_average(frame([[0.05, 0.10, 0.20]]), Roi(0, 0, 0, 2), 0.06)
        assert result.pressure == pytest.approx(0.15)
        assert result.active_sensels == 2

    def test_identical_values(self):
        result = spatial_average(frame([[0.10, 0.10]]), Roi(0, 0, 0, 1), 0.06)
        assert result.pressure == pytest.approx(0.10)

    def test_all_below_floor_gives_zero(self):
        result = spatial_average(frame([[0.01, 0.02]]), Roi(0, 0, 0, 1), 0.06)
        assert result.pressure == 0.0
        assert result.active_sensels == 0

    def test_roi_restricts_the_average(self):
        grid = [[9.0, 9.0], [0.2, 0.4]]
        assert spatial_average(frame(grid), Roi(1, 1, 0, 1), 0.0).pressure == pytest.approx(0.3)

    def test_roi_out_of_bounds(self):
        with pytest.raises(RoiBoundsError):
            spatial_average(frame([[0.1, 0.2]]), Roi(0, 1, 0, 1), 0.06)

    def test_negative_floor_rejected(self):
        with pytest.raises(InvalidParameterError):
            spatial_average(frame([[0.1]]), Roi(0, 0, 0, 0), -1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        grid = rng.uniform(0, 0.3, size=(4, 5))
        shuffled = rng.permutation(grid.ravel()).reshape(4, 5)
        roi = Roi.full((4, 5))
        a = spatial_average(frame(grid), roi, 0.1)
        b = spatial_average(frame(shuffled), roi, 0.1)
        assert a.pressure == pytest.approx(b.pressure, rel=1e-12)
        assert a.active_sensels == b.active_sensels

    def test_zero_floor_is_plain_mean(self):
        grid = np.random.default_rng(4).uniform(0, 1, size=(3, 3))
        assert spatial_average(frame(grid), Roi.full((3, 3)), 0.0).pressure == pytest.approx(grid.mean())

    def test_raising_floor_never_adds_sensels(self):
        grid = np.random.default_rng(5).uniform(0, 1, size=(6, 6))
        counts = [spatial_average(frame(grid), Roi.full((6, 6)), f).active_sensels
                  for f in np.linspace(0, 1, 11)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


class TestAverageSeries:

    def test_identical_frames(self):
        data = np.full((3, 2, 2), 0.1)
        series = average_series(FrameSequence.from_array(data, 20.0), Roi.full((2, 2)), 0.06)
        np.testing.assert_allclose(series.values, [0.1, 0.1, 0.1])
        assert series.fs == 20.0

    def test_single_frame(self):
        seq = FrameSequence.from_array(np.full((1, 2, 2), 0.2), 20.0)
        assert average_series(seq, Roi.full((2, 2)), 0.06).n_samples == 1

    def test_alternating_active_regions(self):
        data = np.array([
            [[0.3, 0.0], [0.0, 0.1]],
            [[0.0, 0.2], [0.4, 0.0]],
            [[0.0, 0.0], [0.0, 0.0]],
        ])
        series = average_series(FrameSequence.from_array(data, 10.0), Roi.full((2, 2)), 0.06)
        np.testing.assert_allclose(series.values, [0.2, 0.3, 0.0])
        np.testing.assert_array_equal(series.active_counts, [2, 2, 0])
        np.testing.assert_array_equal(series.flagged, [False, False, True])
        assert series.n_flagged == 1

    def test_empty_sequence(self):
        with pytest.raises(EmptyInputError):
            average_series(FrameSequence((), 20.0), Roi(0, 0, 0, 0), 0.06)

    def test_length_matches_frame_count(self, breathing_frames):
        seq = breathing_frames(duration_s=5.0)
        assert average_series(seq, Roi(4, 5, 0, 5), 0.097).n_samples == seq.n_frames


class TestContactArea:

    def test_whole_mat_denominator(self):
        data = np.zeros((2, 4, 5))
        data[:, 0, :2] = 0.2
        seq = FrameSequence.from_array(data, 20.0)
        assert contact_area_percent(seq, 0.06) == pytest.approx(10.0)
        # counted inside the ROI, still relative to all 20 sensels
        assert contact_area_percent(seq, 0.06, Roi(0, 0, 0, 0)) == pytest.approx(5.0)


class TestTrimTransients:

    def test_ten_seconds_trimmed_two_and_two(self):
        seq = FrameSequence.from_array(np.full((200, 2, 2), 0.1), 20.0)
        trimmed = trim_transients(seq, 2.0, 2.0)
        assert trimmed.n_frames == 120
        assert trimmed.timestamps[0] == 0.0
        assert trimmed.timestamps[-1] == pytest.approx(119 / 20.0)

    def test_zero_trims_are_identity(self):
        seq = FrameSequence.from_array(np.full((10, 2, 2), 0.1), 20.0)
        assert trim_transients(seq, 0.0, 0.0) is seq

    def test_trims_exceeding_duration(self):
        seq = FrameSequence.from_array(np.full((60, 2, 2), 0.1), 20.0)
        with pytest.raises(EmptyResultError):
            trim_transients(seq, 2.0, 2.0)

    def test_negative_trim(self):
        seq = FrameSequence.from_array(np.full((60, 2, 2), 0.1), 20.0)
        with pytest.raises(InvalidParameterError):
            trim_transients(seq, -1.0, 0.0)
