import json

import numpy as np
import pytest

from app.interface.frame_files import FrameFileInterface, load_frames, save_frames
from app.models.models import FrameSequence
from app.utils.exceptions import EmptyInputError, FrameParseError

HEADER = "fs=20.0,rows=2,cols=2\n"


class TestParseCsv:

    def test_timestamps_and_values(self):
        seq = FrameFileInterface.parse_csv(HEADER + "t=0.0,0.1,0.2,0.3,0.4\nt=0.05,0.5,0.6,0.7,0.8\n")
        assert seq.n_frames == 2
        assert seq.fs == 20.0
        np.testing.assert_allclose(seq.frames[1].grid, [[0.5, 0.6], [0.7, 0.8]])
        np.testing.assert_allclose(seq.timestamps, [0.0, 0.05])

    def test_missing_timestamps_come_from_fs(self):
        seq = FrameFileInterface.parse_csv(HEADER + "0,0,0,0\n1,1,1,1\n2,2,2,2\n")
        np.testing.assert_allclose(seq.timestamps, [0.0, 0.05, 0.1])

    def test_comments_and_blank_lines_are_skipped(self):
        text = "# exported by the mat software\n\n" + HEADER + "\n# frame 1\n0,0,0,0\n"
        assert FrameFileInterface.parse_csv(text).n_frames == 1

    def test_header_order_does_not_matter(self):
        seq = FrameFileInterface.parse_csv("rows=1,cols=3,fs=10\n1,2,3\n")
        assert seq.shape == (1, 3)
        assert seq.fs == 10.0

    def test_missing_header_field(self):
        with pytest.raises(FrameParseError) as exc:
            FrameFileInterface.parse_csv("fs=20,rows=2\n0,0,0,0\n")
        assert exc.value.line == 1

    def test_wrong_value_count_reports_line_and_frame(self):
        with pytest.raises(FrameParseError) as exc:
            FrameFileInterface.parse_csv(HEADER + "0,0,0,0\n0,0,0\n")
        assert exc.value.line == 3
        assert exc.value.frame == 2

    def test_negative_pressure(self):
        with pytest.raises(FrameParseError):
            FrameFileInterface.parse_csv(HEADER + "0,0,-0.1,0\n")

    def test_non_numeric_value(self):
        with pytest.raises(FrameParseError):
            FrameFileInterface.parse_csv(HEADER + "0,0,abc,0\n")

    def test_non_monotone_timestamps(self):
        with pytest.raises(FrameParseError) as exc:
            FrameFileInterface.parse_csv(HEADER + "t=0.05,0,0,0,0\nt=0.0,0,0,0,0\n")
        assert exc.value.frame == 2

    def test_timestamp_step_must_match_fs(self):
        with pytest.raises(FrameParseError):
            FrameFileInterface.parse_csv(HEADER + "t=0.0,0,0,0,0\nt=0.1,0,0,0,0\n")

    def test_header_only(self):
        with pytest.raises(EmptyInputError):
            FrameFileInterface.parse_csv(HEADER)


class TestParseJson:

    def test_frames_with_and_without_timestamps(self):
        raw = {"fs": 20.0, "rows": 1, "cols": 2, "frames": [{"values": [0.1, 0.2]}, {"t": 0.05, "values": [0.3, 0.4]}]}
        seq = FrameFileInterface.parse_json(json.dumps(raw))
        np.testing.assert_allclose(seq.timestamps, [0.0, 0.05])
        np.testing.assert_allclose(seq.to_array()[:, 0, 1], [0.2, 0.4])

    def test_grid_size_mismatch(self):
        raw = {"fs": 20.0, "rows": 2, "cols": 2, "frames": [{"values": [0.1, 0.2]}]}
        with pytest.raises(FrameParseError):
            FrameFileInterface.parse_json(json.dumps(raw))

    def test_invalid_json(self):
        with pytest.raises(FrameParseError):
            FrameFileInterface.parse_json("{not json")

    def test_no_frames(self):
        with pytest.raises(EmptyInputError):
            FrameFileInterface.parse_json(json.dumps({"fs": 20.0, "rows": 1, "cols": 1, "frames": []}))


class TestFiles:

    @pytest.mark.parametrize("suffix", ["csv", "json"])
    def test_save_then_load(self, tmp_path, breathing_frames, suffix):
        seq = breathing_frames(duration_s=2.0)
        path = save_frames(seq, tmp_path / f"frames.{suffix}")
        loaded = load_frames(path)
        assert loaded.n_frames == seq.n_frames
        assert loaded.fs == seq.fs
        # values are written at 6 significant digits
        np.testing.assert_allclose(loaded.to_array(), seq.to_array(), rtol=1e-5)
        np.testing.assert_array_equal(loaded.timestamps, seq.timestamps)

    def test_csv_header(self, tmp_path):
        seq = FrameSequence.from_array(np.full((2, 3, 4), 0.25), 20.0)
        text = save_frames(seq, tmp_path / "f.csv").read_text()
        assert text.splitlines()[0] == "fs=20.0,rows=3,cols=4"
        assert text.splitlines()[1].startswith("t=0.0,0.25")

    def test_nested_output_directory_is_created(self, tmp_path):
        seq = FrameSequence.from_array(np.full((2, 1, 1), 0.1), 20.0)
        assert save_frames(seq, tmp_path / "a" / "b" / "f.csv").exists()

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyInputError):
            load_frames(path)

    def test_refuses_empty_sequence(self, tmp_path):
        with pytest.raises(EmptyInputError):
            save_frames(FrameSequence((), 20.0), tmp_path / "f.csv")
