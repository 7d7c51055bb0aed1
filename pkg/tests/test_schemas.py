import json

import pytest
from marshmallow import ValidationError

from app.interface.report_templates import render
from app.interface.results_files import ManifestInterface, ResultsInterface
from app.models.models import TrialConfig, TrialResult
from app.schemas.manifest_schemas import TrialConfigSchema
from app.schemas.report_schemas import TrialResultSchema
from app.schemas.request_schemas import EstimateRequestSchema, LoaRequestSchema
from app.utils.exceptions import EmptyInputError, ManifestError


class TestTrialConfigSchema:

    def test_defaults(self):
        config = TrialConfigSchema().load({"gold_rr_bpm": 45, "duration_s": 40})
        assert isinstance(config, TrialConfig)
        assert config.motion == "none"
        assert config.fs == 20.0
        assert config.model == "simnewb"

    @pytest.mark.parametrize("field,value", [
        ("motion", "wiggle"),
        ("seed", -1),
        ("gold_rr_bpm", 0),
    ])
    def test_field_validation(self, field, value):
        with pytest.raises(ValidationError):
            TrialConfigSchema().load({"gold_rr_bpm": 60, "duration_s": 60, field: value})

    def test_model_validation_becomes_validation_error(self):
        with pytest.raises(ValidationError):
            TrialConfigSchema().load({"gold_rr_bpm": 60, "duration_s": 90})


class TestManifest:

    def test_error_names_the_trial(self):
        raw = [{"gold_rr_bpm": 60, "duration_s": 60}, {"gold_rr_bpm": 60}]
        with pytest.raises(ManifestError) as exc:
            ManifestInterface.parse(raw)
        assert exc.value.location == "trial 1"
        assert "duration_s" in str(exc.value)

    def test_not_an_array(self):
        with pytest.raises(ManifestError):
            ManifestInterface.parse({"gold_rr_bpm": 60})

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            ManifestInterface.parse([])

    def test_save_then_load(self, tmp_path):
        configs = [TrialConfig(gold_rr_bpm=45.0, grunting=True, seed=3), TrialConfig(motion="external")]
        path = ManifestInterface.save(configs, tmp_path / "manifest.json")
        assert ManifestInterface.load(path) == configs

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("[{")
        with pytest.raises(ManifestError):
            ManifestInterface.load(path)


class TestTrialResults:

    @pytest.fixture
    def results(self):
        return [
            TrialResult(0, TrialConfig(gold_rr_bpm=45.0), 45.0, rr_baseline=47.5, rr_modified=45.0,
                        snr_db=12.5, baseline_peaks=(0.8, 0.78), modified_peaks=(0.75, 0.75)),
            TrialResult(1, TrialConfig(motion="internal"), 60.0, rr_baseline=None, rr_modified=60.0,
                        baseline_error="NoPeakError: all candidate bins carry zero power"),
        ]

    def test_dump_includes_paired_differences(self, results):
        row = TrialResultSchema().dump(results[0])
        assert row["diff_baseline"] == pytest.approx(2.5)
        assert row["diff_modified"] == pytest.approx(0.0)
        assert TrialResultSchema().dump(results[1])["diff_baseline"] is None

    def test_differences_are_recomputed_on_load(self, results):
        row = TrialResultSchema().dump(results[0])
        row["diff_baseline"] = 99.0
        assert TrialResultSchema().load(row).diff_baseline == pytest.approx(2.5)

    @pytest.mark.parametrize("name", ["results.json", "results.csv"])
    def test_files(self, tmp_path, results, name):
        path = tmp_path / name
        if name.endswith(".json"):
            ResultsInterface.save_json(results, path)
        else:
            ResultsInterface.save_csv(results, path)
        loaded = ResultsInterface.load(path)
        assert [r.index for r in loaded] == [0, 1]
        assert loaded[0].baseline_peaks == (0.8, 0.78)
        assert loaded[1].rr_baseline is None
        assert loaded[1].baseline_error.startswith("NoPeakError")
        assert loaded[1].config.motion == "internal"

    def test_csv_is_flat(self, results):
        df = ResultsInterface.to_frame(results)
        assert {"diff_baseline", "config.motion", "config.mattress", "config.seed"} <= set(df.columns)
        assert df.loc[0, "baseline_peaks"] == "0.8;0.78"

    def test_csv_header_has_no_duplicate_columns(self, tmp_path, results):
        path = ResultsInterface.save_csv(results, tmp_path / "results.csv")
        header = path.read_text().splitlines()[0].split(",")
        assert len(header) == len(set(header))
        assert header.count("gold_rr_bpm") == 1
        assert header.count("config.gold_rr_bpm") == 1

    def test_csv_keeps_requested_and_snapped_gold_apart(self, tmp_path):
        snapped = TrialResult(0, TrialConfig(gold_rr_bpm=62.0), 63.0, rr_baseline=63.0, rr_modified=63.0)
        path = ResultsInterface.save_csv([snapped], tmp_path / "results.csv")
        loaded = ResultsInterface.load(path)[0]
        assert loaded.gold_rr_bpm == pytest.approx(63.0)
        assert loaded.config.gold_rr_bpm == pytest.approx(62.0)

    def test_infinite_snr_is_written_as_null(self, tmp_path):
        results = [TrialResult(0, TrialConfig(), 60.0, rr_baseline=60.0, rr_modified=60.0, snr_db=float("inf"))]
        path = ResultsInterface.save_json(results, tmp_path / "results.json")

        def reject(constant):
            raise ValueError(f"non-standard JSON constant {constant}")

        payload = json.loads(path.read_text(), parse_constant=reject)
        assert payload["results"][0]["snr_db"] is None
        assert ResultsInterface.load(path)[0].snr_db is None

    def test_bad_object(self):
        with pytest.raises(ManifestError):
            ResultsInterface.parse_json({"trials": []})


class TestRequestSchemas:

    def test_estimate_defaults(self):
        data = EstimateRequestSchema().load({"fs": 20, "values": [0.1, 0.2]})
        assert data["method"] == "both"
        assert data["window_s"] == 20.0
        assert data["band"] is None

    @pytest.mark.parametrize("body", [
        {"values": [0.1]},
        {"fs": 20, "values": []},
        {"fs": 20, "values": [0.1], "overlap": 1.0},
        {"fs": 20, "values": [0.1], "band": [2.0, 1.0]},
        {"fs": 20, "values": [0.1], "method": "median"},
    ])
    def test_estimate_rejects(self, body):
        with pytest.raises(ValidationError):
            EstimateRequestSchema().load(body)

    def test_loa_results_become_models(self):
        body = {"results": [{"index": 0, "gold_rr_bpm": 60.0, "rr_baseline": 61.0,
                             "config": {"gold_rr_bpm": 60.0, "duration_s": 60.0}}]}
        data = LoaRequestSchema().load(json.loads(json.dumps(body)))
        assert data["results"][0].diff_baseline == pytest.approx(1.0)
        assert data["motion_coding"] == "binary"


class TestReportRendering:

    def test_json_report_is_strict(self):
        payload = {"report": "loa", "analysis": {"snr_motion_db": float("inf"), "snr_still_db": float("nan")}}

        def reject(constant):
            raise ValueError(f"non-standard JSON constant {constant}")

        parsed = json.loads(render(payload, "json"), parse_constant=reject)
        assert parsed["analysis"] == {"snr_motion_db": None, "snr_still_db": None}
