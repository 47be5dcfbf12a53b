"""End-to-end command line tests"""

import json
import math

import pytest

from app.cli.dependencies import parse_int_list
from app.core.exceptions import ConfigurationException
from app.main import main
from app.services.code_predictor import load_predictions
from app.services.estimation import load_store
from app.services.evaluation import load_report, records_path
from app.services.scene_data import load_scene

SMALL_RUN = """
[estimation]
horizon = 40
restarts = 1
max_iter = 20

[metrics]
horizon = 40

[knn]
k = 2
"""


def _last_error(err):
    return json.loads([line for line in err.splitlines() if line.strip()][-1])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, ngsim_export):
    """ingest -> estimate -> predict -> rollout -> evaluate on the synthetic export"""
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "run.toml"
    config.write_text(SMALL_RUN, encoding="utf-8")
    paths = {name: root / f"{name}.csv" for name in ("scene", "store", "params", "traj", "report")}
    paths["config"] = config

    common = ["--config", str(config)]
    paths["codes"] = [
        main([*common, "ingest", "--input", str(ngsim_export), "--out", str(paths["scene"])]),
        main([*common, "estimate", "--scene", str(paths["scene"]), "--out", str(paths["store"]),
              "--vehicles", "1,2,4,5"]),
        main([*common, "predict", "--store", str(paths["store"]), "--scene", str(paths["scene"]),
              "--out", str(paths["params"])]),
        main([*common, "rollout", "--scene", str(paths["scene"]), "--vehicle", "2",
              "--controller", "constvel", "--out", str(paths["traj"])]),
        main([*common, "evaluate", "--store", str(paths["store"]), "--test", str(paths["scene"]),
              "--methods", "constvel,avg,pred", "--out", str(paths["report"])]),
    ]
    return paths


class TestPipeline:
    """Every stage reads the previous stage's artifact"""

    def test_all_stages_succeed(self, pipeline):
        assert pipeline["codes"] == [0, 0, 0, 0, 0]

    def test_scene(self, pipeline):
        assert load_scene(pipeline["scene"]).vehicle_ids == [1, 2, 3, 4, 5, 6]

    def test_store(self, pipeline):
        assert [e.vehicle_id for e in load_store(pipeline["store"])] == [1, 2, 4, 5]

    def test_predictions(self, pipeline):
        assert sorted(load_predictions(pipeline["params"])) == [1, 2, 3, 4, 5, 6]

    def test_trajectory(self, pipeline):
        text = pipeline["traj"].read_text(encoding="utf-8")
        assert text.startswith("# drivecode:trajectory schema_version=1")
        assert "# collided=false" in text

    def test_report(self, pipeline):
        table = load_report(pipeline["report"])
        assert [r.method for r in table.rows] == ["constvel", "idm_average", "idm_predict"]
        assert {r.n for r in table.rows} == {6}
        assert records_path(pipeline["report"]).is_file()

    def test_config_echoed_in_artifacts(self, pipeline):
        for name in ("scene", "store", "params", "report"):
            assert "# config_hash=" in pipeline[name].read_text(encoding="utf-8")

    def test_worker_count_does_not_change_report(self, pipeline, tmp_path):
        out = tmp_path / "parallel.csv"
        code = main(["--config", str(pipeline["config"]), "--workers", "2", "evaluate",
                     "--store", str(pipeline["store"]), "--test", str(pipeline["scene"]),
                     "--methods", "constvel,avg,pred", "--out", str(out)])
        assert code == 0
        assert out.read_bytes() == pipeline["report"].read_bytes()
        assert records_path(out).read_bytes() == records_path(pipeline["report"]).read_bytes()


class TestReportCommand:
    """Rendering a saved report"""

    def test_markdown_to_stdout(self, pipeline, capsys):
        assert main(["report", "--input", str(pipeline["report"])]) == 0
        out = capsys.readouterr().out
        assert out.startswith("| Method |")
        assert "| Const. vel | 6 |" in out
        assert "| IDM Pred | 6 |" in out

    def test_csv_to_file(self, pipeline, tmp_path):
        out = tmp_path / "table.csv"
        assert main(["report", "--input", str(pipeline["report"]), "--format", "csv",
                     "--out", str(out)]) == 0
        assert out.read_text(encoding="utf-8").splitlines()[0].startswith("method,")


class TestRiskCommand:
    """Overlap risk of two ellipses"""

    def test_prints_full_precision(self, capsys):
        ellipse = '{"mu": [0, 0], "tau_rot": 0, "L": 1, "W": 1}'
        assert main(["risk", "--ego", ellipse, "--other", ellipse]) == 0
        out = capsys.readouterr().out.strip()
        assert float(out) == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-15)
        assert out == f"{float(out):.17g}"

    def test_invalid_ellipse(self, capsys):
        bad = '{"mu": [0, 0], "L": 0, "W": 1}'
        assert main(["risk", "--ego", bad, "--other", bad]) == 2
        assert _last_error(capsys.readouterr().err)["error"] == "ConfigurationException"


class TestExitCodes:
    """Usage errors exit 2, pipeline errors exit 1"""

    def test_unknown_subcommand(self):
        assert main(["train"]) == 2

    def test_missing_subcommand(self):
        assert main([]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("drivecode ")

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["ingest", "--input", str(tmp_path / "absent.csv"),
                     "--out", str(tmp_path / "scene.csv")])
        assert code == 2
        error = _last_error(capsys.readouterr().err)
        assert error["error"] == "ConfigurationException"
        assert error["config_key"] == "input"
        assert error["exit_code"] == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.toml"), "risk",
                     "--ego", "{}", "--other", "{}"]) == 2

    def test_idm_rollout_needs_params(self, pipeline):
        assert main(["rollout", "--scene", str(pipeline["scene"]), "--vehicle", "2"]) == 2

    def test_unknown_vehicle(self, pipeline):
        assert main(["rollout", "--scene", str(pipeline["scene"]), "--vehicle", "42",
                     "--controller", "constvel"]) == 2

    def test_unreadable_store(self, pipeline, tmp_path, capsys):
        store = tmp_path / "store.csv"
        store.write_text("vehicle_id,a\n1,2\n", encoding="utf-8")
        code = main(["predict", "--store", str(store), "--scene", str(pipeline["scene"]),
                     "--out", str(tmp_path / "params.csv")])
        assert code == 1
        assert _last_error(capsys.readouterr().err)["error"] == "ArtifactFormatException"

    def test_schema_error(self, ngsim_frame, tmp_path, capsys):
        path = tmp_path / "broken.csv"
        ngsim_frame.drop(columns=["v_Vel", "Lane_ID"]).to_csv(path, index=False)
        assert main(["ingest", "--input", str(path), "--out", str(tmp_path / "s.csv")]) == 1
        error = _last_error(capsys.readouterr().err)
        assert error["missing_columns"] == ["Lane_ID", "v_Vel"]


class TestIntegerLists:
    """Integer list flags accept ranges"""

    @pytest.mark.parametrize("text,expected", [
        ("1..5", [1, 2, 3, 4, 5]),
        ("1..3,5", [1, 2, 3, 5]),
        ("2,4", [2, 4]),
        ("7..7", [7]),
    ])
    def test_parse(self, text, expected):
        assert parse_int_list(text, "lanes") == expected

    @pytest.mark.parametrize("text", ["5..1", "1..", "a..3", "1,x"])
    def test_invalid(self, text):
        with pytest.raises(ConfigurationException) as exc:
            parse_int_list(text, "lanes")
        assert exc.value.details["config_value"] == text

    def test_ingest_lane_range(self, ngsim_export, tmp_path):
        out = tmp_path / "scene.csv"
        assert main(["ingest", "--input", str(ngsim_export), "--lanes", "1..5",
                     "--out", str(out)]) == 0
        assert load_scene(out).vehicle_ids == [1, 2, 3, 4, 5, 6]

    def test_ingest_bad_range_is_usage_error(self, ngsim_export, tmp_path, capsys):
        code = main(["ingest", "--input", str(ngsim_export), "--lanes", "5..1",
                     "--out", str(tmp_path / "scene.csv")])
        assert code == 2
        assert _last_error(capsys.readouterr().err)["config_key"] == "lanes"
