"""
End-to-end runs of the dnnet commands through typer's test runner
"""

import numpy as np
import pandas as pd
import pytest
import yaml
from typer.testing import CliRunner

from dnnet_cli.cli import app
from dnnet_cli.core.config import ArchDescriptor
from dnnet_cli.model.nested import build_model
from dnnet_cli.slicing.serialize import load, load_nested
from dnnet_cli.slicing.sliced import SlicedModel
from dnnet_cli.utils.tables import read_grid_csv

runner = CliRunner()

SMALL_RUN = ["--arch", "toy", "--batch", "16", "--train-count", "48", "--test-count", "24", "--no-progress"]


def invoke(*args, **kwargs):
    return runner.invoke(app, [str(a) for a in args], **kwargs)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Output directory of a short descend-weighted toy run"""
    out = tmp_path_factory.mktemp("run")
    result = invoke("train", *SMALL_RUN, "--steps", 2, "--lambda", "descend", "--gamma", 1.2, "--out", out)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def cost_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cost") / "cost.csv"
    result = invoke("cost", "toy", "--out", path)
    assert result.exit_code == 0, result.output
    return path


class TestTrain:
    def test_outputs(self, trained):
        for name in ("model.dnnt", "model.dnnt.yaml", "metrics.csv", "accuracy_grid.csv", "resolved_config.yaml"):
            assert (trained / name).is_file(), name
        first = (trained / "metrics.csv").read_text(encoding="utf-8").splitlines()[0]
        assert first == "# lambda: descend γ=1.2"
        assert read_grid_csv(trained / "accuracy_grid.csv").shape == (2, 2)

    def test_resolved_config_is_echoed(self, trained):
        echoed = yaml.safe_load((trained / "resolved_config.yaml").read_text())
        assert echoed["train"]["steps"] == 2
        assert echoed["weights"]["kind"] == "descend"
        assert echoed["arch"]["groups"] == 2

    def test_zero_steps_stores_the_seeded_initialization(self, tmp_path):
        result = invoke("train", *SMALL_RUN, "--steps", 0, "--seed", 4, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        stored = load_nested(tmp_path / "model.dnnt").state_dict()
        arch = ArchDescriptor.preset("toy")
        arch.seed = 4
        for name, value in build_model(arch).state_dict().items():
            assert np.array_equal(stored[name], value), name

    def test_same_flags_same_model(self, tmp_path):
        for run in ("a", "b"):
            result = invoke("train", *SMALL_RUN, "--steps", 2, "--out", tmp_path / run)
            assert result.exit_code == 0, result.output
        assert (tmp_path / "a" / "model.dnnt").read_bytes() == (tmp_path / "b" / "model.dnnt").read_bytes()

    def test_unknown_architecture(self, tmp_path):
        result = invoke("train", "--arch", "nope", "--out", tmp_path)
        assert result.exit_code == 2

    def test_missing_cifar_directory(self, tmp_path):
        result = invoke("train", *SMALL_RUN, "--data", f"cifar10:{tmp_path / 'none'}", "--out", tmp_path)
        assert result.exit_code == 3

    def test_invalid_gamma(self, tmp_path):
        result = invoke("train", *SMALL_RUN, "--lambda", "descend", "--gamma", 0.5, "--out", tmp_path)
        assert result.exit_code == 2


class TestGrid:
    def test_delta_against_own_accuracy_is_zero(self, trained, tmp_path):
        baseline = tmp_path / "baseline.csv"
        baseline.write_bytes((trained / "accuracy_grid.csv").read_bytes())
        result = invoke("grid", trained / "model.dnnt", "--baseline", baseline, "--curve", "--out", tmp_path)
        assert result.exit_code == 0, result.output
        delta = read_grid_csv(tmp_path / "accuracy_delta.csv", (2, 2))
        assert np.abs(delta).max() < 1e-12
        curve = pd.read_csv(tmp_path / "width_curve.csv")
        assert curve["w"].tolist() == [1, 2]

    def test_workers_do_not_change_the_grid(self, trained, tmp_path):
        for workers in (1, 2):
            result = invoke("grid", trained / "model.dnnt", "--workers", workers, "--out", tmp_path / str(workers))
            assert result.exit_code == 0, result.output
        assert np.array_equal(read_grid_csv(tmp_path / "1" / "accuracy_grid.csv"),
                              read_grid_csv(tmp_path / "2" / "accuracy_grid.csv"))

    def test_malformed_baseline(self, trained, tmp_path):
        baseline = tmp_path / "baseline.csv"
        baseline.write_text("a,b\nx,y\n")
        result = invoke("grid", trained / "model.dnnt", "--baseline", baseline, "--out", tmp_path)
        assert result.exit_code == 3

    def test_baseline_of_wrong_shape(self, trained, tmp_path):
        baseline = tmp_path / "baseline.csv"
        baseline.write_text("1,2,3\n4,5,6\n7,8,9\n")
        result = invoke("grid", trained / "model.dnnt", "--baseline", baseline, "--out", tmp_path)
        assert result.exit_code == 3
        assert "mismatch" in result.output

    def test_sliced_model_rejected(self, trained, tmp_path):
        target = tmp_path / "s.dnnt"
        assert invoke("slice", trained / "model.dnnt", "--d", 1, "--w", 1, "--out", target).exit_code == 0
        assert invoke("grid", target, "--out", tmp_path).exit_code == 2

    def test_corrupt_model_file(self, trained, tmp_path):
        broken = tmp_path / "model.dnnt"
        broken.write_bytes((trained / "model.dnnt").read_bytes()[:-10])
        assert invoke("grid", broken, "--out", tmp_path).exit_code == 1


class TestSliceAndCost:
    def test_slice(self, trained, tmp_path):
        target = tmp_path / "slice.dnnt"
        result = invoke("slice", trained / "model.dnnt", "--d", 2, "--w", 1, "--out", target)
        assert result.exit_code == 0, result.output
        sliced = load(target)
        assert isinstance(sliced, SlicedModel)
        assert (sliced.slice_id.d, sliced.slice_id.w) == (2, 1)

    def test_slice_out_of_range(self, trained, tmp_path):
        result = invoke("slice", trained / "model.dnnt", "--d", 3, "--w", 1, "--out", tmp_path / "x.dnnt")
        assert result.exit_code == 2

    def test_cost_from_model_matches_preset(self, trained, cost_csv, tmp_path):
        result = invoke("cost", trained / "model.dnnt", "--out", tmp_path / "cost.csv")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "cost.csv").read_text() == cost_csv.read_text()

    def test_cost_default_location(self, tmp_path):
        result = invoke("cost", "toy4", "--hw", "16x16", env={"DNNET_OUTPUT_ROOT": str(tmp_path)})
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(tmp_path / "cost.csv")
        assert list(frame.columns) == ["metric", "d", "w1", "w2", "w3", "w4"]

    def test_bad_reference_size(self, tmp_path):
        assert invoke("cost", "toy", "--hw", "16", "--out", tmp_path / "c.csv").exit_code == 2


class TestSelect:
    def test_selects_within_budget(self, trained, cost_csv):
        result = invoke("select", cost_csv, trained / "accuracy_grid.csv")
        assert result.exit_code == 0, result.output
        assert "selected d=" in result.output

    def test_infeasible_budget(self, trained, cost_csv):
        result = invoke("select", cost_csv, trained / "accuracy_grid.csv", "--max-macs", 0)
        assert result.exit_code == 4

    def test_score_table_shape_checked(self, cost_csv, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text("1,2,3\n")
        assert invoke("select", cost_csv, scores).exit_code == 3

    def test_negative_budget(self, trained, cost_csv):
        result = invoke("select", cost_csv, trained / "accuracy_grid.csv", "--max-params", -5)
        assert result.exit_code == 2

    def test_frontier(self, trained, cost_csv, tmp_path):
        target = tmp_path / "frontier.csv"
        result = invoke("frontier", cost_csv, trained / "accuracy_grid.csv", "--out", target)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(target)
        assert set(frame["family"]) <= {"all", "width", "depth"}
        assert "all" in set(frame["family"])


class TestVerify:
    def test_fresh_model_passes(self, tmp_path):
        report = tmp_path / "report.csv"
        result = invoke("verify", "--fresh", "toy", "--inputs", 6, "--grad-samples", 8, "--draws", 20,
                        "--out", report)
        assert result.exit_code == 0, result.output
        assert "checks passed" in result.output
        assert pd.read_csv(report)["passed"].all()

    def test_stored_model_passes(self, trained):
        result = invoke("verify", trained / "model.dnnt", "--inputs", 6, "--grad-samples", 8, "--draws", 20)
        assert result.exit_code == 0, result.output

    def test_needs_a_model(self):
        assert invoke("verify").exit_code == 2


class TestMisc:
    def test_configure_show_and_write(self, tmp_path):
        target = tmp_path / "run.yaml"
        result = invoke("configure", "--arch", "toy4", "--show", "--write", target)
        assert result.exit_code == 0, result.output
        assert yaml.safe_load(target.read_text())["arch"]["groups"] == 4

    def test_configure_reads_its_own_output(self, tmp_path):
        target = tmp_path / "run.yaml"
        assert invoke("configure", "--arch", "toy4", "--write", target).exit_code == 0
        assert invoke("configure", "--config", target, "--show").exit_code == 0

    def test_missing_config_file(self, tmp_path):
        assert invoke("configure", "--config", tmp_path / "absent.yaml", "--show").exit_code == 2

    def test_version(self):
        result = invoke("version")
        assert result.exit_code == 0
        assert "dnnet-cli" in result.output
