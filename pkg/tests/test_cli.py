import csv
import json

import jsonschema
import pytest

from eas.cli import main, parse_grid
from eas.errors import ConfigError
from eas.report import PARETO_REPORT_SCHEMA


def run_cli(*argv):
    return main([str(a) for a in argv])


def strip_timing(doc):
    """Remove every 'timing' subtree so reruns can be compared exactly."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k != "timing"}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


class TestGridParsing:
    def test_full_spec(self):
        g = parse_grid("stages=1..L;sparsities=0.0:0.9:0.1", 4)
        assert g.stages == (1, 2, 3, 4)
        assert g.sparsities == tuple(round(0.1 * i, 1) for i in range(10))

    def test_lists(self):
        g = parse_grid("stages=2,4;sparsities=0.5,0.25", 8)
        assert g.stages == (2, 4)
        assert g.sparsities == (0.5, 0.25)

    def test_partial_defaults(self):
        g = parse_grid("sparsities=0.5", 4)
        assert g.stages == (1, 2, 3, 4)
        assert g.sparsities == (0.5,)

    @pytest.mark.parametrize("bad", [
        "stages=0..x", "sparsities=a,b", "depth=3", "stages",
    ])
    def test_malformed(self, bad):
        with pytest.raises(ConfigError):
            parse_grid(bad, 4)


class TestGenFixtures:
    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("gen-fixtures", "--seed", 7, "--n-examples", 5, "--out", a) == 0
        assert run_cli("gen-fixtures", "--seed", 7, "--n-examples", 5, "--out", b) == 0
        for name in ("weights.eas", "features.eas", "manifest.jsonl", "model.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("gen-fixtures", "--seed", 1, "--n-examples", 4, "--out", a)
        run_cli("gen-fixtures", "--seed", 2, "--n-examples", 4, "--out", b)
        assert (a / "features.eas").read_bytes() != (b / "features.eas").read_bytes()

    def test_manifest_line_count(self, tmp_path):
        run_cli("gen-fixtures", "--n-examples", 300, "--out", tmp_path / "d")
        lines = (tmp_path / "d" / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 300

    def test_archive_round_trip(self, tmp_path):
        from eas.archive import load_archive, save_archive
        run_cli("gen-fixtures", "--n-examples", 2, "--out", tmp_path / "d")
        src = tmp_path / "d" / "weights.eas"
        save_archive(tmp_path / "copy.eas", load_archive(src))
        assert src.read_bytes() == (tmp_path / "copy.eas").read_bytes()


@pytest.fixture(scope="module")
def cli_fixture(tmp_path_factory):
    out = tmp_path_factory.mktemp("clifix")
    assert run_cli("gen-fixtures", "--seed", 0, "--n-examples", 12,
                   "--out", out) == 0
    return out


class TestRun:
    def test_zero_sparsity_matches_baseline_json(self, cli_fixture, tmp_path):
        base_out, eas_out = tmp_path / "base", tmp_path / "eas"
        assert run_cli("run", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--out", base_out) == 0
        assert run_cli("run", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 2, "--sparsity", 0.0, "--out", eas_out) == 0
        base = json.loads((base_out / "record.json").read_text())
        eased = json.loads((eas_out / "record.json").read_text())
        assert base["record"]["wer"] == eased["record"]["wer"]
        assert eased["record"]["config"]["stage"] == 2

    def test_rerun_identical_outside_timing(self, cli_fixture, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run_cli("run", "--model", cli_fixture / "model.json",
                           "--manifest", cli_fixture / "manifest.jsonl",
                           "--stage", 1, "--sparsity", 0.5, "--out", out) == 0
            outs.append(json.loads((out / "record.json").read_text()))
        assert strip_timing(outs[0]) == strip_timing(outs[1])

    def test_stage_without_sparsity_is_config_error(self, cli_fixture, tmp_path):
        assert run_cli("run", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 1, "--out", tmp_path / "x") == 2

    def test_bad_sparsity_is_config_error(self, cli_fixture, tmp_path):
        assert run_cli("run", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 1, "--sparsity", 1.5,
                       "--out", tmp_path / "x") == 2

    def test_missing_manifest_is_data_error(self, cli_fixture, tmp_path):
        assert run_cli("run", "--model", cli_fixture / "model.json",
                       "--manifest", tmp_path / "nope.jsonl",
                       "--out", tmp_path / "x") == 3

    def test_corrupt_weights_is_data_error(self, cli_fixture, tmp_path):
        broken = tmp_path / "broken"
        broken.mkdir()
        (broken / "model.json").write_text(
            (cli_fixture / "model.json").read_text())
        blob = (cli_fixture / "weights.eas").read_bytes()
        (broken / "weights.eas").write_bytes(blob[:-100])
        assert run_cli("run", "--model", broken / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--out", tmp_path / "x") == 3


class TestSearch:
    def test_report_validates_and_files_exist(self, cli_fixture, tmp_path):
        out = tmp_path / "search"
        assert run_cli("search", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--grid", "stages=1,2;sparsities=0.0,0.5,0.7",
                       "--out", out) == 0
        doc = json.loads((out / "report.json").read_text())
        jsonschema.validate(doc, PARETO_REPORT_SCHEMA)
        assert len(doc["records"]) == 4  # s=0 deduplicated into the baseline
        assert (out / "report.txt").exists()
        assert (out / "scatter.csv").exists()
        assert (out / "front.png").exists()
        with open(out / "scatter.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5  # baseline + 4 records
        assert {r["on_front"] for r in rows} <= {"0", "1"}

    def test_no_figures_flag(self, cli_fixture, tmp_path):
        out = tmp_path / "nofig"
        assert run_cli("search", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--grid", "stages=1;sparsities=0.5",
                       "--no-figures", "--out", out) == 0
        assert not (out / "front.png").exists()

    def test_require_admissible_exit_code(self, cli_fixture, tmp_path):
        out = tmp_path / "inadm"
        code = run_cli("search", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--grid", "stages=1;sparsities=0.9",
                       "--require-admissible", "--out", out)
        assert code == 4
        doc = json.loads((out / "report.json").read_text())
        assert doc["no_admissible"] is True
        assert doc["top3"] == []

    def test_cross_layer_grid_must_target_last_stage(self, cli_fixture, tmp_path):
        assert run_cli("search", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--grid", "stages=1,4;sparsities=0.5", "--cross-layer",
                       "--out", tmp_path / "x") == 2

    def test_rerun_identical_outside_timing(self, cli_fixture, tmp_path):
        docs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            assert run_cli("search", "--model", cli_fixture / "model.json",
                           "--manifest", cli_fixture / "manifest.jsonl",
                           "--grid", "stages=1;sparsities=0.3,0.5",
                           "--no-figures", "--out", out) == 0
            docs.append(json.loads((out / "report.json").read_text()))
        a, b = docs
        assert strip_timing(a["baseline"]) == strip_timing(b["baseline"])
        assert strip_timing(a["records"]) == strip_timing(b["records"])


class TestProfile:
    def test_csv_columns_and_figures(self, cli_fixture, tmp_path):
        out = tmp_path / "prof"
        assert run_cli("profile", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 1, "--grid", "sparsities=0.0,0.5,0.9",
                       "--repeats", 2, "--limit", 4, "--out", out) == 0
        with open(out / "timing.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and list(rows[0]) == ["config", "repeat", "stem_s", "encoder_s",
                                          "decoder_s", "tokens", "cap_hit"]
        assert len(rows) == 6  # 3 sparsities x 2 repeats
        with open(out / "token_growth.csv") as fh:
            growth = list(csv.DictReader(fh))
        assert [g["sparsity"] for g in growth] == ["0.0", "0.5", "0.9"]
        assert growth[0]["avg_tokens"] == growth[0]["baseline_avg_tokens"]
        assert (out / "timing.png").exists()
        assert (out / "token_growth.png").exists()


class TestStability:
    def test_group_counts_and_outputs(self, cli_fixture, tmp_path):
        out = tmp_path / "stab"
        assert run_cli("stability", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 1, "--sparsity", 0.5,
                       "--group-sizes", "3,6,12", "--out", out) == 0
        with open(out / "stability.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [(r["group_size"], r["n_groups"]) for r in rows] == [
            ("3", "4"), ("6", "2"), ("12", "1")]
        assert (out / "stability.png").exists()

    def test_bad_group_sizes(self, cli_fixture, tmp_path):
        assert run_cli("stability", "--model", cli_fixture / "model.json",
                       "--manifest", cli_fixture / "manifest.jsonl",
                       "--stage", 1, "--sparsity", 0.5,
                       "--group-sizes", "x,y", "--out", tmp_path / "z") == 2
