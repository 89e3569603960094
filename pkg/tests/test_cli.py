"""Command-line behaviour: parsing, overrides, failure modes, memory table."""

import json

import pytest

from insarcast.cli import build_parser, main
from insarcast.errors import InvalidConfig
from insarcast.runconfig import apply_overrides, from_dict, from_file


def write_config(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def scene_doc(out_dir):
    return {
        "paths": {
            "scene": {
                "n_points": 12,
                "extent": 100.0,
                "t_steps": 6,
                "trend": -0.1,
                "noise_std": 0.0,
                "seed": 1,
            },
            "output_dir": str(out_dir),
        },
    }


class TestParser:
    def test_subcommands_registered(self):
        parser = build_parser()
        args = parser.parse_args(["pipeline", "-c", "cfg.json",
                                  "--set", "a=1", "--set", "b=2"])
        assert args.config == "cfg.json"
        assert args.set == ["a=1", "b=2"]

    def test_memory_study_defaults(self):
        args = build_parser().parse_args(["memory-study"])
        assert args.timesteps == 300
        assert args.sizes == [128, 256, 512]
        assert args.value_bytes == 4

    def test_command_is_required(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])
        capsys.readouterr()

    def test_unknown_command_rejected(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["frobnicate"])
        capsys.readouterr()


class TestMemoryStudy:
    def test_default_table_and_note(self, capsys):
        assert main(["memory-study"]) == 0
        out = capsys.readouterr().out
        assert "18.75" in out
        assert "75.00" in out
        assert "300.00" in out
        assert "allocator overhead" in out

    def test_custom_sizes_skip_note(self, capsys):
        assert main(["memory-study", "--sizes", "64"]) == 0
        out = capsys.readouterr().out
        assert "4.69" in out
        assert "allocator overhead" not in out

    def test_non_default_bytes_skip_note(self, capsys):
        assert main(["memory-study", "--value-bytes", "8"]) == 0
        out = capsys.readouterr().out
        assert "150.00" in out  # 300x256x256x8
        assert "allocator overhead" not in out


class TestFailureModes:
    def test_missing_config_flag(self, capsys):
        assert main(["pipeline"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "--config" in err

    def test_config_file_not_found(self, capsys):
        assert main(["pipeline", "-c", "/nonexistent/cfg.json"]) == 1
        assert "not found" in capsys.readouterr().err

    def test_config_not_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["pipeline", "-c", str(path)]) == 1
        assert "not valid JSON" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        doc = scene_doc(tmp_path / "out")
        doc["bogus"] = {}
        cfg = write_config(tmp_path / "cfg.json", doc)
        assert main(["pipeline", "-c", cfg]) == 1
        assert "bogus" in capsys.readouterr().err

    def test_validation_runs_before_any_writes(self, tmp_path, capsys):
        # a grid the conv pooling cannot divide fails at config time,
        # before the output directory is created
        out_dir = tmp_path / "never"
        doc = scene_doc(out_dir)
        doc["grid"] = {"height": 100, "width": 100}
        cfg = write_config(tmp_path / "cfg.json", doc)
        assert main(["pipeline", "-c", cfg]) == 1
        assert "error:" in capsys.readouterr().err
        assert not out_dir.exists()

    def test_override_feeds_validation(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", scene_doc(tmp_path / "out"))
        assert main(["pipeline", "-c", cfg, "--set", "grid.height=100"]) == 1
        assert "error:" in capsys.readouterr().err


class TestSynthCommand:
    def test_writes_points_csv(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        cfg = write_config(tmp_path / "cfg.json", scene_doc(out_dir))
        assert main(["synth", "-c", cfg]) == 0
        assert (out_dir / "points.csv").exists()
        assert "12 points x 6 epochs" in capsys.readouterr().out

    def test_output_dir_override(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", scene_doc(tmp_path / "a"))
        other = tmp_path / "b"
        assert main(["synth", "-c", cfg,
                     "--set", f"paths.output_dir={other}"]) == 0
        assert (other / "points.csv").exists()
        assert not (tmp_path / "a").exists()
        capsys.readouterr()

    def test_synth_requires_scene(self, tmp_path, capsys):
        doc = {"paths": {"input_csv": "points.csv",
                         "output_dir": str(tmp_path / "out")}}
        cfg = write_config(tmp_path / "cfg.json", doc)
        assert main(["synth", "-c", cfg]) == 1
        assert "scene" in capsys.readouterr().err


class TestOverrides:
    def test_values_parse_as_json(self):
        doc = apply_overrides({}, ["split.val_fraction=0.25",
                                   "models.gbdt.enabled=false",
                                   "grid.height=16"])
        assert doc["split"]["val_fraction"] == 0.25
        assert doc["models"]["gbdt"]["enabled"] is False
        assert doc["grid"]["height"] == 16

    def test_non_json_values_stay_strings(self):
        doc = apply_overrides({}, ["paths.output_dir=/tmp/somewhere"])
        assert doc["paths"]["output_dir"] == "/tmp/somewhere"

    def test_nested_sections_created_on_demand(self):
        doc = apply_overrides({}, ["a.b.c=1"])
        assert doc == {"a": {"b": {"c": 1}}}

    def test_existing_keys_replaced(self):
        doc = apply_overrides({"grid": {"height": 32}}, ["grid.height=8"])
        assert doc["grid"]["height"] == 8

    def test_missing_equals_rejected(self):
        with pytest.raises(InvalidConfig):
            apply_overrides({}, ["grid.height"])

    def test_empty_key_segment_rejected(self):
        with pytest.raises(InvalidConfig):
            apply_overrides({}, ["grid..height=8"])

    def test_descending_into_scalar_rejected(self):
        with pytest.raises(InvalidConfig):
            apply_overrides({"grid": 5}, ["grid.height=8"])


class TestRunConfigParsing:
    def test_defaults_fill_missing_sections(self, tmp_path):
        cfg = from_dict(scene_doc(tmp_path / "out"))
        assert cfg.grid_height == 32 and cfg.grid_width == 32
        assert cfg.window.input_len == 24
        assert cfg.val_fraction == 0.2
        assert cfg.explain_k == 10000
        assert cfg.n_bins == 10
        assert cfg.heatmap_range is None
        assert cfg.enabled.cnn_lstm and cfg.enabled.gbdt and cfg.enabled.lasso

    def test_source_must_be_exactly_one(self, tmp_path):
        doc = scene_doc(tmp_path / "out")
        doc["paths"]["input_csv"] = "also.csv"
        with pytest.raises(InvalidConfig, match="exactly one"):
            from_dict(doc)
        with pytest.raises(InvalidConfig, match="exactly one"):
            from_dict({"paths": {"output_dir": str(tmp_path / "out")}})

    def test_output_dir_required(self):
        with pytest.raises(InvalidConfig, match="output_dir"):
            from_dict({"paths": {"input_csv": "points.csv"}})

    def test_model_toggles(self, tmp_path):
        doc = scene_doc(tmp_path / "out")
        doc["models"] = {"cnn_lstm": {"enabled": False},
                         "gbdt": {"max_depth": 3}}
        cfg = from_dict(doc)
        assert not cfg.enabled.cnn_lstm
        assert cfg.enabled.gbdt
        assert cfg.gbdt.max_depth == 3

    def test_bad_model_key_named_in_error(self, tmp_path):
        doc = scene_doc(tmp_path / "out")
        doc["models"] = {"gbdt": {"tree_count": 5}}
        with pytest.raises(InvalidConfig, match="models.gbdt"):
            from_dict(doc)

    def test_conv_channels_list_becomes_tuple(self, tmp_path):
        doc = scene_doc(tmp_path / "out")
        doc["models"] = {"cnn_lstm": {"conv_channels": [8, 16]}}
        cfg = from_dict(doc)
        assert cfg.cnn_lstm.conv_channels == (8, 16)

    def test_from_file_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        write_config(path, scene_doc(tmp_path / "out"))
        cfg = from_file(path)
        assert cfg.scene is not None
        assert cfg.scene.n_points == 12

    def test_from_file_missing(self, tmp_path):
        with pytest.raises(InvalidConfig, match="not found"):
            from_file(tmp_path / "absent.json")
