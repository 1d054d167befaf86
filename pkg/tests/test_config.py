"""Config parsing: defaults, dotted-key overrides, and error reporting."""

import pytest

from mmnets import config as C


def write(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return p


class TestDefaults:
    def test_empty_file_gives_full_defaults(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, ""))
        assert cfg.seed == 0
        assert cfg.arch.stage_widths == (16, 32, 32)
        assert cfg.data.task == "scenes" and cfg.data.k == 8
        assert [s.iterations for s in cfg.stages] == [2000, 2000, 1000]
        assert [s.lr for s in cfg.stages] == [2e-4, 2e-4, 2e-5]
        assert cfg.stages[2].weights.pp == 100
        assert cfg.eval.alpha == 0.2

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "\n# a comment\nseed = 4  # eol\n"))
        assert cfg.seed == 4


class TestOverrides:
    def test_stage_scalar_override(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "stages.1.lr = 0.0002\n"
                                             "stages.2.iterations = 50\n"))
        assert cfg.stages[0].lr == 2e-4
        assert cfg.stages[1].iterations == 50
        assert cfg.stages[2].iterations == 1000     # untouched

    def test_stage_weight_override(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "stages.3.weights.pp = 100\n"))
        assert cfg.stages[2].weights.pp == 100.0

    def test_arch_list_override(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "arch.stage_widths = 8, 16, 32\n"
                                             "arch.convs_per_stage = 1, 1, 1\n"
                                             "arch.input_hw = 16, 16\n"))
        assert cfg.arch.stage_widths == (8, 16, 32)
        assert cfg.arch.input_hw == (16, 16)

    def test_task_switch_builds_opponent(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "data.task = opponent\n"))
        assert cfg.task().names == ("theta1", "theta2", "theta3")

    def test_side_info_feeds_task(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "data.side_info = skip\n"))
        assert cfg.task().mod_b.spec.side_info == "skip"

    def test_bools_and_paths(self, tmp_path):
        cfg = C.parse_config(write(tmp_path, "eval.baselines.no_pp = true\n"
                                             "paths.out_dir = /tmp/run1\n"))
        assert cfg.eval.no_pp is True
        assert cfg.paths.out_dir == "/tmp/run1"


class TestErrors:
    def test_unknown_key_names_line_and_nearest(self, tmp_path):
        path = write(tmp_path, "seed = 1\nstages.3.wieghts.pp = 100\n")
        with pytest.raises(C.ConfigError) as err:
            C.parse_config(path)
        msg = str(err.value)
        assert ":2:" in msg and "stages.3.wieghts.pp" in msg
        assert "stages.3.weights.pp" in msg          # suggestion

    def test_type_mismatch_names_line(self, tmp_path):
        with pytest.raises(C.ConfigError, match=":1:.*seed"):
            C.parse_config(write(tmp_path, "seed = banana\n"))

    def test_missing_equals_rejected(self, tmp_path):
        with pytest.raises(C.ConfigError, match=":1:"):
            C.parse_config(write(tmp_path, "seed 5\n"))

    def test_invalid_stage_value_names_line(self, tmp_path):
        with pytest.raises(C.ConfigError, match=":1:.*iterations"):
            C.parse_config(write(tmp_path, "stages.1.iterations = -5\n"))

    def test_validation_rejects_bad_task(self, tmp_path):
        with pytest.raises(C.ConfigError, match="data.task"):
            C.parse_config(write(tmp_path, "data.task = nonsense\n"))

    def test_validation_rejects_odd_n_train(self, tmp_path):
        with pytest.raises(C.ConfigError, match="n_train"):
            C.parse_config(write(tmp_path, "data.n_train = 7\n"))

    def test_validation_rejects_alpha_out_of_range(self, tmp_path):
        with pytest.raises(C.ConfigError, match="alpha"):
            C.parse_config(write(tmp_path, "eval.alpha = 1.5\n"))
