import pytest

from sigode.config import ConfigError, load_generate_config, load_train_config, read_kv


class TestKVReader:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# comment\nepochs = 12\nlearning_rate=0.01  # inline\n\n")
        assert read_kv(path) == {"epochs": "12", "learning_rate": "0.01"}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just words\n")
        with pytest.raises(ConfigError, match="key = value"):
            read_kv(path)

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("epochs = 1\nepochs = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            read_kv(path)


class TestTrainConfig:
    def test_overrides_and_types(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("epochs = 7\nlearning_rate = 0.005\ndynamics_hidden = 16,16\n"
                        "sample_noise = false\n")
        cfg = load_train_config(path)
        assert cfg.epochs == 7
        assert cfg.learning_rate == 0.005
        assert cfg.dynamics_hidden == (16, 16)
        assert cfg.sample_noise is False

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("learning_rte = 0.01\n")
        with pytest.raises(ConfigError, match="learning_rte"):
            load_train_config(path)

    def test_cli_override_wins(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("seed = 4\n")
        assert load_train_config(path, seed=9).seed == 9

    def test_defaults_without_file(self):
        cfg = load_train_config(None)
        assert cfg.train_window == 128


class TestGenerateConfig:
    def test_survival_and_profile_overrides(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("t_opt = 26.0\nbeta = 40.0\nrh_mean = 90.0\n")
        params, profile = load_generate_config(path)
        assert params.cardinals.t_opt == 26.0
        assert params.beta == 40.0
        assert profile.rh_mean == 90.0
        # untouched values keep their defaults
        assert params.alpha == 32.6
        assert profile.t_mean == 25.0

    def test_invalid_cardinals_rejected(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("t_opt = 10.0\n")
        with pytest.raises(ValueError):
            load_generate_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "gen.cfg"
        path.write_text("humidity = 3\n")
        with pytest.raises(ConfigError, match="humidity"):
            load_generate_config(path)

    def test_no_file_gives_defaults(self):
        params, profile = load_generate_config(None)
        assert params.gamma == 1.76
        assert profile.cm_spell_days == 28.0
