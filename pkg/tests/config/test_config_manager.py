"""
Unit tests for the configuration manager.
"""
import pytest
import yaml

from app.config.config_manager import DEFAULT_CONFIG, ConfigError, ConfigManager
from app.core.sim_harness import SimConfig


class TestConfigManager:
    """Loading, merging and converting configuration sections."""

    @pytest.fixture
    def config_path(self, tmp_path):
        return tmp_path / "config.yaml"

    def test_defaults_without_file(self, config_path):
        manager = ConfigManager(str(config_path))

        assert manager.get_config() == DEFAULT_CONFIG
        assert manager.get_config("solver")["kind"] == "builtin"
        assert manager.get_config("missing") == {}

    def test_user_values_are_merged(self, config_path):
        config_path.write_text(yaml.safe_dump({"executor": {"tick_period": 0.25},
                                               "solver": {"node_budget": 10}}))

        manager = ConfigManager(str(config_path))

        assert manager.get_config("executor")["tick_period"] == 0.25
        assert manager.get_config("executor")["feedback_period"] == 0.5
        assert manager.get_solver_spec().node_budget == 10

    def test_defaults_are_not_shared(self, config_path):
        ConfigManager(str(config_path)).set_config("hub", "port", 1)
        assert ConfigManager(str(config_path)).get_config("hub")["port"] == 47600

    def test_invalid_yaml(self, config_path):
        config_path.write_text("executor: [unclosed\n")
        with pytest.raises(ConfigError):
            ConfigManager(str(config_path))

    def test_empty_file(self, config_path):
        config_path.write_text("")
        assert ConfigManager(str(config_path)).get_config() == DEFAULT_CONFIG

    def test_save_and_reload(self, tmp_path):
        path = tmp_path / "nested" / "config.yaml"
        manager = ConfigManager(str(path))
        manager.set_config("simulation", "robots", 3)

        assert manager.save_config()
        assert ConfigManager(str(path)).get_config("simulation")["robots"] == 3

    def test_executor_config(self, config_path):
        config_path.write_text(yaml.safe_dump({"executor": {"action_wait_timeout": 30},
                                               "auction": {"retry_interval": 2}}))

        config = ConfigManager(str(config_path)).get_executor_config()

        assert config.action_wait_timeout == 30.0
        assert config.retry_interval == 2.0
        assert config.solver.kind == "builtin"

    def test_bad_executor_values(self, config_path):
        config_path.write_text(yaml.safe_dump({"executor": {"tick_period": -1}}))
        with pytest.raises(ConfigError, match="Invalid executor configuration"):
            ConfigManager(str(config_path)).get_executor_config()

    def test_unsupported_protocol(self, config_path):
        config_path.write_text(yaml.safe_dump({"auction": {"protocol_version": "PS2A2"}}))
        with pytest.raises(ConfigError, match="protocol"):
            ConfigManager(str(config_path)).get_executor_config()

    def test_sim_config_overrides(self, config_path):
        config_path.write_text(yaml.safe_dump({"simulation": {"robots": 2, "seed": 9}}))
        manager = ConfigManager(str(config_path))

        cfg = manager.get_sim_config(robots=None, horizon=100.0)

        assert isinstance(cfg, SimConfig)
        assert cfg.robots == 2
        assert cfg.seed == 9
        assert cfg.horizon == 100.0

    def test_bad_sim_values(self, config_path):
        manager = ConfigManager(str(config_path))
        with pytest.raises(ConfigError):
            manager.get_sim_config(robots=7)
