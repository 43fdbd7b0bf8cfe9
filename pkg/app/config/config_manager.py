"""
Configuration management for planexec.
"""
import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml

from app.core.executor import ExecutorConfig
from app.core.sim_harness import SimConfig
from app.models.plan import SolverSpec

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    "executor": {
        "tick_period": 0.1,
        "action_wait_timeout": None,
        "feedback_period": 0.5,
        "event_log": None,
    },
    "auction": {
        "retry_interval": 1.0,
        "protocol_version": "PS2A1",
    },
    "solver": {
        "kind": "builtin",
        "node_budget": 200000,
        "timeout": 15.0,
        "executable": None,
        "arguments": ["{domain}", "{problem}"],
        "output": None,
        "dialect": "auto",
    },
    "hub": {
        "transport": "inprocess",
        "group": "127.0.0.1",
        "port": 47600,
        "log_file": None,
    },
    "simulation": {
        "robots": 1,
        "profile": "sim",
        "horizon": 2000.0,
        "seed": 42,
        "battery_period": 600.0,
    },
    "logging": {
        "level": "WARNING",
        "file": None,
    },
}


class ConfigError(Exception):
    """A configuration value is missing or invalid."""
    pass


class ConfigManager:
    """
    Manages configuration settings for planexec.
    """
    def __init__(self, config_file: Optional[str] = None):
        self.config = copy.deepcopy(DEFAULT_CONFIG)

        if config_file:
            self.config_file = config_file
        else:
            home_dir = os.path.expanduser("~")
            self.config_file = os.path.join(home_dir, ".planexec", "config.yaml")

        if os.path.exists(self.config_file):
            self._load_config()

    def _load_config(self) -> None:
        """
        Load configuration from the config file.

        Raises:
            ConfigError: If the file is not valid YAML or not a mapping.
        """
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                user_config = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Could not load config file {self.config_file}: {e}") from e
        if user_config is None:
            return
        if not isinstance(user_config, dict):
            raise ConfigError(f"{self.config_file} must contain a mapping of sections")
        self._merge_config(self.config, user_config)
        logger.debug(f"Loaded configuration from {self.config_file}")

    def _merge_config(self, default: Dict[str, Any], user: Dict[str, Any]) -> None:
        """
        Merge user configuration with default configuration.

        Args:
            default: The default configuration dictionary.
            user: The user configuration dictionary.
        """
        for key, value in user.items():
            if key in default and isinstance(default[key], dict) and isinstance(value, dict):
                self._merge_config(default[key], value)
            else:
                default[key] = value

    def save_config(self) -> bool:
        """
        Save the current configuration to the config file.

        Returns:
            True if successful, False otherwise.
        """
        try:
            config_dir = os.path.dirname(self.config_file)
            if config_dir:
                os.makedirs(config_dir, exist_ok=True)
            with open(self.config_file, "w", encoding="utf-8") as f:
                yaml.safe_dump(self.config, f, default_flow_style=False)
            return True
        except OSError as e:
            logger.error(f"Error saving config: {e}")
            return False

    def get_config(self, section: Optional[str] = None) -> Any:
        """
        Get configuration settings.

        Args:
            section: Optional section name to get. If None, returns the entire config.

        Returns:
            The requested configuration section or the entire config.
        """
        if section:
            return self.config.get(section, {})
        return self.config

    def set_config(self, section: str, key: str, value: Any) -> None:
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def get_solver_spec(self) -> SolverSpec:
        solver = self.get_config("solver")
        try:
            return SolverSpec(
                kind=solver.get("kind", "builtin"),
                executable=solver.get("executable"),
                arguments=tuple(solver.get("arguments") or ("{domain}", "{problem}")),
                output=solver.get("output"),
                dialect=solver.get("dialect", "auto"),
                timeout=float(solver.get("timeout", 15.0)),
                node_budget=int(solver.get("node_budget", 200000)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid solver configuration: {e}") from e

    def get_executor_config(self) -> ExecutorConfig:
        executor = self.get_config("executor")
        auction = self.get_config("auction")
        protocol = auction.get("protocol_version", "PS2A1")
        if protocol != "PS2A1":
            raise ConfigError(f"Unsupported protocol version '{protocol}'")
        timeout = executor.get("action_wait_timeout")
        try:
            return ExecutorConfig(
                solver=self.get_solver_spec(),
                tick_period=float(executor.get("tick_period", 0.1)),
                action_wait_timeout=float(timeout) if timeout is not None else None,
                feedback_period=float(executor.get("feedback_period", 0.5)),
                retry_interval=float(auction.get("retry_interval", 1.0)),
                event_log=executor.get("event_log"),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid executor configuration: {e}") from e

    def get_sim_config(self, **overrides: Any) -> SimConfig:
        """
        Simulation settings from the config file, with keyword overrides
        (None values are ignored so CLI options can be passed straight through).
        """
        sim = self.get_config("simulation")
        executor = self.get_executor_config()
        values: Dict[str, Any] = {
            "robots": int(sim.get("robots", 1)),
            "profile": sim.get("profile", "sim"),
            "horizon": float(sim.get("horizon", 2000.0)),
            "seed": int(sim.get("seed", 42)),
            "battery_period": sim.get("battery_period", 600.0),
            "tick_period": executor.tick_period,
            "feedback_period": executor.feedback_period,
            "retry_interval": executor.retry_interval,
            "hub_log": self.get_config("hub").get("log_file"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SimConfig(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid simulation configuration: {e}") from e


# Create a global instance for easy access
_config_manager: Optional[ConfigManager] = None


def get_config_manager(config_file: Optional[str] = None) -> ConfigManager:
    """
    Get the global ConfigManager instance. Passing a file replaces it.

    Returns:
        The ConfigManager instance.
    """
    global _config_manager
    if _config_manager is None or config_file is not None:
        _config_manager = ConfigManager(config_file)
    return _config_manager
