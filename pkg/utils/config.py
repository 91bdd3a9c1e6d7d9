"""Run configuration: constants, overridden by a JSON config file, overridden by CLI flags."""
import json
import logging
import os

from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)

CONFIG_SECTIONS = {
    "gateway": ("cores", "freq_levels_mhz", "t_ambient_c", "t_limit_c", "hysteresis_c", "heat_rate",
                "cool_rate", "power_exponent", "contention", "base_job_work", "duration_jitter",
                "mem_base", "mem_per_job", "t_initial_c"),
    "workload": ("mode", "total_jobs", "seed", "parallelism", "inter_arrival_s", "arrival"),
    "remote": ("service_time_s", "rtt_s", "base_url", "connect_timeout_ms", "request_timeout_ms", "fallback"),
    "experiment": ("strategies", "dt_s", "max_time_s", "acceptance_path", "sample_period_ms", "smoothing_alpha"),
}


class ConfigError(EdgeflowError):
    pass


def load_config(path=None) -> dict:
    """Read a config document; every section is optional, unknown keys are rejected"""
    config = {section: {} for section in CONFIG_SECTIONS}
    if path is None:
        return config
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e.msg} at line {e.lineno} column {e.colno}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be an object")

    for section, values in data.items():
        if section not in CONFIG_SECTIONS:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(values, dict):
            raise ConfigError(f"config section '{section}' must be an object")
        for key in values:
            if key not in CONFIG_SECTIONS[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
        config[section].update(values)
    logger.debug("loaded config %s", path)
    return config


def env_setting(name, default=None):
    """EDGEFLOW_* environment setting (a .env file is loaded at start-up)"""
    value = os.getenv(f"EDGEFLOW_{name}")
    return value if value not in (None, "") else default


def load_acceptance(path) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot load acceptance thresholds from {path}: {e}")
