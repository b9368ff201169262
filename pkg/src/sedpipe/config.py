"""Flat INI run configuration; command-line flags override file values.

Sections mirror the pipeline stages: [pipeline], [clipper], [mixer],
[sampler], [loss], [psds]. All values are scalars.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path


class ConfigError(Exception):
    pass


DEFAULTS = {
    "pipeline": {"sample_rate": 16000, "workers": 1},
    "clipper": {"threshold_db": -20.0, "window_s": 0.10, "hop_s": 0.05,
                "merge_gap_s": 0.20, "min_dur_s": 1.0, "max_dur_s": 7.5},
    "mixer": {"timeline_s": 10.0, "max_events": 5, "repeat_max": 3,
              "repeat_threshold_s": 3.0, "snr_min_db": 12.0, "snr_max_db": 20.0,
              "frames_per_clip": 64},
    "sampler": {"n_phrases": 20, "strict": True},
    "loss": {"t": 10.0, "b": -10.0, "t_frame": 10.0, "b_frame": -10.0},
    "psds": {"dtc": 0.7, "gtc": 0.7, "alpha_st": 1.0, "alpha_ct": 0.0,
             "e_max": 100.0, "n_thresholds": 50},
}


def load_config(path=None) -> dict:
    """Load an INI file over the defaults; unknown keys are rejected."""
    config = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is None:
        return config
    parser = configparser.ConfigParser()
    if not parser.read(Path(path)):
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in config and section != "paths":
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if section == "paths":
                config.setdefault("paths", {})[key] = raw
                continue
            if key == "seed":
                config[section][key] = int(raw)
                continue
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            default = DEFAULTS[section][key]
            if isinstance(default, bool):
                config[section][key] = raw.strip().lower() in ("1", "true", "yes")
            else:
                config[section][key] = type(default)(raw)
    return config


def resolve(config: dict, section: str, key: str, flag_value=None):
    """Flag beats file beats default; environment overrides paths only."""
    if flag_value is not None:
        return flag_value
    if section == "paths":
        env = os.environ.get(f"SEDPIPE_{key.upper()}")
        if env is not None:
            return env
        return config.get("paths", {}).get(key)
    return config.get(section, {}).get(key)
