"""INI configuration: one file drives the whole twin-experiment pipeline.

Sections: [case] geometry of the synthetic reach, [scenario] the truth
control and event hydrograph, [plan] observation times and swaths,
[noise] observation error settings, [enkf] ensemble and cycling settings,
[paths] where the pipeline stages read and write. Any key can be
overridden on the command line with ``--set section.key=value``.
Times are given in hours or days as the key names say; everything is
converted to seconds internally.
"""

from __future__ import annotations

import configparser
from pathlib import Path

DAY = 86400.0
HOUR = 3600.0

DEFAULTS = {
    "case": {
        "nx": "240",
        "ny": "48",
        "dx": "25.0",
        "slope": "5e-4",
        "channel_width": "150.0",
        "channel_depth": "3.0",
        "sinuosity_amplitude": "150.0",
        "sinuosity_wavelength": "1500.0",
        "cross_slope": "2.5e-3",
        "z_datum": "10.0",
        "n_zones": "3",
        "n_subdomains": "4",
        "station_fractions": "0.10, 0.50, 0.90",
    },
    "scenario": {
        "true_ks": "34.0, 26.0, 31.0",
        "true_q_mult": "1.3",
        "true_dh": "0.0, 0.0, 0.0, 0.0",
        "duration_days": "10.0",
        "spinup_hours": "12.0",
        "hydrograph_days": "0.0, 1.5, 4.0, 5.5, 8.0, 10.0",
        "hydrograph_flows": "250.0, 250.0, 900.0, 450.0, 260.0, 250.0",
        "rating_a": "auto",
        "rating_h0": "0.0",
        "rating_b": "1.6666666666666667",
        "eval_times_days": "4.0, 7.0",
    },
    "plan": {
        "gauge_interval_hours": "1.0",
        "s1_days": "1.0, 2.5, 4.0, 5.5, 7.5",
        "swot_days": "1.5, 3.0, 4.5, 6.0, 7.5, 9.0",
        "swot_swaths": "left, right, left, right, left, right",
        "node_spacing": "200.0",
    },
    "noise": {
        "sigma_gauge": "0.02",
        "sigma_g_wsr": "0.2",
        "sigma_open": "0.5",
        "sigma_near": "1.0",
        "sigma_dark": "2.0",
        "dark_fraction": "0.05",
        "n_min_pixels": "9",
    },
    "enkf": {
        "n_members": "20",
        "cycle_hours": "6.0",
        "inflation": "1.0",
        "seed": "42",
        "obs_seed": "7",
        "workers": "1",
        "ks_prior_mean": "30.0",
        "ks_prior_std": "3.0",
        "q_prior_mean": "1.0",
        "q_prior_std": "0.15",
        "dh_prior_std": "0.25",
    },
    "paths": {
        "case_dir": "osse/case",
        "truth_dir": "osse/truth",
        "obs_dir": "osse/obs",
        "runs_dir": "osse/runs",
    },
}


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=()):
    """Defaults, optionally updated from an INI file, then from overrides."""
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_dict(DEFAULTS)
    if path is not None:
        read = cfg.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        section, key = section.strip(), key.strip()
        if section not in cfg or key not in cfg[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        cfg[section][key] = value.strip()
    return cfg


def write_default_config(path):
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_dict(DEFAULTS)
    with open(path, "w") as f:
        cfg.write(f)


def floats(text):
    return [float(v) for v in text.split(",") if v.strip() != ""]


def words(text):
    return [v.strip() for v in text.split(",") if v.strip() != ""]
