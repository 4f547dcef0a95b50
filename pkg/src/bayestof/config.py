"""Shared run configuration: defaults, YAML loading, hashing and builders."""
from __future__ import annotations

import copy
import hashlib
import json
from functools import lru_cache

import numpy as np
import yaml

from . import curves as cv
from .inference import InferenceSettings
from .model import NoiseParams, PriorBox


class ConfigError(ValueError):
    pass


# keys every user config file must provide (prior and noise block)
REQUIRED_KEYS = ("t_range", "rho_range", "lambda_range", "delta_t2", "rho2_beta", "alpha", "K")

DEFAULTS = {
    "t_range": [50.0, 500.0],
    "rho_range": [0.1, 1.5],
    "lambda_range": [0.0, 1.0],
    "delta_t2": 150.0,
    "rho2_beta": [1.0, 5.0],
    "alpha": 1.0,
    "K": 50.0,
    "seed": 0,
    "workers": 0,
    "pulse": {"rise": 4.0, "plateau": 4.0, "fall": 10.0, "amplitude": 4.0e5, "grid_step": 0.05},
    "catalog": {"delays": {"start": 0.0, "stop": 48.0, "step": 2.0},
                "widths": [4.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0]},
    "curves": {"degree": 16, "valid_range": [50.0, 650.0], "grid_step": 1.0, "ambient_gain": 1.0},
    # default exposure profile: one (delay, width, pulses) entry list per channel
    "default_design": [
        [[0.0, 64.0, 250]],
        [[4.0, 16.0, 250]],
        [[16.0, 16.0, 250]],
        [[28.0, 16.0, 250]],
    ],
    "inference": {"restarts_sp": 10, "restarts_tp": 15, "barrier": 1e-2, "gtol": 1e-6,
                  "ess_threshold": 100.0, "max_samples": 20000, "gamma_draws": 64},
    "tree": {"depth": 16, "leaf": "quadratic", "samples": 200000, "forest": 0,
             "method": "mle"},
    "design": {"K_shutter": 1000, "K_sparsity": 4, "channels": 4, "T_start": 20.0,
               "T_final": 0.01, "iterations": 400, "K_mc": 256, "loss": "squared",
               "estimator": "mle", "restarts": 3, "beta_mix": 1.0,
               "catalog": {"delays": {"start": 0.0, "stop": 48.0, "step": 4.0},
                           "widths": [8.0, 16.0, 32.0, 64.0]}},
    "scene": {"width": 32, "height": 24, "fov_deg": 74.0, "object_distance": 250.0,
              "wall_offset": 175.0, "object_reflectivity": 0.6, "wall_reflectivity": 0.9,
              "wall_gain": 2.0, "ambient": 0.2},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=None) -> dict:
    """Resolved configuration; a user file must carry the prior/noise keys."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError("config file must contain a mapping")
        for key in REQUIRED_KEYS:
            if key not in user:
                raise ConfigError(f"missing config key: {key}")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config key: {sorted(unknown)[0]}")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg):
    for key in ("t_range", "rho_range", "lambda_range"):
        lo, hi = cfg[key]
        if not lo < hi:
            raise ConfigError(f"{key} must be an increasing pair")
    if cfg["K"] <= 0 or cfg["alpha"] < 0:
        raise ConfigError("noise needs alpha >= 0 and K > 0")
    lo, hi = cfg["curves"]["valid_range"]
    if cfg["t_range"][0] < lo or cfg["t_range"][1] + cfg["delta_t2"] > hi:
        raise ConfigError("curves.valid_range must cover t_range extended by delta_t2")


def dump_config(cfg) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)


def config_hash(cfg) -> str:
    # the worker count never changes results, so it stays out of the hash
    body = {k: v for k, v in cfg.items() if k != "workers"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# -- builders ------------------------------------------------------------------------

def priors_from(cfg) -> PriorBox:
    return PriorBox.from_ranges(cfg["t_range"], cfg["rho_range"], cfg["lambda_range"],
                                cfg["delta_t2"], cfg["rho2_beta"])


def noise_from(cfg) -> NoiseParams:
    return NoiseParams(float(cfg["alpha"]), float(cfg["K"]))


def settings_from(cfg) -> InferenceSettings:
    c = cfg["inference"]
    return InferenceSettings(barrier=c["barrier"], restarts_sp=c["restarts_sp"],
                             restarts_tp=c["restarts_tp"], gtol=c["gtol"],
                             ess_threshold=c["ess_threshold"], max_samples=c["max_samples"],
                             gamma_draws=c["gamma_draws"])


def pulse_from(cfg) -> cv.PulseProfile:
    p = cfg["pulse"]
    return cv.PulseProfile.trapezoid(p["rise"], p["plateau"], p["fall"], p["amplitude"],
                                     p["grid_step"])


def catalog_from(spec) -> list:
    d = spec["delays"]
    if isinstance(d, dict):
        delays = np.arange(d["start"], d["stop"] + 0.5 * d["step"], d["step"])
    else:
        delays = np.asarray(d, dtype=float)
    if len(delays) == 0 or len(spec["widths"]) == 0:
        raise ConfigError("boxcar catalog is empty")
    return cv.boxcar_catalog(delays, spec["widths"])


def depth_grid(cfg):
    c = cfg["curves"]
    lo, hi = c["valid_range"]
    k = int(round((hi - lo) / c["grid_step"]))
    return np.linspace(lo, hi, k + 1)


def basis_from(cfg, catalog_spec=None) -> cv.BasisSet:
    cat = catalog_from(catalog_spec or cfg["catalog"])
    return cv.BasisSet.build(cat, pulse_from(cfg), depth_grid(cfg), cfg["curves"]["ambient_gain"])


def design_from_entries(basis: cv.BasisSet, channels) -> np.ndarray:
    """Design matrix from per-channel ``(delay, width, pulses)`` lists."""
    index = {(b.delay, b.width): j for j, b in enumerate(basis.catalog)}
    Z = np.zeros((basis.m, len(channels)), dtype=np.int64)
    for k, entries in enumerate(channels):
        for delay, width, count in entries:
            key = (float(delay), float(width))
            if key not in index:
                raise ConfigError(f"design element {key} is not in the catalog")
            Z[index[key], k] += int(count)
    return Z


def curves_from(cfg, Z=None, basis=None) -> cv.ResponseCurveSet:
    basis = basis_from(cfg) if basis is None else basis
    if Z is None:
        Z = design_from_entries(basis, cfg["default_design"])
    c = cfg["curves"]
    return cv.compose_curves(basis, Z, c["degree"], tuple(c["valid_range"]))


@lru_cache(maxsize=4)
def _default_curves_cached():
    return curves_from(DEFAULTS)


def default_curves() -> cv.ResponseCurveSet:
    """Curves of the default pulse, catalog and exposure profile."""
    return _default_curves_cached()
