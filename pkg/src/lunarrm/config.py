"""Pipeline configuration: loading, validation and the provenance-annotated echo.

Key tree (TOML or JSON)::

    workers = 1
    [terrain]      # any TerrainGenConfig field
    [propagation]  frequencies, tx_policy, tx_per_terrain, tx_height, rx_height,
                   rel_permittivity, conductivity, clip_range_db, two_ray, max_edges
    [dataset]      n_terrains, base_seed, seeds, output, split_fractions,
                   highpass_sigma, paper_mode
    [k2]           epsilon_floor
    [metrics]      pooled

Environment overrides: ``LUNARRM_OUTPUT_ROOT`` (prefix for relative output
paths) and ``LUNARRM_WORKERS``.
"""

import copy
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from .propagation import PAPER_FREQUENCIES
from .terrain import TerrainGenConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


PAPER = "paper"
NON_PAPER = "non-paper-default"
USER = "user"

DEFAULTS = {
    "workers": 1,
    "terrain": {f.name: f.default for f in fields(TerrainGenConfig)},
    "propagation": {
        "frequencies": list(PAPER_FREQUENCIES),
        "tx_policy": "uniform",
        "tx_per_terrain": 1,
        "tx_height": 2.0,
        "rx_height": 1.0,
        "rel_permittivity": 3.0,
        "conductivity": 1e-4,
        "clip_range_db": [-150.0, -50.0],
        "two_ray": True,
        "max_edges": 3,
    },
    "dataset": {
        "n_terrains": 4,
        "base_seed": 0,
        "seeds": None,
        "output": "dataset.lrdc",
        "split_fractions": [0.8, 0.1, 0.1],
        "highpass_sigma": 8.0,
        "paper_mode": True,
    },
    "k2": {"epsilon_floor": 1e-12},
    "metrics": {"pooled": False},
}

# Values that come straight from the paper rather than from this artifact.
PAPER_KEYS = {("propagation", "frequencies")}


def _merge(base, override, path=()):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(path + (key,))!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{'.'.join(path + (key,))} must be a table")
            out[key] = _merge(base[key], value, path + (key,))
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None, env=None):
    """Read and validate a config file; returns ``(resolved_dict, user_dict)``."""
    env = os.environ if env is None else env
    user = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            user = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if overrides:
        user = _merge_user(user, overrides)
    resolved = _merge(DEFAULTS, user)
    if "LUNARRM_WORKERS" in env:
        try:
            resolved["workers"] = int(env["LUNARRM_WORKERS"])
        except ValueError as exc:
            raise ConfigError("LUNARRM_WORKERS must be an integer") from exc
    root = env.get("LUNARRM_OUTPUT_ROOT")
    if root and not os.path.isabs(resolved["dataset"]["output"]):
        resolved["dataset"]["output"] = os.path.join(root, resolved["dataset"]["output"])
    validate_config(resolved)
    return resolved, user


def _merge_user(user, overrides):
    out = copy.deepcopy(user)
    for key, value in overrides.items():
        if isinstance(value, dict):
            out[key] = _merge_user(out.get(key, {}), value)
        else:
            out[key] = value
    return out


def terrain_config(resolved):
    return TerrainGenConfig(**resolved["terrain"])


def validate_config(resolved):
    try:
        terrain_config(resolved)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"terrain: {exc}") from exc
    prop = resolved["propagation"]
    if not prop["frequencies"]:
        raise ConfigError("propagation.frequencies must not be empty")
    if any(not isinstance(f, (int, float)) or f <= 0 for f in prop["frequencies"]):
        raise ConfigError("propagation.frequencies must be positive numbers")
    if prop["tx_policy"] not in ("uniform", "ridge"):
        raise ConfigError("propagation.tx_policy must be 'uniform' or 'ridge'")
    if int(prop["tx_per_terrain"]) < 1:
        raise ConfigError("propagation.tx_per_terrain must be >= 1")
    lo, hi = prop["clip_range_db"]
    if not lo < hi:
        raise ConfigError("propagation.clip_range_db must be [min, max]")
    ds = resolved["dataset"]
    if ds["seeds"] is None and int(ds["n_terrains"]) < 0:
        raise ConfigError("dataset.n_terrains must be >= 0")
    fr = ds["split_fractions"]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1) > 1e-9:
        raise ConfigError("dataset.split_fractions must be three fractions summing to 1")
    if not resolved["k2"]["epsilon_floor"] > 0:
        raise ConfigError("k2.epsilon_floor must be > 0")
    if int(resolved["workers"]) < 1:
        raise ConfigError("workers must be >= 1")


def terrain_seeds(resolved):
    ds = resolved["dataset"]
    if ds["seeds"] is not None:
        return [int(s) for s in ds["seeds"]]
    return [int(ds["base_seed"]) + k for k in range(int(ds["n_terrains"]))]


def echo_config(resolved, user):
    """Resolved config where every leaf is ``{"value": ..., "provenance": ...}``."""
    def walk(res, usr, path):
        out = {}
        for key, value in res.items():
            here = path + (key,)
            if isinstance(value, dict):
                out[key] = walk(value, (usr or {}).get(key, {}), here)
                continue
            if usr and key in usr:
                prov = USER
            elif here in PAPER_KEYS:
                prov = PAPER
            else:
                prov = NON_PAPER
            out[key] = {"value": value, "provenance": prov}
        return out

    return walk(resolved, user, ())
