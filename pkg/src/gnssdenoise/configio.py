"""Flat key=value configuration files for model and training settings.

Format: one ``key = value`` pair per line; ``#`` starts a comment;
blank lines are ignored. Values are coerced to the type of the field
they override (int, float, bool, str). Keys that name no known field,
or fields derived from the dataset (station count, window length),
are rejected with the offending line number.
"""

from __future__ import annotations

import dataclasses

from .network import ModelConfig
from .training import TrainConfig

__all__ = ["parse_kv_file", "resolve_configs", "DATASET_DERIVED_KEYS"]

# these come from the dataset at hand, never from a config file
DATASET_DERIVED_KEYS = ("n_stations", "n_components", "window")

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_kv_file(path: str) -> dict[str, str]:
    """Read a flat key=value file into an ordered string dict."""
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(
                    f"{path}:{lineno}: expected 'key = value', "
                    f"got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if not key or not value:
                raise ValueError(
                    f"{path}:{lineno}: empty key or value in "
                    f"{raw.strip()!r}")
            if key in pairs:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            pairs[key] = value
    return pairs


def _coerce(key: str, raw: str, target_type: type):
    if target_type is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"config key {key!r}: {raw!r} is not a boolean")
    try:
        return target_type(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: {raw!r} is not a valid "
                         f"{target_type.__name__}") from exc


def _field_types(cls) -> dict[str, type]:
    # coercion targets come from the defaults, which every overridable
    # field carries
    return {f.name: type(f.default) for f in dataclasses.fields(cls)
            if f.default is not dataclasses.MISSING}


def resolve_configs(pairs: dict[str, str], n_stations: int,
                    window: int = 60,
                    n_components: int = 2) -> tuple[ModelConfig, TrainConfig]:
    """Build (ModelConfig, TrainConfig) from defaults plus overrides.

    ``pairs`` is the dict from :func:`parse_kv_file` (or assembled by a
    caller); shared keys (``ablation``, ``seed`` has none) apply to every
    config that defines them.
    """
    model_types = _field_types(ModelConfig)
    train_types = _field_types(TrainConfig)
    model_kwargs = {}
    train_kwargs = {}
    unknown = []
    for key, raw in pairs.items():
        if key in DATASET_DERIVED_KEYS:
            raise ValueError(
                f"config key {key!r} is derived from the dataset and "
                f"cannot be set in a config file")
        hit = False
        if key in model_types:
            model_kwargs[key] = _coerce(key, raw, model_types[key])
            hit = True
        if key in train_types:
            train_kwargs[key] = _coerce(key, raw, train_types[key])
            hit = True
        if not hit:
            unknown.append(key)
    if unknown:
        known = sorted((set(model_types) | set(train_types))
                       - set(DATASET_DERIVED_KEYS))
        raise ValueError(f"unknown config keys {unknown}; known keys: "
                         f"{', '.join(known)}")
    model_config = ModelConfig(n_stations=n_stations, window=window,
                               n_components=n_components, **model_kwargs)
    train_config = TrainConfig(**train_kwargs)
    return model_config, train_config
