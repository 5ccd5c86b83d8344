# SPDX-License-Identifier: Apache-2.0
"""Python access to the infosieve library."""

import json

from ._infosieve import (
    __version__,
    gcd_accuracy,
    gen_dataset,
    hungarian,
    is_valid_encoding,
    kmeans,
    oracle,
    run_cli,
    ss_kmeans,
)
from . import _infosieve


def default_config(published=False):
    """Run configuration as a dict; published=True gives the published profile."""
    text = _infosieve.published_config_json() if published else _infosieve.default_config_json()
    return json.loads(text)


def train(config=None, **overrides):
    """Train with `config` (a dict, default profile if None) updated by keyword overrides."""
    cfg = default_config() if config is None else dict(config)
    cfg.update(overrides)
    result = _infosieve.train_json(json.dumps(cfg))
    result["metrics"] = json.loads(result.pop("metrics_json"))
    return result


__all__ = [
    "__version__",
    "default_config",
    "gcd_accuracy",
    "gen_dataset",
    "hungarian",
    "is_valid_encoding",
    "kmeans",
    "oracle",
    "run_cli",
    "ss_kmeans",
    "train",
]
