"""Steerable transformer toolkit: equivariant layers, audits and training."""

from __future__ import annotations

import json
import os
from typing import Any, Mapping, Optional, Union

from . import _core
from ._core import (
    ConfigError,
    FormatError,
    NumericError,
    clebsch_gordan,
    haar_rotation,
    irrep_matrix,
    spherical_harmonics,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "Model",
    "NumericError",
    "audit_equivariance",
    "clebsch_gordan",
    "evaluate",
    "haar_rotation",
    "irrep_matrix",
    "load_config",
    "parse_config",
    "spherical_harmonics",
    "train",
]

ConfigLike = Union[None, str, os.PathLike, Mapping[str, Any]]


def _config_text(config: ConfigLike) -> str:
    # dict, JSON text, or a path to a JSON file
    if config is None:
        return "{}"
    if isinstance(config, Mapping):
        return json.dumps(config)
    text = os.fspath(config)
    if text.lstrip().startswith("{"):
        return text
    with open(text, encoding="utf-8") as f:
        return f.read()


def parse_config(config: ConfigLike = None) -> dict:
    """Validated config with every default filled in."""
    return json.loads(_core.parse_config(_config_text(config)))


load_config = parse_config


def audit_equivariance(
    config: ConfigLike = None,
    target: str = "all",
    mode: str = "point-set",
    samples: Optional[int] = None,
    tolerance: Optional[float] = None,
    seed: Optional[int] = None,
    threads: int = 0,
) -> dict:
    report = _core.audit_equivariance(_config_text(config), target, mode, samples, tolerance, seed, threads)
    return json.loads(report)


def train(config: ConfigLike, out_dir, resume=None, stop_after: int = -1) -> list:
    """Trains and returns per-epoch metrics; writes metrics.csv and checkpoint.stck."""
    return _core.train(_config_text(config), os.fspath(out_dir), os.fspath(resume or ""), stop_after)


def evaluate(checkpoint, config: ConfigLike = None) -> dict:
    text = None if config is None else _config_text(config)
    return _core.evaluate(os.fspath(checkpoint), text)


class Model:
    """Classifier with eval-mode inference and attention maps."""

    def __init__(self, config: ConfigLike = None, seed: Optional[int] = None, *, _core_model=None):
        self._m = _core_model if _core_model is not None else _core.Model(_config_text(config), seed)

    @classmethod
    def load(cls, checkpoint) -> "Model":
        return cls(_core_model=_core.Model.load(os.fspath(checkpoint)))

    @property
    def num_parameters(self) -> int:
        return self._m.num_parameters

    @property
    def classes(self) -> int:
        return self._m.classes

    def logits(self, images):
        return self._m.logits(images)

    def predict(self, images):
        return self.logits(images).argmax(axis=1)

    def attention_maps(self, image, layer: int = 0) -> list:
        return self._m.attention_maps(image, layer)
