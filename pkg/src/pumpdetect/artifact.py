"""Model artifact files: the trained model plus the pipeline geometry it expects."""

from __future__ import annotations

import json
import os
from typing import Any

from .core import PipelineConfig, PipelineError
from .models import Model, model_from_dict
from .tradeio import atomic_write_text

ARTIFACT_VERSION = 1


class ConfigMismatchError(PipelineError, ValueError):
    pass


def artifact_dict(model: Model, config: PipelineConfig) -> dict[str, Any]:
    return {"format_version": ARTIFACT_VERSION, "pipeline": config.to_dict(), "model": model.to_dict()}


def dumps_artifact(model: Model, config: PipelineConfig) -> str:
    return json.dumps(artifact_dict(model, config), sort_keys=True, indent=1) + "\n"


def save_artifact(path: str | os.PathLike, model: Model, config: PipelineConfig) -> None:
    atomic_write_text(path, dumps_artifact(model, config))


def load_artifact(path: str | os.PathLike) -> tuple[Model, PipelineConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != ARTIFACT_VERSION:
        raise ValueError(f"unsupported artifact version {doc.get('format_version')!r}")
    return model_from_dict(doc["model"]), PipelineConfig.from_dict(doc["pipeline"])


def check_compatible(trained: PipelineConfig, runtime: PipelineConfig) -> None:
    """Chunk and window geometry must match; the cooldown may differ."""
    for name in ("chunk_seconds", "window_seconds", "window_includes_current", "rush_min_fills"):
        a, b = getattr(trained, name), getattr(runtime, name)
        if a != b:
            raise ConfigMismatchError(f"model trained with {name}={a}, replay configured with {b}")
