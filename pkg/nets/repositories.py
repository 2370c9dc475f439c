"""
Checkpoint archives
===================

One `torch.save` file per checkpoint:
    {"manifest": {"family", "cfg", "format_version", "extra"},
     "state": {parameter name: tensor}}

Loading rebuilds the network from the stored config and refuses archives
whose family, format version, parameter names or shapes do not match.
"""
from pathlib import Path
from typing import Any

import torch
import torch.nn as nn
from pydantic import BaseModel

from core.exceptions import CheckpointError
from core.logger import logger
from nets.entities import SegmentationConfig, TranslationModelConfig
from nets.generators import build_translation_model
from nets.segmentation import build_segmentation_model

FORMAT_VERSION = 1

FAMILIES: dict[str, tuple[type[BaseModel], Any]] = {
    "translation": (TranslationModelConfig, build_translation_model),
    "segmentation": (SegmentationConfig, build_segmentation_model),
}


class CheckpointManifest(BaseModel):
    family: str
    cfg: dict
    format_version: int = FORMAT_VERSION
    extra: dict = {}


def save_checkpoint(model: nn.Module, cfg: BaseModel, family: str, path: Path, extra: dict | None = None) -> Path:
    if family not in FAMILIES:
        raise CheckpointError(f"unknown model family {family!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = CheckpointManifest(family=family, cfg=cfg.model_dump(mode="json"), extra=extra or {})
    state = {name: tensor.detach().cpu() for name, tensor in model.state_dict().items()}
    torch.save({"manifest": manifest.model_dump(), "state": state}, path)
    return path


def read_manifest(path: Path) -> CheckpointManifest:
    archive = _read_archive(path)
    return CheckpointManifest(**archive["manifest"])


def _read_archive(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(archive, dict) or {"manifest", "state"} - set(archive):
        raise CheckpointError(f"{path} is not a checkpoint archive")
    return archive


def load_checkpoint(path: Path, family: str) -> tuple[nn.Module, CheckpointManifest]:
    """
    Rebuild a model from its checkpoint

    Raises:
        CheckpointError: family, version, names or shapes disagree
    """
    archive = _read_archive(path)
    manifest = CheckpointManifest(**archive["manifest"])
    if manifest.family != family:
        raise CheckpointError(f"{path} holds a {manifest.family!r} model, expected {family!r}")
    if manifest.format_version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {manifest.format_version}")

    cfg_type, builder = FAMILIES[family]
    model = builder(cfg_type(**manifest.cfg))
    expected = model.state_dict()
    state = archive["state"]

    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise CheckpointError(f"parameter names differ: missing={missing[:5]}, unexpected={unexpected[:5]}")
    shapes = [
        f"{name}: {tuple(state[name].shape)} != {tuple(t.shape)}"
        for name, t in expected.items() if state[name].shape != t.shape
    ]
    if shapes:
        raise CheckpointError(f"parameter shapes differ: {shapes[:5]}")

    model.load_state_dict(state)
    logger.debug(f"Loaded {family} checkpoint {path}")
    return model, manifest
