"""
Use cases for evaluation and reporting
"""
import json
from pathlib import Path

import pandas as pd
import torch

from core.environment.config import Settings
from core.exceptions import DatasetError
from core.logger import logger
from core.runtime import resolve_device
from evaluation.entities import EvalResult, EvaluationConfig
from evaluation.plots import plot_dice_by_experiment, plot_dice_vs_fraction, plot_self_training
from evaluation.repositories import ReportRepository
from evaluation.services import evaluate_model
from nets.repositories import load_checkpoint
from nets.segmentation import SegmentationModel
from nets.services import capture_attention, most_confident_heads
from phantoms.entities import Volume
from phantoms.services import split_hemispheres
from segmentation.services import fit_volume, grid_dims, predict_volume

ATTENTION_NAME = "attention_confidence.json"


def attention_summary(model: SegmentationModel, v: Volume, top: int, device) -> list[dict]:
    """Most confident heads on the left hemisphere of `v`"""
    half = split_hemispheres(v)[0]
    fitted = fit_volume(half, grid_dims(half.dims, model.cfg.downsampling))
    x = torch.from_numpy(fitted.data)[None, None].to(device)
    return [h.model_dump() for h in most_confident_heads(capture_attention(model, x), top)]


def emit_report(
    results: list[EvalResult],
    out_dir: Path,
    self_training: list[dict] | None = None,
) -> list[Path]:
    """
    Write metrics CSV, JSON summary and figures for a set of experiments

    Returns:
        Every written file
    """
    if not results:
        raise DatasetError("a report needs at least one evaluation result")
    out_dir = Path(out_dir)
    written = list(ReportRepository(out_dir).save(results))
    written.append(plot_dice_by_experiment(results, out_dir / "dice_by_experiment.png"))
    fraction_plot = plot_dice_vs_fraction(results, out_dir / "dice_vs_fraction.png")
    if fraction_plot is not None:
        written.append(fraction_plot)
    if self_training:
        written.append(plot_self_training(self_training, out_dir / "self_training.png"))
    logger.info(f"📈 Report with {len(results)} experiments written to {out_dir}")
    return written


class EvaluateCheckpointUseCase:
    """Score a segmentation checkpoint on labelled test volumes"""

    def __init__(self, settings: Settings):
        self.settings = settings

    def execute(
        self,
        checkpoint: Path,
        volumes: list[Volume],
        experiment: str,
        cfg: EvaluationConfig = EvaluationConfig(),
        out_dir: Path | None = None,
        metadata: dict | None = None,
    ) -> EvalResult:
        device = resolve_device(self.settings)
        model, _ = load_checkpoint(checkpoint, "segmentation")
        model = model.to(device).eval()
        metadata = {"checkpoint": str(checkpoint), "variant": model.variant.value, **(metadata or {})}

        result = evaluate_model(
            lambda v: predict_volume(model, v, device),
            volumes,
            experiment,
            threshold=cfg.threshold,
            metadata=metadata,
        )
        if out_dir is not None:
            out_dir = Path(out_dir)
            ReportRepository(out_dir).save([result])
            heads = attention_summary(model, volumes[0], cfg.attention_top, device)
            (out_dir / ATTENTION_NAME).write_text(json.dumps(heads, indent=2))
        return result


class EmitReportUseCase:
    """Merge evaluation directories into one report"""

    def execute(self, in_dirs: list[Path], out_dir: Path, self_training_csv: Path | None = None) -> list[Path]:
        results = [r for d in in_dirs for r in ReportRepository(d).load()]
        self_training = None
        if self_training_csv is not None and Path(self_training_csv).exists():
            self_training = pd.read_csv(self_training_csv).to_dict("records")
        return emit_report(results, out_dir, self_training)
