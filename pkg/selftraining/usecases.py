"""
Use cases for iterative self-training
"""
from pathlib import Path

import pandas as pd

from core.environment.config import Settings
from core.exceptions import ConfigError, DatasetError
from core.logger import logger
from core.runtime import resolve_device
from nets.repositories import load_checkpoint
from phantoms.entities import Volume
from segmentation.entities import Stage2Config
from segmentation.services import prepare_real_targets
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.entities import IterationMetrics, SelfTrainingConfig, SelfTrainingResult
from selftraining.repositories import PseudoLabelRepository
from selftraining.services import generate_pseudo_labels

METRICS_NAME = "self_training.csv"


class RunSelfTrainingUseCase:
    """
    Alternate pseudo-labelling and fine-tuning for `iterations` rounds

    Labels used in round i come only from the best checkpoint of round i-1
    (the initial checkpoint for round 1) and cover the real target
    hemispheres without a usable annotation.
    """

    def __init__(self, train_segmentation: TrainSegmentationUseCase, settings: Settings):
        self.train_segmentation = train_segmentation
        self.settings = settings

    def execute(
        self,
        stage2: Stage2Config,
        cfg: SelfTrainingConfig,
        checkpoint: Path,
        pseudo_targets: list[Volume],
        real_targets: list[Volume],
        out_dir: Path,
        annotated_target_ids: set[str] | frozenset = frozenset(),
        iterations: int | None = None,
    ) -> SelfTrainingResult:
        iterations = cfg.iterations if iterations is None else iterations
        if iterations < 1:
            raise ConfigError(f"self-training needs at least one iteration, got {iterations}")

        out_dir = Path(out_dir)
        device = resolve_device(self.settings)
        unlabelled = [h for h in prepare_real_targets(real_targets, set(annotated_target_ids)) if h.mask is None]
        if not unlabelled:
            raise DatasetError("every real target volume is annotated, nothing to pseudo-label")

        store = PseudoLabelRepository(out_dir / "pseudo_labels")
        store.reset()
        current = Path(checkpoint)
        metrics: list[IterationMetrics] = []

        for iteration in range(1, iterations + 1):
            model, _ = load_checkpoint(current, "segmentation")
            model = model.to(device)
            labels = generate_pseudo_labels(
                model, unlabelled, cfg.alpha, checkpoint_id=str(current), iteration=iteration - 1, device=device
            )
            store.save(labels)
            logger.info(
                f"🔁 Self-training iteration {iteration}/{iterations}: "
                f"{len(labels.masks)} pseudo-labels from {current.name}, {labels.positive} with tumor"
            )

            result = self.train_segmentation.execute(
                stage2,
                pseudo_targets,
                real_targets,
                out_dir / f"iter_{iteration:02d}",
                annotated_target_ids=annotated_target_ids,
                pseudo_labels=labels.masks,
                init_checkpoint=current,
                epochs=cfg.epochs_per_iteration,
            )
            metrics.append(IterationMetrics(
                iteration=iteration,
                checkpoint_in=str(current),
                checkpoint_out=str(result.best_checkpoint),
                labelled_volumes=len(labels.masks),
                positive_volumes=labels.positive,
                val_dice_before=result.initial_val_dice,
                val_dice_after=result.best_val_dice,
            ))
            pd.DataFrame([m.model_dump() for m in metrics]).to_csv(out_dir / METRICS_NAME, index=False)
            current = result.best_checkpoint

        return SelfTrainingResult(final_checkpoint=current, iterations=metrics, metrics_path=out_dir / METRICS_NAME)
