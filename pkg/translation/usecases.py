"""
Use cases for the translation stage
"""
import json
import sys
import time
from pathlib import Path

import pandas as pd
import torch
from torch.utils.data import DataLoader, RandomSampler
from tqdm import tqdm

from core.environment.config import Settings
from core.exceptions import DatasetError, ShapeMismatchError
from core.logger import logger
from core.runtime import amsgrad, resolve_device, seed_everything, set_requires_grad, torch_generator
from losses.services import translation_loss
from nets.generators import build_translation_model
from nets.repositories import load_checkpoint, save_checkpoint
from phantoms.entities import Volume
from translation.datasets import SliceDataset, augment
from translation.entities import EpochLog, PseudoTargetDataset, Stage1Config, Stage1Result
from translation.repositories import PseudoTargetRepository
from translation.services import (
    cycle_step, discriminator_loss, held_out_metrics, synthesize_volume, translate_fakes
)

LOG_NAME = "stage1_log.csv"
VALIDATION_NAME = "stage1_validation.json"


class TrainTranslationUseCase:
    """
    Train both translation directions on unpaired slices

    Per batch: one discriminator update on fakes produced without
    gradients, then one generator update through the refreshed
    discriminators. A checkpoint is written every epoch and `last.pt`
    always points at the newest state.
    """

    def __init__(self, settings: Settings):
        self.settings = settings

    def execute(
        self,
        cfg: Stage1Config,
        source_volumes: list[Volume],
        target_volumes: list[Volume],
        out_dir: Path,
        annotated_ids: set[str] | None = None,
        validation: list[Volume] | None = None,
    ) -> Stage1Result:
        if not source_volumes or not target_volumes:
            raise DatasetError(
                f"translation needs source and target slices, got {len(source_volumes)} and {len(target_volumes)} volumes"
            )
        out_dir = Path(out_dir)
        seed_everything(cfg.seed, self.settings.deterministic)
        device = resolve_device(self.settings)

        source = SliceDataset(source_volumes, cfg.slice_axis, annotated_ids)
        target = SliceDataset(target_volumes, cfg.slice_axis)
        if source.slice_shape != target.slice_shape:
            raise ShapeMismatchError(f"source slices {source.slice_shape} and target slices {target.slice_shape} differ")
        model_cfg = cfg.model.model_copy(
            update={"generator": cfg.model.generator.model_copy(update={"image_size": source.slice_shape})}
        )
        model = build_translation_model(model_cfg).to(device)
        weights = cfg.weights.to_loss_weights()

        opt_G = amsgrad(model.generator_parameters(), cfg.lr, cfg.betas)
        opt_D = amsgrad(model.discriminator_parameters(), cfg.lr, cfg.betas)

        steps = cfg.steps_per_epoch or max(1, max(len(source), len(target)) // cfg.batch_size)
        logger.info(
            f"🎨 Stage 1: {len(source)} source / {len(target)} target slices, "
            f"{int(source.annotated.sum())} annotated, {cfg.epochs} epochs x {steps} steps on {device}"
        )

        history: list[EpochLog] = []
        checkpoints: list[Path] = []
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            loaders = [
                DataLoader(
                    ds,
                    batch_size=cfg.batch_size,
                    sampler=RandomSampler(
                        ds, replacement=True, num_samples=steps * cfg.batch_size,
                        generator=torch_generator(cfg.seed, epoch, stream),
                    ),
                    num_workers=self.settings.num_workers,
                )
                for stream, ds in enumerate((source, target))
            ]
            aug_generator = torch_generator(cfg.seed, epoch, 2)
            sums = dict.fromkeys(("D", "adv_mod", "cyc", "seg_mod"), 0.0)

            model.train()
            batches = tqdm(
                zip(*loaders), total=steps, desc=f"stage1 epoch {epoch}", leave=False, disable=not sys.stderr.isatty()
            )
            for (x_S, y_S, annotated), (x_T, _, _) in batches:
                if cfg.augmentation:
                    x_S, y_S = augment(x_S, y_S, aug_generator)
                    x_T, _ = augment(x_T, torch.zeros_like(x_T), aug_generator)
                x_S, y_S, annotated, x_T = x_S.to(device), y_S.to(device), annotated.to(device), x_T.to(device)

                fake_S, fake_T = translate_fakes(model, x_S, x_T)
                loss_D = discriminator_loss(model, x_S, x_T, fake_S, fake_T)
                opt_D.zero_grad()
                loss_D.backward()
                opt_D.step()

                set_requires_grad([model.disc_S, model.disc_T], False)
                out = cycle_step(model, x_S, x_T, y_S, annotated)
                terms = dict(out.losses)
                # batches without annotated slices contribute no segmentation signal
                terms.setdefault("seg_mod", torch.zeros((), device=device))
                loss_G = translation_loss(terms, weights)
                opt_G.zero_grad()
                loss_G.backward()
                opt_G.step()
                set_requires_grad([model.disc_S, model.disc_T], True)

                sums["D"] += float(loss_D)
                for name in ("adv_mod", "cyc", "seg_mod"):
                    sums[name] += float(terms[name])

            row = EpochLog(
                epoch=epoch,
                L_adv_mod_D=sums["D"] / steps,
                L_adv_mod_G=sums["adv_mod"] / steps,
                L_cyc=sums["cyc"] / steps,
                L_seg_mod=sums["seg_mod"] / steps,
                wall_time_s=time.perf_counter() - started,
            )
            history.append(row)
            logger.info(
                f"📉 Stage 1 epoch {epoch}: D={row.L_adv_mod_D:.4f} G={row.L_adv_mod_G:.4f} "
                f"cyc={row.L_cyc:.4f} seg={row.L_seg_mod:.4f} ({row.wall_time_s:.1f}s)"
            )

            extra = {"stage": "translation", "epoch": epoch}
            checkpoints.append(save_checkpoint(model, model_cfg, "translation", out_dir / "checkpoints" / f"epoch_{epoch:03d}.pt", extra))
            save_checkpoint(model, model_cfg, "translation", out_dir / "checkpoints" / "last.pt", extra)
            pd.DataFrame([h.model_dump() for h in history]).to_csv(out_dir / LOG_NAME, index=False)

        metrics = {}
        if validation:
            held_out = SliceDataset(validation, cfg.slice_axis)
            metrics = held_out_metrics(
                model, held_out.images.to(device), held_out.masks.to(device), held_out.annotated.to(device)
            )
            logger.info(f"🔎 Stage 1 held-out metrics: {metrics}")
            (out_dir / VALIDATION_NAME).write_text(json.dumps(metrics, indent=2))

        return Stage1Result(
            checkpoint=out_dir / "checkpoints" / "last.pt",
            checkpoints=checkpoints,
            log_path=out_dir / LOG_NAME,
            history=history,
            validation=metrics,
        )


class SynthesizePseudoTargetsUseCase:
    """Render every source volume in the target modality with the last translation state"""

    def __init__(self, settings: Settings):
        self.settings = settings

    def execute(
        self,
        checkpoint: Path,
        source_volumes: list[Volume],
        out_dir: Path | None = None,
        axis: int = 0,
    ) -> PseudoTargetDataset:
        if not source_volumes:
            raise DatasetError("no source volumes to synthesize from")
        model, _ = load_checkpoint(checkpoint, "translation")
        device = resolve_device(self.settings)
        generator = model.generator_st.to(device).eval()

        factor = 2 ** generator.cfg.depth
        for v in source_volumes:
            shape = tuple(d for i, d in enumerate(v.dims) if i != axis)
            if any(s % factor for s in shape):
                raise ShapeMismatchError(
                    f"slices {shape} of {v.volume_id} do not fit a generator of depth {generator.cfg.depth}"
                )

        volumes = [synthesize_volume(generator, v, axis, device=device) for v in source_volumes]
        dataset = PseudoTargetDataset(
            volumes=volumes,
            source_ids={pt.volume_id: src.volume_id for pt, src in zip(volumes, source_volumes)},
            checkpoint_id=Path(checkpoint).name,
        )
        logger.info(f"🧬 Synthesized {len(volumes)} pseudo-target volumes from {Path(checkpoint).name}")
        if out_dir is not None:
            PseudoTargetRepository(out_dir).save(dataset)
        return dataset
