"""
Use cases for the segmentation stage
"""
import shutil
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from core.environment.config import Settings
from core.exceptions import DatasetError, ModelConfigError
from core.logger import logger
from core.runtime import amsgrad, resolve_device, seed_everything, set_requires_grad, torch_generator
from losses.services import (
    l1_reconstruction,
    latent_reconstruction_loss,
    multiscale_discriminator_loss,
    multiscale_generator_loss,
    segmentation_init_loss,
    segmentation_st_loss,
    soft_dice_loss,
)
from nets.entities import LatentCode, SegmentationConfig
from nets.repositories import load_checkpoint, save_checkpoint
from nets.segmentation import SegmentationModel, build_segmentation_model, encode_partition
from phantoms.entities import APLabel, Volume
from segmentation.datasets import VolumePool, by_label, hold_out
from segmentation.entities import Stage2Config, Stage2EpochLog, Stage2Result, StepRecord
from segmentation.services import (
    absence_to_presence,
    fit_to_grid,
    fit_volume,
    grid_dims,
    hemispheres,
    prepare_real_targets,
    presence_to_absence,
    sample_unique_code,
    segment,
    validation_dice,
)

LOG_NAME = "stage2_log.csv"
STEP_LOG_NAME = "stage2_steps.csv"
U_STREAM = 7


class TrainSegmentationUseCase:
    """
    Train the 3D segmentation model on hemispheres

    Supervised pool: pseudo-target hemispheres plus annotated real-target
    hemispheres, a share of parents held out for validation. The
    presence/absence objective only ever sees real target hemispheres,
    batched separately per label. With `pseudo_labels` the self-training
    Dice term is added on unannotated real-target hemispheres.
    """

    def __init__(self, settings: Settings):
        self.settings = settings

    def _build_model(self, cfg: Stage2Config, model_cfg: SegmentationConfig, init_checkpoint: Path | None) -> SegmentationModel:
        if init_checkpoint is None:
            return build_segmentation_model(model_cfg)
        model, _ = load_checkpoint(init_checkpoint, "segmentation")
        if model.variant != cfg.variant:
            raise ModelConfigError(f"checkpoint holds a {model.variant.value} model, config asks for {cfg.variant.value}")
        return model

    def execute(
        self,
        cfg: Stage2Config,
        pseudo_targets: list[Volume],
        real_targets: list[Volume],
        out_dir: Path,
        annotated_target_ids: set[str] | frozenset = frozenset(),
        pseudo_labels: dict[str, np.ndarray] | None = None,
        init_checkpoint: Path | None = None,
        epochs: int | None = None,
    ) -> Stage2Result:
        out_dir = Path(out_dir)
        seed_everything(cfg.seed, self.settings.deterministic)
        device = resolve_device(self.settings)

        real_halves = prepare_real_targets(real_targets, set(annotated_target_ids))
        pool = [h for h in hemispheres(pseudo_targets) if h.mask is not None]
        pool += [h for h in real_halves if h.mask is not None]
        if not pool:
            raise DatasetError("no annotated volume to supervise the segmentation model")

        dims = grid_dims(pool[0].dims, cfg.model_cfg().downsampling)
        model_cfg = cfg.model_cfg(input_dims=dims)
        train_pool, val_pool = hold_out([fit_volume(v, dims) for v in pool], cfg.val_fraction, cfg.seed)
        real_halves = [fit_volume(v, dims) for v in real_halves]
        supervised = VolumePool(train_pool)

        presence = absence = None
        if cfg.uses_presence_absence:
            with_p, with_a = by_label(real_halves, APLabel.P), by_label(real_halves, APLabel.A)
            if not with_a:
                raise DatasetError("the semi-supervised variant needs absence-labelled real target data")
            if not with_p:
                raise DatasetError("the semi-supervised variant needs presence-labelled real target data")
            presence, absence = VolumePool(with_p), VolumePool(with_a)

        self_training = None
        if pseudo_labels is not None:
            labelled = [
                v.model_copy(update={"mask": fit_to_grid(pseudo_labels[v.volume_id], dims, 0).astype(np.uint8)})
                for v in real_halves if v.mask is None and v.volume_id in pseudo_labels
            ]
            if labelled:
                self_training = VolumePool(labelled)
            else:
                logger.warning("⚠️ Pseudo-labels given but no unannotated target hemisphere matches them")

        weights_cfg = cfg.weights
        if weights_cfg.seg_pT is None:
            logger.warning("⚠️ seg_pT weight unset, using the fully-annotated schedule value")
            weights_cfg = weights_cfg.resolved(1.0)
        weights = weights_cfg.to_loss_weights()

        model = self._build_model(cfg, model_cfg, init_checkpoint).to(device)
        model_cfg = model.cfg
        opt_G = amsgrad(model.generator_parameters(), cfg.lr, cfg.betas)
        opt_DA = opt_DP = None
        if cfg.uses_presence_absence:
            opt_DA = amsgrad(model.disc_A.parameters(), cfg.lr, cfg.betas)
            opt_DP = amsgrad(model.disc_P.parameters(), cfg.lr, cfg.betas)

        epochs = epochs or cfg.epochs
        steps = cfg.steps_per_epoch or max(1, len(supervised) // cfg.batch_size)
        initial_val = validation_dice(model, val_pool, device) if init_checkpoint is not None else None
        logger.info(
            f"🧠 Stage 2 ({cfg.variant.value}): {len(supervised)} supervised / {len(val_pool)} validation hemispheres, "
            f"{len(real_halves)} real target hemispheres, {epochs} epochs x {steps} steps on {device}"
        )

        checkpoints_dir = out_dir / "checkpoints"
        best_path, best_dice = checkpoints_dir / "best.pt", None
        history: list[Stage2EpochLog] = []
        step_log: list[StepRecord] = []

        for epoch in range(epochs):
            sums: dict[str, float] = {}
            model.train()
            for step in tqdm(range(steps), desc=f"stage2 epoch {epoch}", leave=False, disable=not sys.stderr.isatty()):
                generator = torch_generator(cfg.seed, epoch, step)
                x_sup, y_sup = (t.to(device) for t in supervised.sample(cfg.batch_size, generator))
                terms = {}

                if presence is not None:
                    x_P = presence.sample(cfg.batch_size, generator)[0].to(device)
                    x_A = absence.sample(cfg.batch_size, generator)[0].to(device)
                    u = None
                    if cfg.uses_absence_to_presence:
                        u = sample_unique_code(
                            model_cfg.unique_code_shape(cfg.batch_size), torch_generator(cfg.seed, epoch, step, U_STREAM)
                        )
                        step_log.append(StepRecord(
                            epoch=epoch, step=step, u_seed=f"{cfg.seed}-{epoch}-{step}-{U_STREAM}",
                            u_mean=float(u.mean()), u_std=float(u.std()),
                        ))
                        u = u.to(device)

                    with torch.no_grad():
                        fake_A = presence_to_absence(model, x_P).x_PA
                        fake_P = absence_to_presence(model, x_A, u).x_AP if u is not None else None
                    loss_D = multiscale_discriminator_loss(model.disc_A(x_A), model.disc_A(fake_A))
                    opt_DA.zero_grad()
                    loss_D.backward()
                    opt_DA.step()
                    if fake_P is not None:
                        loss_DP = multiscale_discriminator_loss(model.disc_P(x_P), model.disc_P(fake_P))
                        opt_DP.zero_grad()
                        loss_DP.backward()
                        opt_DP.step()
                        loss_D = loss_D + loss_DP
                    sums["adv_gen_D"] = sums.get("adv_gen_D", 0.0) + float(loss_D)

                    set_requires_grad([model.disc_A, model.disc_P], False)
                    p = presence_to_absence(model, x_P)
                    a = absence_to_presence(model, x_A, u)
                    terms["rec"] = l1_reconstruction(p.x_PP, x_P) + l1_reconstruction(a.x_AA, x_A)
                    adv = multiscale_generator_loss(model.disc_A(p.x_PA))
                    codes, recovered = [p.code], [encode_partition(model, p.x_PP)]
                    if a.x_AP is not None:
                        adv = adv + multiscale_generator_loss(model.disc_P(a.x_AP))
                        codes.append(LatentCode(c=a.code.c, u=u))
                        recovered.append(encode_partition(model, a.x_AP))
                    terms["adv_gen"] = adv
                    terms["lat"] = latent_reconstruction_loss(codes, recovered)

                terms["seg_pT"] = soft_dice_loss(segment(model, x_sup), y_sup)
                if self_training is not None:
                    x_st, y_st = (t.to(device) for t in self_training.sample(cfg.batch_size, generator))
                    st_term = soft_dice_loss(segment(model, x_st), y_st)
                    loss = segmentation_st_loss(terms, st_term, weights, cfg.variant)
                    sums["seg_st"] = sums.get("seg_st", 0.0) + float(st_term)
                else:
                    loss = segmentation_init_loss(terms, weights, cfg.variant)

                opt_G.zero_grad()
                loss.backward()
                opt_G.step()
                if presence is not None:
                    set_requires_grad([model.disc_A, model.disc_P], True)
                for name, value in terms.items():
                    sums[name] = sums.get(name, 0.0) + float(value)

            val_dice = validation_dice(model, val_pool, device)
            mean = {name: value / steps for name, value in sums.items()}
            row = Stage2EpochLog(
                epoch=epoch,
                L_adv_gen_D=mean.get("adv_gen_D"),
                L_adv_gen_G=mean.get("adv_gen"),
                L_rec=mean.get("rec"),
                L_lat=mean.get("lat"),
                L_seg_pT=mean["seg_pT"],
                L_seg_st=mean.get("seg_st"),
                val_dice=val_dice,
            )
            history.append(row)
            logger.info(
                f"📉 Stage 2 epoch {epoch}: "
                + " ".join(f"{k}={v:.4f}" for k, v in mean.items())
                + (f" val_dice={val_dice:.4f}" if val_dice is not None else "")
            )

            extra = {"stage": "segmentation", "epoch": epoch, "val_dice": val_dice}
            save_checkpoint(model, model_cfg, "segmentation", checkpoints_dir / f"epoch_{epoch:03d}.pt", extra)
            save_checkpoint(model, model_cfg, "segmentation", checkpoints_dir / "last.pt", extra)
            if val_dice is not None and (best_dice is None or val_dice > best_dice):
                best_dice = val_dice
                shutil.copyfile(checkpoints_dir / "last.pt", best_path)
                logger.info(f"🏅 New best validation Dice {val_dice:.4f} at epoch {epoch}")

            pd.DataFrame([h.model_dump() for h in history]).to_csv(out_dir / LOG_NAME, index=False)
            if step_log:
                pd.DataFrame([s.model_dump() for s in step_log]).to_csv(out_dir / STEP_LOG_NAME, index=False)

        if best_dice is None:
            # no validation data: the last state stands in for the best one
            shutil.copyfile(checkpoints_dir / "last.pt", best_path)

        return Stage2Result(
            checkpoint=checkpoints_dir / "last.pt",
            best_checkpoint=best_path,
            best_val_dice=best_dice,
            log_path=out_dir / LOG_NAME,
            history=history,
            initial_val_dice=initial_val,
        )
