"""
Cycle passes, translation losses and slice-wise volume synthesis
"""
import numpy as np
import torch
import torch.nn as nn

from core.exceptions import ShapeMismatchError
from evaluation.services import dice_score
from losses.services import (
    l1_reconstruction, multiscale_discriminator_loss, multiscale_generator_loss, soft_dice_loss
)
from nets.generators import TranslationModel
from phantoms.entities import Modality, Volume
from phantoms.services import reassemble_volume, slice_volume
from translation.entities import CycleOutputs


def _translate(generator: nn.Module, x: torch.Tensor) -> torch.Tensor:
    return generator.translate(generator.encode(x))


def cycle_step(
    model: TranslationModel,
    x_S: torch.Tensor,
    x_T: torch.Tensor,
    y_S: torch.Tensor | None = None,
    annotated: torch.Tensor | None = None,
) -> CycleOutputs:
    """
    Both translation cycles with the tumor-aware segmentation branch

    S -> T -> S yields X_S', X_S'' and the predictions G_seg^S(E_S(X_S)) and
    G_seg^T(E_T(X_S')); T -> S -> T yields X_T', X_T'' without predictions.
    `seg_mod` is only computed over slices flagged in `annotated` and is
    absent from the losses when there is no such slice.
    """
    if x_S.shape[1:] != x_T.shape[1:]:
        raise ShapeMismatchError(f"source batch {tuple(x_S.shape)} and target batch {tuple(x_T.shape)} differ")

    g_st, g_ts = model.generator_st, model.generator_ts
    features_S = g_st.encode(x_S)
    x_S_prime = g_st.translate(features_S)
    y_S_hat = g_st.segment(features_S)
    features_S_prime = g_ts.encode(x_S_prime)
    x_S_cycled = g_ts.translate(features_S_prime)
    y_S_prime_hat = g_ts.segment(features_S_prime)

    x_T_prime = _translate(g_ts, x_T)
    x_T_cycled = _translate(g_st, x_T_prime)

    losses = {
        "adv_mod": multiscale_generator_loss(model.disc_T(x_S_prime))
        + multiscale_generator_loss(model.disc_S(x_T_prime)),
        "cyc": l1_reconstruction(x_S_cycled, x_S) + l1_reconstruction(x_T_cycled, x_T),
    }
    if y_S is not None:
        keep = torch.ones(x_S.shape[0], dtype=torch.bool, device=x_S.device) if annotated is None else annotated
        if keep.any():
            losses["seg_mod"] = soft_dice_loss(y_S_hat[keep], y_S[keep]) + soft_dice_loss(y_S_prime_hat[keep], y_S[keep])

    return CycleOutputs(
        x_S_prime=x_S_prime,
        x_S_cycled=x_S_cycled,
        x_T_prime=x_T_prime,
        x_T_cycled=x_T_cycled,
        y_S_hat=y_S_hat,
        y_S_prime_hat=y_S_prime_hat,
        losses=losses,
    )


def discriminator_loss(
    model: TranslationModel,
    x_S: torch.Tensor,
    x_T: torch.Tensor,
    fake_S: torch.Tensor,
    fake_T: torch.Tensor,
) -> torch.Tensor:
    """D_T separates real T from X_S'; D_S separates real S from X_T'"""
    return (
        multiscale_discriminator_loss(model.disc_T(x_T), model.disc_T(fake_T.detach()))
        + multiscale_discriminator_loss(model.disc_S(x_S), model.disc_S(fake_S.detach()))
    )


@torch.no_grad()
def translate_fakes(model: TranslationModel, x_S: torch.Tensor, x_T: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(fake S, fake T) = (X_T', X_S') for a discriminator update"""
    return _translate(model.generator_ts, x_T), _translate(model.generator_st, x_S)


@torch.no_grad()
def synthesize_volume(
    generator: nn.Module,
    v: Volume,
    axis: int = 0,
    batch_size: int = 16,
    device: torch.device | str = "cpu",
) -> Volume:
    """
    Translate a source volume slice by slice and reassemble it

    The mask is copied bit for bit; the result is tagged with modality T.
    """
    stack = slice_volume(v, axis)
    images = torch.from_numpy(np.stack(stack.slices)[:, None])
    translated = []
    for start in range(0, images.shape[0], batch_size):
        batch = images[start:start + batch_size].to(device)
        translated.append(_translate(generator, batch).cpu())
    slices = [s[0].numpy().astype(np.float32) for s in torch.cat(translated)]

    rebuilt = reassemble_volume(stack.model_copy(update={"slices": slices}))
    return rebuilt.model_copy(update={
        "volume_id": f"pT_{v.volume_id}",
        "modality": Modality.T,
        "mask": None if v.mask is None else v.mask.copy(),
    })


@torch.no_grad()
def held_out_metrics(model: TranslationModel, images: torch.Tensor, masks: torch.Tensor, annotated: torch.Tensor) -> dict[str, float]:
    """
    Source-cycle L1 and tumor preservation on held-out source slices

    Tumor preservation is the Dice of G_seg^T(E_T(X_S')) binarized at 0.5
    against the source mask, over annotated slices.
    """
    model.eval()
    g_st, g_ts = model.generator_st, model.generator_ts
    x_S_prime = _translate(g_st, images)
    features = g_ts.encode(x_S_prime)
    cycled = g_ts.translate(features)
    metrics = {"cyc_mae": float((cycled - images).abs().mean())}
    if annotated.any():
        pred = (g_ts.segment(features)[annotated] >= 0.5).cpu().numpy()
        metrics["seg_dice"] = dice_score(pred, masks[annotated].cpu().numpy())
    return metrics
