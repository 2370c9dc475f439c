"""
Presence/absence translation, segmentation and volume-level prediction
"""
import numpy as np
import torch

from core.exceptions import DatasetError, ShapeMismatchError
from evaluation.services import dice_score
from nets.entities import LatentCode
from nets.segmentation import SegmentationModel
from phantoms.entities import APLabel, Volume
from phantoms.services import merge_hemispheres, split_hemispheres
from segmentation.entities import AbsenceToPresence, PresenceToAbsence


def presence_to_absence(
    model: SegmentationModel,
    x_P: torch.Tensor,
    labels: list[APLabel] | None = None,
    strict: bool = True,
) -> PresenceToAbsence:
    """
    Remove the tumor from diseased inputs

    X_PA = G_com(c_P) is the healthy rendering, the residual
    delta = G_res(c_P, u_P) holds the tumor and X_PP = X_PA + delta.

    Raises:
        DatasetError: in strict mode, a sample labelled A was passed in
    """
    if strict and labels is not None and APLabel.A in labels:
        raise DatasetError("absence-labelled samples cannot go through presence-to-absence translation")
    features = model.encode(x_P)
    code = model.partition(features[-1])
    x_PA = model.common(code, features)
    delta = model.residual(code, features)
    return PresenceToAbsence(x_PA=x_PA, delta=delta, x_PP=x_PA + delta, code=code)


def absence_to_presence(
    model: SegmentationModel,
    x_A: torch.Tensor,
    u_sample: torch.Tensor | None,
) -> AbsenceToPresence:
    """
    Reconstruct healthy inputs and, given a prior sample u, add a tumor

    X_AA = G_com(c_A); X_AP = X_AA + G_res(c_A, u).

    Raises:
        ShapeMismatchError: u_sample does not have the unique-code shape
    """
    features = model.encode(x_A)
    code = model.partition(features[-1])
    x_AA = model.common(code, features)
    if u_sample is None:
        return AbsenceToPresence(x_AA=x_AA, code=code)
    if u_sample.shape != code.u.shape:
        raise ShapeMismatchError(f"u_sample {tuple(u_sample.shape)} does not match the unique code {tuple(code.u.shape)}")
    delta = model.residual(LatentCode(c=code.c, u=u_sample), features)
    return AbsenceToPresence(x_AA=x_AA, x_AP=x_AA + delta, delta=delta, code=code)


def sample_unique_code(shape: torch.Size, generator: torch.Generator) -> torch.Tensor:
    """Draw u ~ N(0, I) on the CPU from a dedicated generator"""
    return torch.randn(shape, generator=generator)


def segment(model: SegmentationModel, x: torch.Tensor) -> torch.Tensor:
    """Ŷ = G_seg(E(x)), probabilities in (0, 1)"""
    return model(x)


def fit_to_grid(data: np.ndarray, dims: tuple[int, int, int], fill: float) -> np.ndarray:
    """Center-crop or pad every axis to `dims`"""
    out = data
    for axis, target in enumerate(dims):
        size = out.shape[axis]
        if size > target:
            start = (size - target) // 2
            out = np.take(out, range(start, start + target), axis=axis)
        elif size < target:
            before = (target - size) // 2
            pad = [(0, 0)] * out.ndim
            pad[axis] = (before, target - size - before)
            out = np.pad(out, pad, constant_values=fill)
    return out


def fit_volume(v: Volume, dims: tuple[int, int, int]) -> Volume:
    if v.dims == dims:
        return v
    background = float(v.data[0, 0, 0])
    return v.model_copy(update={
        "data": fit_to_grid(v.data, dims, background).astype(np.float32),
        "mask": None if v.mask is None else fit_to_grid(v.mask, dims, 0).astype(np.uint8),
    })


def grid_dims(dims: tuple[int, int, int], factor: int) -> tuple[int, int, int]:
    """Nearest size per axis divisible by `factor` (rounded up)"""
    return tuple(-(-d // factor) * factor for d in dims)


@torch.no_grad()
def predict_hemisphere(model: SegmentationModel, v: Volume, device: torch.device | str = "cpu") -> np.ndarray:
    """Probability map of one hemisphere at its own dims"""
    dims = grid_dims(v.dims, model.cfg.downsampling)
    fitted = fit_volume(v, dims)
    x = torch.from_numpy(fitted.data)[None, None].to(device)
    prob = segment(model, x)[0, 0].cpu().numpy()
    return fit_to_grid(prob, v.dims, 0.0)


@torch.no_grad()
def predict_volume(model: SegmentationModel, v: Volume, device: torch.device | str = "cpu") -> np.ndarray:
    """Hemisphere-wise prediction merged back to full width; the model keeps its train/eval mode"""
    was_training = model.training
    model.eval()
    try:
        left, right = split_hemispheres(v)
        return merge_hemispheres(
            predict_hemisphere(model, left, device), predict_hemisphere(model, right, device), v.dims[2]
        )
    finally:
        model.train(was_training)


def hemispheres(volumes: list[Volume]) -> list[Volume]:
    return [half for v in volumes for half in split_hemispheres(v)]


def prepare_real_targets(volumes: list[Volume], annotated_ids: set[str]) -> list[Volume]:
    """
    Hemispheres of real target volumes

    Presence/absence labels come from the ground-truth mask; the mask itself
    is kept only for volumes whose pixel-level annotation may be used.
    """
    halves = []
    for half in hemispheres(volumes):
        parent = half.volume_id.rsplit("_", 1)[0]
        if parent not in annotated_ids:
            half = half.model_copy(update={"mask": None})
        halves.append(half)
    return halves


@torch.no_grad()
def validation_dice(model: SegmentationModel, volumes: list[Volume], device: torch.device | str = "cpu") -> float | None:
    """Mean Dice of predictions binarized at 0.5 over labelled volumes"""
    labelled = [v for v in volumes if v.mask is not None]
    if not labelled:
        return None
    was_training = model.training
    model.eval()
    scores = [dice_score(predict_hemisphere(model, v, device) >= 0.5, v.mask) for v in labelled]
    model.train(was_training)
    return float(np.mean(scores))
