"""
Loss functions
==============

Differentiable scalar objectives on torch tensors plus the weighted
compositions used by the translation and segmentation stages.
"""
from collections.abc import Iterable, Mapping, Sequence

import torch
import torch.nn.functional as F

from core.exceptions import LossCompositionError, ShapeMismatchError
from losses.entities import LossWeights, normalize_weights
from nets.entities import LatentCode, Variant

DICE_EPSILON = 1.0

# terms each stage-2 variant may combine; seg_pT is always required
SEGMENTATION_TERMS = {
    Variant.SELF_SUPERVISED: frozenset({"seg_pT"}),
    Variant.SEMI_SUPERVISED: frozenset({"adv_gen", "rec", "lat", "seg_pT"}),
}


def _require_nonempty(**tensors: torch.Tensor) -> None:
    empty = [name for name, t in tensors.items() if t.numel() == 0]
    if empty:
        raise ShapeMismatchError(f"empty score tensors: {empty}")


def _require_same_shape(x: torch.Tensor, y: torch.Tensor, what: str) -> None:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"{what}: shape {tuple(x.shape)} differs from {tuple(y.shape)}")


def hinge_discriminator_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """mean(relu(1 - real)) + mean(relu(1 + fake))"""
    _require_nonempty(real_scores=real_scores, fake_scores=fake_scores)
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def hinge_generator_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    _require_nonempty(fake_scores=fake_scores)
    return -fake_scores.mean()


def multiscale_discriminator_loss(
    real_scores: Sequence[torch.Tensor],
    fake_scores: Sequence[torch.Tensor],
) -> torch.Tensor:
    """Hinge loss per discriminator scale, averaged over scales"""
    if not real_scores or len(real_scores) != len(fake_scores):
        raise ShapeMismatchError(
            f"expected matching non-empty scale lists, got {len(real_scores)} and {len(fake_scores)}"
        )
    losses = [hinge_discriminator_loss(r, f) for r, f in zip(real_scores, fake_scores)]
    return torch.stack(losses).mean()


def multiscale_generator_loss(fake_scores: Sequence[torch.Tensor]) -> torch.Tensor:
    if not fake_scores:
        raise ShapeMismatchError("no discriminator scales to score")
    return torch.stack([hinge_generator_loss(f) for f in fake_scores]).mean()


def l1_reconstruction(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference"""
    _require_same_shape(x, y, "l1_reconstruction")
    return (x - y).abs().mean()


def soft_dice_loss(
    pred_prob: torch.Tensor,
    target_mask: torch.Tensor,
    eps: float = DICE_EPSILON,
) -> torch.Tensor:
    """1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps) over the whole tensor"""
    _require_same_shape(pred_prob, target_mask, "soft_dice_loss")
    target = target_mask.to(pred_prob.dtype)
    intersection = (pred_prob * target).sum()
    return 1.0 - (2.0 * intersection + eps) / (pred_prob.sum() + target.sum() + eps)


def weighted_sum(terms: Mapping[str, torch.Tensor], w: LossWeights) -> torch.Tensor:
    """
    sum_k w[k] * terms[k] over exactly the weighted names

    Raises:
        LossCompositionError: a weighted term is missing or an unweighted term is given
    """
    missing = sorted(set(w.values) - set(terms))
    unexpected = sorted(set(terms) - set(w.values))
    if missing or unexpected:
        raise LossCompositionError(f"loss terms do not match weights: missing={missing}, unexpected={unexpected}")
    names = sorted(w.values)
    return sum((w[name] * terms[name] for name in names[1:]), w[names[0]] * terms[names[0]])


def translation_loss(terms: Mapping[str, torch.Tensor], w: LossWeights) -> torch.Tensor:
    """Weighted sum of the adversarial, cycle and segmentation translation terms"""
    return weighted_sum(terms, w)


def latent_reconstruction_loss(
    codes: Iterable[LatentCode],
    recovered: Iterable[LatentCode],
) -> torch.Tensor:
    """
    Mean L1 over every (code, recovered code) pair, weighted by element count

    Raises:
        LossCompositionError: a unique code is missing on either side
        ShapeMismatchError: paired codes differ in shape
    """
    codes, recovered = list(codes), list(recovered)
    if not codes or len(codes) != len(recovered):
        raise LossCompositionError(f"expected matching code lists, got {len(codes)} and {len(recovered)}")

    total, count = None, 0
    for index, (code, again) in enumerate(zip(codes, recovered)):
        if code.u is None or again.u is None:
            raise LossCompositionError(f"code pair {index} is missing its unique code u")
        for a, b in ((code.c, again.c), (code.u, again.u)):
            _require_same_shape(a, b, f"latent pair {index}")
            diff = (a - b).abs().sum()
            total = diff if total is None else total + diff
            count += a.numel()
    return total / count


def _segmentation_weights(terms: Mapping[str, torch.Tensor], w: LossWeights, allowed: frozenset) -> LossWeights:
    unexpected = sorted(set(terms) - allowed)
    if unexpected:
        raise LossCompositionError(f"terms {unexpected} are not part of this variant's objective")
    if "seg_pT" not in terms:
        raise LossCompositionError("the pseudo-target segmentation term seg_pT is required")
    missing = sorted(set(terms) - set(w.values))
    if missing:
        raise LossCompositionError(f"no weight given for terms {missing}")
    return normalize_weights(w.restricted(terms))


def segmentation_init_loss(
    terms: Mapping[str, torch.Tensor],
    w: LossWeights,
    variant: Variant,
) -> torch.Tensor:
    """
    Global weighted sum of the initial segmentation-stage objective

    Weights are restricted to the terms present and renormalized, so dropped
    terms (self-supervised variant, ablations) leave a unit-sum combination.
    """
    return weighted_sum(terms, _segmentation_weights(terms, w, SEGMENTATION_TERMS[variant]))


def segmentation_st_loss(
    init_terms: Mapping[str, torch.Tensor],
    st_term: torch.Tensor,
    w: LossWeights,
    variant: Variant,
) -> torch.Tensor:
    """Initial objective plus the weighted self-training Dice term"""
    if "seg_st" in init_terms:
        raise LossCompositionError("seg_st belongs to st_term, not to the initial terms")
    terms = {**init_terms, "seg_st": st_term}
    return weighted_sum(terms, _segmentation_weights(terms, w, SEGMENTATION_TERMS[variant] | {"seg_st"}))
