"""
Overlap and surface-distance metrics
"""
from collections.abc import Callable, Sequence

import numpy as np
from scipy import ndimage

from core.exceptions import DatasetError, MetricError, ShapeMismatchError
from core.logger import logger
from evaluation.entities import EvalResult, VolumeMetrics
from phantoms.entities import Volume


def _binary_pair(pred_mask: np.ndarray, gt_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pred_mask.shape != gt_mask.shape:
        raise ShapeMismatchError(f"prediction {pred_mask.shape} and ground truth {gt_mask.shape} differ")
    return pred_mask.astype(bool), gt_mask.astype(bool)


def dice_score(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """2|P ∩ G| / (|P| + |G|), 1.0 when both masks are empty"""
    pred, gt = _binary_pair(pred_mask, gt_mask)
    denominator = pred.sum() + gt.sum()
    if denominator == 0:
        return 1.0
    return float(2.0 * np.logical_and(pred, gt).sum() / denominator)


def surface(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with at least one face neighbour outside the mask"""
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    return mask & ~ndimage.binary_erosion(mask, structure=structure, border_value=0)


def assd(pred_mask: np.ndarray, gt_mask: np.ndarray, spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> float:
    """
    Average symmetric surface distance in spacing units

    Mean of the mean prediction-to-truth and mean truth-to-prediction
    distances between surface voxels.

    Raises:
        MetricError: either mask is empty
    """
    pred, gt = _binary_pair(pred_mask, gt_mask)
    if not pred.any() or not gt.any():
        raise MetricError("undefined surface distance: empty mask")
    pred_surface, gt_surface = surface(pred), surface(gt)
    to_gt = ndimage.distance_transform_edt(~gt_surface, sampling=spacing)
    to_pred = ndimage.distance_transform_edt(~pred_surface, sampling=spacing)
    return float((to_gt[pred_surface].mean() + to_pred[gt_surface].mean()) / 2.0)


def volume_metrics(volume_id: str, pred_mask: np.ndarray, gt_mask: np.ndarray, spacing) -> VolumeMetrics:
    pred, gt = _binary_pair(pred_mask, gt_mask)
    both_empty = not pred.any() and not gt.any()
    distance = assd(pred, gt, spacing) if pred.any() and gt.any() else None
    return VolumeMetrics(volume_id=volume_id, dice=dice_score(pred, gt), assd=distance, both_empty=both_empty)


def evaluate_model(
    predictor: Callable[[Volume], np.ndarray],
    volumes: list[Volume],
    experiment: str,
    threshold: float = 0.5,
    metadata: dict | None = None,
) -> EvalResult:
    """
    Binarize predicted probabilities at `threshold` and score every labelled volume

    Raises:
        DatasetError: no volume carries a ground-truth mask
    """
    labelled = [v for v in volumes if v.mask is not None]
    if not labelled:
        raise DatasetError(f"experiment {experiment}: no labelled test volume")
    per_volume = [
        volume_metrics(v.volume_id, predictor(v) >= threshold, v.mask, v.spacing)
        for v in labelled
    ]
    result = EvalResult(experiment=experiment, per_volume=per_volume, metadata=metadata or {})
    logger.info(
        f"📊 {experiment}: dice {result.dice_mean:.3f} ± {result.dice_std:.3f} "
        f"over {len(per_volume)} volumes ({result.assd_undefined} without ASSD)"
    )
    return result
