"""
Pseudo-label generation
"""
import numpy as np
import torch

from core.exceptions import ConfigError
from nets.segmentation import SegmentationModel
from phantoms.entities import Volume
from segmentation.services import predict_hemisphere
from selftraining.entities import PseudoLabelSet


def threshold_probabilities(prob: np.ndarray, alpha: float) -> np.ndarray:
    """1 where prob >= alpha (inclusive), else 0"""
    return (np.asarray(prob) >= alpha).astype(np.uint8)


def generate_pseudo_labels(
    model: SegmentationModel,
    target_volumes: list[Volume],
    alpha: float,
    checkpoint_id: str,
    iteration: int = 0,
    device: torch.device | str = "cpu",
) -> PseudoLabelSet:
    """
    Threshold the model's probability maps into new training masks

    Volumes whose mask comes out empty keep their empty label.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    model.eval()
    masks = {
        v.volume_id: threshold_probabilities(predict_hemisphere(model, v, device), alpha)
        for v in target_volumes
    }
    return PseudoLabelSet(iteration=iteration, alpha=alpha, checkpoint_id=checkpoint_id, masks=masks)
