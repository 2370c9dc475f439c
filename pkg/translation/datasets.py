"""
2D slice datasets and on-the-fly augmentation
"""
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import Dataset

from core.exceptions import DatasetError
from phantoms.entities import Volume
from phantoms.services import slice_volume

MAX_ROTATION_DEG = 10.0
INTENSITY_SCALE = 0.1
INTENSITY_SHIFT = 0.05


class SliceDataset(Dataset):
    """
    Every slice of every volume along one axis

    Items are (image (1,H,W), mask (1,H,W), annotated flag). Slices of
    volumes outside `annotated_ids` carry a zero mask and flag False.
    """

    def __init__(self, volumes: list[Volume], axis: int = 0, annotated_ids: set[str] | None = None):
        if not volumes:
            raise DatasetError("cannot build a slice dataset from zero volumes")
        images, masks, flags = [], [], []
        for v in volumes:
            stack = slice_volume(v, axis)
            annotated = stack.mask_slices is not None and (annotated_ids is None or v.volume_id in annotated_ids)
            images += stack.slices
            if annotated:
                masks += stack.mask_slices
            else:
                masks += [np.zeros_like(s, dtype=np.uint8) for s in stack.slices]
            flags += [annotated] * len(stack.slices)

        shapes = {s.shape for s in images}
        if len(shapes) != 1:
            raise DatasetError(f"slices of different shapes cannot be batched: {sorted(shapes)}")
        self.images = torch.from_numpy(np.stack(images)[:, None].astype(np.float32))
        self.masks = torch.from_numpy(np.stack(masks)[:, None].astype(np.float32))
        self.annotated = torch.tensor(flags, dtype=torch.bool)

    @property
    def slice_shape(self) -> tuple[int, int]:
        return tuple(self.images.shape[2:])

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, index: int):
        return self.images[index], self.masks[index], self.annotated[index]


def augment(images: torch.Tensor, masks: torch.Tensor, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """Random flips, small rotations and intensity jitter; masks follow the geometry only"""
    batch = images.shape[0]
    flip_h = torch.rand(batch, generator=generator) < 0.5
    flip_w = torch.rand(batch, generator=generator) < 0.5
    images, masks = images.clone(), masks.clone()
    images[flip_h], masks[flip_h] = images[flip_h].flip(-2), masks[flip_h].flip(-2)
    images[flip_w], masks[flip_w] = images[flip_w].flip(-1), masks[flip_w].flip(-1)

    angles = (torch.rand(batch, generator=generator) * 2 - 1) * math.radians(MAX_ROTATION_DEG)
    cos, sin = torch.cos(angles), torch.sin(angles)
    zeros = torch.zeros_like(angles)
    theta = torch.stack([torch.stack([cos, -sin, zeros], 1), torch.stack([sin, cos, zeros], 1)], 1)
    grid = F.affine_grid(theta, list(images.shape), align_corners=False)
    images = F.grid_sample(images, grid, mode="bilinear", padding_mode="border", align_corners=False)
    masks = F.grid_sample(masks, grid, mode="nearest", padding_mode="zeros", align_corners=False)

    scale = 1 + (torch.rand(batch, 1, 1, 1, generator=generator) * 2 - 1) * INTENSITY_SCALE
    shift = (torch.rand(batch, 1, 1, 1, generator=generator) * 2 - 1) * INTENSITY_SHIFT
    return (images * scale + shift).clamp(-1.0, 1.0), masks
