"""
In-memory pools of equally-shaped 3D volumes
"""
import numpy as np
import torch

from core.exceptions import DatasetError
from phantoms.entities import APLabel, Volume


class VolumePool:
    """Stacked volumes (N, 1, D, H, W) with optional masks, sampled with replacement"""

    def __init__(self, volumes: list[Volume], labels: dict[str, np.ndarray] | None = None):
        if not volumes:
            raise DatasetError("empty volume pool")
        shapes = {v.dims for v in volumes}
        if len(shapes) != 1:
            raise DatasetError(f"pool volumes must share one shape, got {sorted(shapes)}")
        self.ids = [v.volume_id for v in volumes]
        self.images = torch.from_numpy(np.stack([v.data for v in volumes])[:, None])
        masks = [labels[v.volume_id] if labels is not None else v.mask for v in volumes]
        self.masks = None
        if all(m is not None for m in masks):
            self.masks = torch.from_numpy(np.stack(masks)[:, None].astype(np.float32))

    def __len__(self) -> int:
        return len(self.ids)

    def sample(self, batch_size: int, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor | None]:
        index = torch.randint(len(self), (batch_size,), generator=generator)
        return self.images[index], None if self.masks is None else self.masks[index]


def parent_id(volume_id: str) -> str:
    """Volume a hemisphere came from"""
    return volume_id.rsplit("_", 1)[0] if volume_id.endswith(("_L", "_R")) else volume_id


def by_label(volumes: list[Volume], label: APLabel) -> list[Volume]:
    return [v for v in volumes if v.ap_label == label]


def hold_out(volumes: list[Volume], fraction: float, seed: int) -> tuple[list[Volume], list[Volume]]:
    """
    Split into (train, validation) by parent volume so both hemispheres of
    a volume land on the same side; training keeps at least one parent
    """
    parents = sorted({parent_id(v.volume_id) for v in volumes})
    count = min(int(round(fraction * len(parents))), len(parents) - 1)
    order = np.random.default_rng([seed, 3]).permutation(len(parents))
    held = {parents[i] for i in order[:max(0, count)]}
    return (
        [v for v in volumes if parent_id(v.volume_id) not in held],
        [v for v in volumes if parent_id(v.volume_id) in held],
    )
