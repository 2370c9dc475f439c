"""
Pseudo-target dataset storage
"""
from pathlib import Path

from phantoms.repositories import VolumeRepository
from translation.entities import PseudoTargetDataset


class PseudoTargetRepository:
    """MVL1 volumes plus provenance (source volume, checkpoint) in the index"""

    def __init__(self, root: Path):
        self.volumes = VolumeRepository(root)

    def save(self, dataset: PseudoTargetDataset) -> list[Path]:
        metadata = {
            v.volume_id: {"source_id": dataset.source_ids[v.volume_id], "checkpoint": dataset.checkpoint_id}
            for v in dataset.volumes
        }
        return self.volumes.save(dataset.volumes, metadata)

    def load(self) -> PseudoTargetDataset:
        index = self.volumes.read_index()
        volumes = self.volumes.load_all()
        checkpoints = {index[v.volume_id].get("checkpoint", "") for v in volumes}
        return PseudoTargetDataset(
            volumes=volumes,
            source_ids={v.volume_id: index[v.volume_id]["source_id"] for v in volumes},
            checkpoint_id=next(iter(checkpoints), "") if len(checkpoints) <= 1 else ",".join(sorted(checkpoints)),
        )

    def exists(self) -> bool:
        return self.volumes.exists()
