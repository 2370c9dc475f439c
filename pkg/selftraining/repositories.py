"""
Pseudo-label store: one directory of mask-only MVL1 files per iteration
plus a JSON lineage manifest
"""
import json
import shutil
from pathlib import Path

from core.exceptions import DatasetError
from core.logger import logger
from phantoms.entities import Modality
from phantoms.repositories import decode_mask, encode_mask
from selftraining.entities import PseudoLabelSet


class PseudoLabelRepository:
    LINEAGE_NAME = "lineage.json"

    def __init__(self, root: Path):
        self.root = Path(root)

    def _lineage_path(self) -> Path:
        return self.root / self.LINEAGE_NAME

    def _iteration_dir(self, iteration: int) -> Path:
        return self.root / f"iter_{iteration:02d}"

    def lineage(self) -> list[dict]:
        if not self._lineage_path().exists():
            return []
        return json.loads(self._lineage_path().read_text())

    def reset(self) -> None:
        if self.root.exists():
            shutil.rmtree(self.root)

    def save(self, labels: PseudoLabelSet, modality: Modality = Modality.T) -> Path:
        """
        Raises:
            DatasetError: the iteration does not follow the stored ones
        """
        lineage = self.lineage()
        if lineage and labels.iteration <= lineage[-1]["iteration"]:
            raise DatasetError(
                f"pseudo-label iteration {labels.iteration} does not follow iteration {lineage[-1]['iteration']}"
            )
        directory = self._iteration_dir(labels.iteration)
        directory.mkdir(parents=True, exist_ok=True)
        for volume_id, mask in labels.masks.items():
            (directory / f"{volume_id}.mvl").write_bytes(encode_mask(mask, modality))

        lineage.append({
            "iteration": labels.iteration,
            "alpha": labels.alpha,
            "checkpoint": labels.checkpoint_id,
            "volume_ids": sorted(labels.masks),
        })
        self._lineage_path().write_text(json.dumps(lineage, indent=2))
        logger.info(f"🏷️ Stored {len(labels.masks)} pseudo-labels of iteration {labels.iteration} ({labels.positive} with tumor)")
        return directory

    def load(self, iteration: int) -> PseudoLabelSet:
        entry = next((e for e in self.lineage() if e["iteration"] == iteration), None)
        if entry is None:
            raise DatasetError(f"no pseudo-labels stored for iteration {iteration}")
        directory = self._iteration_dir(iteration)
        masks = {vid: decode_mask((directory / f"{vid}.mvl").read_bytes()) for vid in entry["volume_ids"]}
        return PseudoLabelSet(iteration=iteration, alpha=entry["alpha"], checkpoint_id=entry["checkpoint"], masks=masks)
