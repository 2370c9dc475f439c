"""
Use cases for dataset generation
"""
from pathlib import Path

from pydantic import BaseModel

from core.logger import logger
from phantoms.entities import AnnotationConfig, Modality, PhantomConfig, SplitConfig
from phantoms.repositories import VolumeRepository
from phantoms.services import generate_phantom_dataset, normalize_volume, select_annotated, split_ids


class GeneratedDataset(BaseModel):
    """Where the generated splits were written"""

    source_dir: Path
    target_dir: Path
    counts: dict[str, int]


class GenerateDatasetUseCase:
    """
    Generate, normalize, split and store the phantom dataset

    Every volume keeps its ground-truth mask on disk; the index marks which
    masks count as pixel-level annotations.
    """

    def execute(
        self,
        phantom: PhantomConfig,
        split: SplitConfig,
        annotation: AnnotationConfig,
        out_dir: Path,
    ) -> GeneratedDataset:
        logger.info(
            f"🧪 Generating {phantom.volume_count} phantoms "
            f"dims={phantom.dims}, seed={phantom.seed}"
        )
        dataset = generate_phantom_dataset(phantom)

        counts = {}
        dirs = {Modality.S: Path(out_dir) / "source", Modality.T: Path(out_dir) / "target"}
        fractions = {Modality.S: annotation.source_fraction, Modality.T: annotation.target_fraction}
        for modality, volumes in ((Modality.S, dataset.source), (Modality.T, dataset.target)):
            ids = [v.volume_id for v in volumes]
            splits = split_ids(ids, split.val_fraction, split.test_fraction, phantom.seed)
            trainval = [vid for vid in ids if splits[vid] != "test"]
            annotated = select_annotated(trainval, fractions[modality], phantom.seed)
            metadata = {
                vid: {"split": splits[vid], "annotated": vid in annotated}
                for vid in ids
            }
            VolumeRepository(dirs[modality]).save([normalize_volume(v) for v in volumes], metadata)
            for name in ("train", "val", "test"):
                counts[f"{modality.value}_{name}"] = sum(s == name for s in splits.values())
            counts[f"{modality.value}_annotated"] = len(annotated)

        logger.info(f"✅ Dataset ready: {counts}")
        return GeneratedDataset(source_dir=dirs[Modality.S], target_dir=dirs[Modality.T], counts=counts)
