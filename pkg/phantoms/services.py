"""
Phantom generation and volume preprocessing
============================================

Pure functions: brain phantoms, tissue-based normalization, hemisphere
splitting and 2D slicing.
"""
import numpy as np
from scipy import ndimage

from core.exceptions import PhantomError
from phantoms.entities import (
    APLabel, Modality, PhantomConfig, PhantomDataset, SliceStack, Volume, label_from_mask
)

TISSUE_EPSILON = 1e-6


def _volume_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, volume index)"""
    return np.random.default_rng([seed, index])


def _assign_modalities(cfg: PhantomConfig) -> list[Modality]:
    order = np.random.default_rng(cfg.seed).permutation(cfg.volume_count)
    n_source = min(max(1, round(cfg.source_share * cfg.volume_count)), cfg.volume_count - 1)
    modalities = [Modality.T] * cfg.volume_count
    for index in order[:n_source]:
        modalities[int(index)] = Modality.S
    return modalities


def _anatomy(cfg: PhantomConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Ellipsoidal brain with radial gradient and two dark inner structures"""
    depth, height, width = cfg.dims
    z, y, x = np.meshgrid(
        np.linspace(-1.0, 1.0, depth),
        np.linspace(-1.0, 1.0, height),
        np.linspace(-1.0, 1.0, width),
        indexing="ij",
    )
    axes = rng.uniform(0.75, 0.9, size=3)
    radius = np.sqrt((z / axes[0]) ** 2 + (y / axes[1]) ** 2 + (x / axes[2]) ** 2)
    brain = radius < 1.0

    anatomy = np.clip(1.0 - 0.6 * radius, 0.0, 1.0)
    # mirrored pair of low-intensity structures around the midline
    offset = rng.uniform(0.15, 0.25)
    size = rng.uniform(0.12, 0.2, size=3)
    for side in (-1.0, 1.0):
        inner = ((z / (2 * size[0])) ** 2 + ((y + 0.1) / size[1]) ** 2
                 + ((x - side * offset) / size[2]) ** 2) < 1.0
        anatomy = np.where(inner, anatomy - 0.3, anatomy)
    anatomy = np.where(brain, np.clip(anatomy, 0.05, 1.0), 0.0)
    return anatomy, brain


def _tumor(
    cfg: PhantomConfig,
    rng: np.random.Generator,
    brain: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """1..max_blobs Gaussian blobs thresholded at half of their maximum"""
    interior = ndimage.binary_erosion(brain, iterations=2)
    candidates = np.argwhere(interior if interior.any() else brain)
    n_blobs = int(rng.integers(1, cfg.max_blobs + 1))

    grid = np.indices(cfg.dims, dtype=np.float64)
    field = np.zeros(cfg.dims, dtype=np.float64)
    anchor = candidates[rng.integers(len(candidates))]
    for blob in range(n_blobs):
        radius = rng.uniform(*cfg.tumor_radius_range)
        # extra blobs stay close to the first one so the lesion is one structure
        center = anchor if blob == 0 else anchor + rng.normal(0.0, radius / 2, size=3)
        sigma = radius / np.sqrt(2.0 * np.log(2.0))
        sq_dist = sum((grid[axis] - center[axis]) ** 2 for axis in range(3))
        field += np.exp(-sq_dist / (2.0 * sigma**2))

    mask = (field >= 0.5 * field.max()) & brain
    mask[tuple(anchor)] = True
    intensity = np.where(mask, 0.5 + 0.5 * field / field.max(), 0.0)
    return mask.astype(np.uint8), intensity


def render_phantom(cfg: PhantomConfig, index: int, modality: Modality) -> Volume:
    """
    Render volume `index` of the dataset in the given modality

    The anatomy and tumor depend only on (seed, index); the modality only
    selects the intensity transfer map and tumor contrast.
    """
    rng = _volume_rng(cfg.seed, index)
    anatomy, brain = _anatomy(cfg, rng)

    has_tumor = rng.random() < cfg.tumor_probability
    if has_tumor:
        mask, tumor = _tumor(cfg, rng, brain)
    else:
        mask, tumor = np.zeros(cfg.dims, dtype=np.uint8), np.zeros(cfg.dims)

    image = cfg.transfer_for(modality).apply(anatomy) + cfg.contrast_for(modality) * tumor
    noise = rng.normal(0.0, cfg.noise_sigma, size=cfg.dims) if cfg.noise_sigma > 0 else 0.0
    image = np.where(brain, np.clip(image + noise, 0.05, None), 0.0)

    return Volume(
        volume_id=f"vol{index:04d}",
        data=image.astype(np.float32),
        spacing=cfg.spacing,
        modality=modality,
        mask=mask,
        ap_label=label_from_mask(mask),
    )


def generate_phantom_dataset(cfg: PhantomConfig) -> PhantomDataset:
    """
    Generate the unpaired bi-modal phantom dataset

    Each volume is rendered in exactly one modality. Ground-truth masks are
    attached to every volume; hiding them is the caller's business.
    """
    modalities = _assign_modalities(cfg)
    volumes = [render_phantom(cfg, index, modality) for index, modality in enumerate(modalities)]
    return PhantomDataset(
        source=[v for v in volumes if v.modality == Modality.S],
        target=[v for v in volumes if v.modality == Modality.T],
    )


def tissue_region(v: Volume) -> np.ndarray:
    """Voxels whose intensity differs from the background (corner) value"""
    background = v.data[0, 0, 0]
    return np.abs(v.data - background) > TISSUE_EPSILON


def normalize_volume(v: Volume, tissue_mask: np.ndarray | None = None) -> Volume:
    """
    Mean-center on tissue, divide by five standard deviations, clip to [-1, 1]

    Args:
        v: raw volume
        tissue_mask: explicit tissue region; defaults to `tissue_region(v)`

    Raises:
        PhantomError: non-finite data or empty tissue region
    """
    if not np.isfinite(v.data).all():
        raise PhantomError(f"volume {v.volume_id} contains non-finite values")
    tissue = tissue_region(v) if tissue_mask is None else tissue_mask.astype(bool)
    if not tissue.any():
        raise PhantomError(f"empty tissue region in volume {v.volume_id}")

    values = v.data[tissue].astype(np.float64)
    mean, std = values.mean(), values.std()
    if std == 0:
        normalized = np.zeros_like(v.data)
    else:
        normalized = np.clip((v.data.astype(np.float64) - mean) / (5.0 * std), -1.0, 1.0)
    return v.model_copy(update={"data": normalized.astype(np.float32)})


def _hemisphere(v: Volume, suffix: str, sl: slice) -> Volume:
    mask = None if v.mask is None else np.ascontiguousarray(v.mask[:, :, sl])
    if mask is not None:
        label = label_from_mask(mask)
    else:
        # a healthy volume has healthy halves; otherwise the side is unknown
        label = APLabel.A if v.ap_label == APLabel.A else APLabel.UNKNOWN
    return Volume(
        volume_id=f"{v.volume_id}_{suffix}",
        data=np.ascontiguousarray(v.data[:, :, sl]),
        spacing=v.spacing,
        modality=v.modality,
        mask=mask,
        ap_label=label,
    )


def split_hemispheres(v: Volume) -> tuple[Volume, Volume]:
    """
    Split along the last (left-right) axis into two labelled halves

    Odd widths duplicate the central plane into both halves.
    """
    width = v.dims[2]
    half = width // 2
    if width % 2 == 0:
        return _hemisphere(v, "L", slice(0, half)), _hemisphere(v, "R", slice(half, width))
    return _hemisphere(v, "L", slice(0, half + 1)), _hemisphere(v, "R", slice(half, width))


def merge_hemispheres(left: np.ndarray, right: np.ndarray, width: int) -> np.ndarray:
    """Inverse of `split_hemispheres` for prediction maps (max over a shared plane)"""
    half = width // 2
    if width % 2 == 0:
        return np.concatenate([left, right], axis=2)
    merged = np.concatenate([left[:, :, :half], right], axis=2)
    merged[:, :, half] = np.maximum(left[:, :, half], right[:, :, 0])
    return merged


def slice_volume(v: Volume, axis: int = 0) -> SliceStack:
    """Split a volume into ordered 2D slices along `axis`"""
    if axis not in (0, 1, 2):
        raise PhantomError(f"slicing axis must be 0, 1 or 2, got {axis}")
    if v.data.size == 0:
        raise PhantomError(f"cannot slice empty volume {v.volume_id}")
    slices = [np.ascontiguousarray(s) for s in np.moveaxis(v.data, axis, 0)]
    mask_slices = None
    if v.mask is not None:
        mask_slices = [np.ascontiguousarray(s) for s in np.moveaxis(v.mask, axis, 0)]
    return SliceStack(
        slices=slices,
        mask_slices=mask_slices,
        source_volume_id=v.volume_id,
        axis=axis,
        spacing=v.spacing,
        modality=v.modality,
        ap_label=v.ap_label,
    )


def reassemble_volume(s: SliceStack) -> Volume:
    """Stack slices back into the volume they came from"""
    mask = None if s.mask_slices is None else np.stack(s.mask_slices, axis=s.axis)
    return Volume(
        volume_id=s.source_volume_id,
        data=np.stack(s.slices, axis=s.axis),
        spacing=s.spacing,
        modality=s.modality,
        mask=mask,
        ap_label=s.ap_label,
    )


def split_ids(ids: list[str], val_fraction: float, test_fraction: float, seed: int) -> dict[str, str]:
    """Seeded train/val/test assignment; train keeps at least one id"""
    order = [ids[i] for i in np.random.default_rng([seed, 1]).permutation(len(ids))]
    n_val = int(round(val_fraction * len(ids)))
    n_test = int(round(test_fraction * len(ids)))
    n_val = min(n_val, max(0, len(ids) - 1))
    n_test = min(n_test, max(0, len(ids) - 1 - n_val))
    splits = {}
    for position, volume_id in enumerate(order):
        if position < n_val:
            splits[volume_id] = "val"
        elif position < n_val + n_test:
            splits[volume_id] = "test"
        else:
            splits[volume_id] = "train"
    return splits


def select_annotated(ids: list[str], fraction: float, seed: int) -> set[str]:
    """Seeded subset of `fraction` of the ids (at least one when fraction > 0)"""
    if fraction <= 0 or not ids:
        return set()
    count = min(len(ids), max(1, int(round(fraction * len(ids)))))
    order = np.random.default_rng([seed, 2]).permutation(len(ids))
    return {ids[i] for i in order[:count]}
