"""
Shared fixtures: phantoms and networks small enough to train on a CPU in seconds
"""
import numpy as np
import pytest
from sqlalchemy.orm import sessionmaker

from core.database.providers import build_engine
from core.environment.config import Settings
from losses.entities import Stage2Weights
from nets.entities import (
    DiscriminatorConfig, GeneratorConfig, SegmentationConfig, TranslationModelConfig, Variant
)
from phantoms.entities import APLabel, Modality, PhantomConfig, Volume
from phantoms.services import normalize_volume, render_phantom
from segmentation.entities import Stage2Config
from translation.entities import Stage1Config

PHANTOM_DIMS = (8, 16, 16)
HEMISPHERE_DIMS = (8, 16, 8)

TINY_PHANTOM = PhantomConfig(
    volume_count=12,
    dims=PHANTOM_DIMS,
    tumor_radius_range=(1.5, 2.5),
    max_blobs=2,
    seed=3,
)


def tiny_segmentation_config(variant: Variant = Variant.SEMI_SUPERVISED, **overrides) -> SegmentationConfig:
    """Three levels (4, 8, 16 channels), attention only at the bottleneck"""
    data = dict(
        variant=variant,
        channels=(4, 8, 16),
        encoder_convs=(1, 1, 0),
        encoder_trans=(0, 0, 1),
        encoder_heads=(0, 0, 2),
        decoder_channels=(8, 4),
        decoder_convs=(1, 1),
        decoder_trans=(0, 0),
        decoder_heads=(0, 0),
        input_dims=HEMISPHERE_DIMS,
        discriminator=DiscriminatorConfig(
            dims=3, scale=0.1, num_scales=1, n_strided=2, input_size=HEMISPHERE_DIMS
        ),
    )
    data.update(overrides)
    return SegmentationConfig(**data)


def tiny_translation_config() -> TranslationModelConfig:
    return TranslationModelConfig(
        generator=GeneratorConfig(
            base_channels=4, depth=2, attention_layers=1, attention_heads=2, image_size=PHANTOM_DIMS[1:]
        ),
        discriminator=DiscriminatorConfig(scale=0.1, num_scales=1, n_strided=2, input_size=PHANTOM_DIMS[1:]),
    )


def tiny_stage1_config(**overrides) -> Stage1Config:
    data = dict(
        epochs=2,
        batch_size=4,
        augmentation=False,
        model=tiny_translation_config(),
        steps_per_epoch=2,
        seed=0,
    )
    data.update(overrides)
    return Stage1Config(**data)


def tiny_stage2_config(variant: Variant = Variant.SEMI_SUPERVISED, **overrides) -> Stage2Config:
    data = dict(
        variant=variant,
        epochs=2,
        batch_size=2,
        weights=Stage2Weights().resolved(1.0),
        val_fraction=0.25,
        model=tiny_segmentation_config(variant),
        steps_per_epoch=2,
        seed=0,
    )
    data.update(overrides)
    return Stage2Config(**data)


def make_volume(
    volume_id: str = "vol",
    dims: tuple[int, int, int] = PHANTOM_DIMS,
    mask: np.ndarray | None = None,
    modality: Modality = Modality.T,
    seed: int = 0,
    ap_label: APLabel | None = None,
) -> Volume:
    """Random intensities in [-1, 1] with an optional mask"""
    data = np.random.default_rng(seed).uniform(-1.0, 1.0, size=dims).astype(np.float32)
    if ap_label is None:
        ap_label = APLabel.UNKNOWN if mask is None else (APLabel.P if mask.any() else APLabel.A)
    return Volume(volume_id=volume_id, data=data, modality=modality, mask=mask, ap_label=ap_label)


def _rendered(modality: Modality, first_index: int) -> list[Volume]:
    """Three diseased then three healthy normalized phantoms"""
    diseased = TINY_PHANTOM.model_copy(update={"tumor_probability": 1.0})
    healthy = TINY_PHANTOM.model_copy(update={"tumor_probability": 0.0})
    volumes = [render_phantom(diseased, first_index + i, modality) for i in range(3)]
    volumes += [render_phantom(healthy, first_index + i, modality) for i in range(3, 6)]
    return [normalize_volume(v) for v in volumes]


@pytest.fixture(scope="session")
def source_volumes() -> list[Volume]:
    return _rendered(Modality.S, 0)


@pytest.fixture(scope="session")
def target_volumes() -> list[Volume]:
    return _rendered(Modality.T, 6)


@pytest.fixture(scope="session")
def settings(tmp_path_factory) -> Settings:
    return Settings(
        _env_file=None,
        output_root=tmp_path_factory.mktemp("runs"),
        device="cpu",
        deterministic=True,
    )


@pytest.fixture
def session():
    """Manifest session on a fresh in-memory SQLite database"""
    engine = build_engine("sqlite://")
    with sessionmaker(bind=engine, expire_on_commit=False)() as s:
        yield s
    engine.dispose()


@pytest.fixture(scope="session")
def trained_segmenter(tmp_path_factory, settings, source_volumes, target_volumes):
    """Two-epoch semi-supervised model; source phantoms stand in for pseudo-targets"""
    from segmentation.usecases import TrainSegmentationUseCase

    out_dir = tmp_path_factory.mktemp("stage2")
    return TrainSegmentationUseCase(settings).execute(
        tiny_stage2_config(), source_volumes, target_volumes, out_dir
    )
