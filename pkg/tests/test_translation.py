import json
import math

import numpy as np
import pandas as pd
import pytest
import torch
import torch.nn as nn

from core.exceptions import DatasetError, ShapeMismatchError
from losses.entities import Stage1Weights
from nets.discriminators import build_discriminator
from nets.entities import DiscriminatorConfig
from nets.generators import TranslationModel, build_translation_model
from translation.datasets import SliceDataset, augment
from translation.repositories import PseudoTargetRepository
from translation.services import cycle_step, held_out_metrics, synthesize_volume
from translation.usecases import LOG_NAME, VALIDATION_NAME, SynthesizePseudoTargetsUseCase, TrainTranslationUseCase
from tests.conftest import PHANTOM_DIMS, tiny_stage1_config, tiny_translation_config

SLICE = PHANTOM_DIMS[1:]


class IdentityGenerator(nn.Module):
    """One 1x1 convolution initialized to the identity"""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(1, 1, kernel_size=1, bias=False)
        nn.init.ones_(self.conv.weight)

    def encode(self, x):
        return [self.conv(x)]

    def translate(self, features):
        return features[-1]

    def segment(self, features):
        return torch.sigmoid(features[-1])


def _identity_model() -> TranslationModel:
    disc_cfg = DiscriminatorConfig(scale=0.1, num_scales=1, n_strided=2, input_size=SLICE)
    return TranslationModel(IdentityGenerator(), IdentityGenerator(), build_discriminator(disc_cfg), build_discriminator(disc_cfg))


def _batch(n: int, seed: int) -> torch.Tensor:
    return torch.rand(n, 1, *SLICE, generator=torch.Generator().manual_seed(seed)) * 2 - 1


# --- cycle pass ---

def test_cycle_step_shapes_and_finiteness():
    model = build_translation_model(tiny_translation_config())
    y_S = (torch.rand(3, 1, *SLICE) > 0.8).float()
    out = cycle_step(model, _batch(3, 0), _batch(3, 1), y_S)

    for tensor in (out.x_S_prime, out.x_S_cycled, out.x_T_prime, out.x_T_cycled, out.y_S_hat, out.y_S_prime_hat):
        assert tensor.shape == (3, 1, *SLICE)
        assert torch.isfinite(tensor).all()
    assert set(out.losses) == {"adv_mod", "cyc", "seg_mod"}
    assert all(math.isfinite(v.item()) for v in out.losses.values())


def test_cycle_step_without_masks_has_no_segmentation_term():
    model = build_translation_model(tiny_translation_config())
    assert "seg_mod" not in cycle_step(model, _batch(2, 0), _batch(2, 1)).losses


def test_cycle_step_skips_unannotated_slices():
    model = build_translation_model(tiny_translation_config())
    y_S = torch.ones(2, 1, *SLICE)
    out = cycle_step(model, _batch(2, 0), _batch(2, 1), y_S, annotated=torch.tensor([False, False]))
    assert "seg_mod" not in out.losses


def test_identity_generators_have_zero_cycle_loss():
    x_S = _batch(2, 0)
    out = cycle_step(_identity_model(), x_S, _batch(2, 1))
    assert torch.equal(out.x_S_cycled, x_S)
    assert out.losses["cyc"].item() == 0.0


def test_cycle_step_rejects_mismatched_modalities():
    model = build_translation_model(tiny_translation_config())
    with pytest.raises(ShapeMismatchError):
        cycle_step(model, _batch(2, 0), torch.zeros(2, 1, 8, 8))


def test_segmentation_weight_zero_is_plain_cycle_gan():
    weights = Stage1Weights(seg_mod=0.0).to_loss_weights()
    assert weights["seg_mod"] == 0.0
    assert weights["adv_mod"] + weights["cyc"] == pytest.approx(1.0)


def test_held_out_metrics_share_the_evaluation_dice():
    # identity generators segment every positive pixel
    images = -torch.ones(3, 1, *SLICE)
    images[0, 0, 2:4, 2:4] = 1.0
    masks = torch.zeros(3, 1, *SLICE)
    masks[0, 0, 2:4, 2:6] = 1.0
    masks[2, 0, 0, 0] = 1.0
    annotated = torch.tensor([True, True, False])

    metrics = held_out_metrics(_identity_model(), images, masks, annotated)
    assert metrics["cyc_mae"] == 0.0
    assert metrics["seg_dice"] == pytest.approx(2 * 4 / (4 + 8))

    healthy = held_out_metrics(_identity_model(), -torch.ones(2, 1, *SLICE), torch.zeros(2, 1, *SLICE), annotated[:2])
    assert healthy["seg_dice"] == 1.0
    assert "seg_dice" not in held_out_metrics(_identity_model(), images, masks, torch.zeros(3, dtype=torch.bool))


# --- slices ---

def test_slice_dataset_flags_annotated_volumes(source_volumes):
    annotated = {source_volumes[0].volume_id}
    dataset = SliceDataset(source_volumes[:2], axis=0, annotated_ids=annotated)
    depth = PHANTOM_DIMS[0]
    assert len(dataset) == 2 * depth
    assert dataset.annotated[:depth].all() and not dataset.annotated[depth:].any()
    assert not dataset.masks[depth:].any()


def test_slice_dataset_rejects_empty():
    with pytest.raises(DatasetError):
        SliceDataset([])


def test_augment_keeps_range_and_binary_masks():
    images = _batch(4, 0)
    masks = (torch.rand(4, 1, *SLICE, generator=torch.Generator().manual_seed(1)) > 0.7).float()
    out_images, out_masks = augment(images, masks, torch.Generator().manual_seed(2))
    assert out_images.shape == images.shape
    assert out_images.abs().max() <= 1.0
    assert set(out_masks.unique().tolist()) <= {0.0, 1.0}


# --- synthesis ---

def test_synthesis_copies_masks(source_volumes):
    v = source_volumes[0]
    pseudo = synthesize_volume(IdentityGenerator(), v)
    assert pseudo.volume_id == f"pT_{v.volume_id}"
    assert pseudo.modality.value == "T"
    np.testing.assert_array_equal(pseudo.mask, v.mask)
    np.testing.assert_array_equal(pseudo.data, v.data)


def test_synthesis_is_batch_order_invariant(source_volumes):
    torch.manual_seed(0)
    generator = build_translation_model(tiny_translation_config()).generator_st.eval()
    v = source_volumes[1]
    one_by_one = synthesize_volume(generator, v, batch_size=1)
    all_at_once = synthesize_volume(generator, v, batch_size=64)
    np.testing.assert_allclose(one_by_one.data, all_at_once.data, atol=1e-6)
    assert np.abs(all_at_once.data).max() < 1.0


# --- training and synthesis use cases ---

@pytest.fixture(scope="module")
def stage1(tmp_path_factory, settings, source_volumes, target_volumes):
    out_dir = tmp_path_factory.mktemp("stage1")
    result = TrainTranslationUseCase(settings).execute(
        tiny_stage1_config(),
        source_volumes,
        target_volumes,
        out_dir,
        annotated_ids={v.volume_id for v in source_volumes[:4]},
        validation=source_volumes[4:],
    )
    return result


def test_training_writes_checkpoint_per_epoch(stage1):
    assert len(stage1.checkpoints) == 2
    assert all(p.exists() for p in stage1.checkpoints)
    assert stage1.checkpoint.name == "last.pt" and stage1.checkpoint.exists()
    assert {"cyc_mae"} <= set(stage1.validation)
    stored = json.loads((stage1.checkpoint.parent.parent / VALIDATION_NAME).read_text())
    assert stored == pytest.approx(stage1.validation)


def test_training_log_columns(stage1):
    log = pd.read_csv(stage1.log_path)
    assert stage1.log_path.name == LOG_NAME
    assert list(log.columns) == ["epoch", "L_adv_mod_D", "L_adv_mod_G", "L_cyc", "L_seg_mod", "wall_time_s"]
    assert len(log) == 2
    assert np.isfinite(log.drop(columns="epoch").to_numpy()).all()


def test_training_is_reproducible(tmp_path, settings, source_volumes, target_volumes, stage1):
    again = TrainTranslationUseCase(settings).execute(
        tiny_stage1_config(epochs=1),
        source_volumes,
        target_volumes,
        tmp_path,
        annotated_ids={v.volume_id for v in source_volumes[:4]},
    )
    first, second = stage1.history[0], again.history[0]
    for name in ("L_adv_mod_D", "L_adv_mod_G", "L_cyc", "L_seg_mod"):
        assert getattr(first, name) == getattr(second, name)


def test_training_rejects_empty_modality(tmp_path, settings, source_volumes):
    with pytest.raises(DatasetError):
        TrainTranslationUseCase(settings).execute(tiny_stage1_config(), source_volumes, [], tmp_path)


def test_synthesize_use_case(tmp_path, settings, stage1, source_volumes):
    dataset = SynthesizePseudoTargetsUseCase(settings).execute(stage1.checkpoint, source_volumes, tmp_path)

    assert len(dataset.volumes) == len(source_volumes)
    assert dataset.checkpoint_id == "last.pt"
    for pseudo, source in zip(dataset.volumes, source_volumes):
        assert dataset.source_ids[pseudo.volume_id] == source.volume_id
        np.testing.assert_array_equal(pseudo.mask, source.mask)
        assert np.abs(pseudo.data).max() < 1.0

    stored = PseudoTargetRepository(tmp_path).load()
    assert stored.source_ids == dataset.source_ids
    assert stored.checkpoint_id == "last.pt"


def test_synthesize_rejects_incompatible_volumes(tmp_path, settings, stage1, source_volumes):
    v = source_volumes[0]
    wrong = v.model_copy(update={"data": v.data[:, :10, :10].copy(), "mask": v.mask[:, :10, :10].copy()})
    with pytest.raises(ShapeMismatchError):
        SynthesizePseudoTargetsUseCase(settings).execute(stage1.checkpoint, [wrong], tmp_path)
