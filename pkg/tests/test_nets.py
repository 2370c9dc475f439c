import pytest
import torch
import torch.nn as nn

from core.exceptions import CheckpointError, ModelConfigError
from nets.discriminators import build_discriminator
from nets.entities import (
    AttentionRecord, DecoderMode, DiscriminatorConfig, GeneratorConfig, SegmentationConfig, Variant
)
from nets.generators import build_translation_generator, build_translation_model
from nets.repositories import load_checkpoint, read_manifest, save_checkpoint
from nets.segmentation import build_segmentation_model, encode_partition
from nets.services import (
    audit_parameter_sharing, capture_attention, count_parameters, head_confidence, most_confident_heads
)
from tests.conftest import HEMISPHERE_DIMS, tiny_segmentation_config, tiny_translation_config


def _input(*shape, seed=0) -> torch.Tensor:
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed)) * 2 - 1


@pytest.fixture
def semi_model():
    torch.manual_seed(0)
    return build_segmentation_model(tiny_segmentation_config()).eval()


# --- translation generators ---

def test_generator_keeps_spatial_dims():
    generator = build_translation_generator(
        GeneratorConfig(base_channels=16, depth=3, attention_layers=1, attention_heads=4, image_size=(64, 64))
    ).eval()
    with torch.no_grad():
        image, seg = generator(_input(2, 1, 64, 64))
    assert image.shape == seg.shape == (2, 1, 64, 64)
    assert image.abs().max() < 1.0
    assert seg.min() > 0.0 and seg.max() < 1.0


def test_generator_decoders_are_disjoint_copies():
    generator = build_translation_generator(tiny_translation_config().generator)
    translator = dict(generator.translator.named_parameters())
    segmenter = dict(generator.segmenter.named_parameters())
    assert translator.keys() == segmenter.keys()
    assert all(translator[k].shape == segmenter[k].shape for k in translator)
    assert not {id(p) for p in translator.values()} & {id(p) for p in segmenter.values()}


def test_generator_rejects_indivisible_size():
    with pytest.raises(ModelConfigError):
        build_translation_generator(GeneratorConfig(depth=2, image_size=(30, 30)))


def test_translation_model_wiring():
    model = build_translation_model(tiny_translation_config())
    generator_ids = {id(p) for p in model.generator_parameters()}
    assert not generator_ids & {id(p) for p in model.discriminator_parameters()}
    assert not {id(p) for p in model.generator_st.parameters()} & {id(p) for p in model.generator_ts.parameters()}


# --- discriminators ---

def test_discriminator_channel_schedule():
    assert DiscriminatorConfig(scale=1.0).channels == (60, 60, 120, 240, 480, 1)
    assert DiscriminatorConfig(scale=0.25).channels == (15, 15, 30, 60, 120, 1)


def test_discriminator_uses_leaky_relu():
    discriminator = build_discriminator(DiscriminatorConfig(scale=0.25, input_size=(32, 32)))
    slopes = {m.negative_slope for m in discriminator.modules() if isinstance(m, nn.LeakyReLU)}
    assert slopes == {0.2}


def test_discriminator_score_is_mean_of_scales():
    discriminator = build_discriminator(DiscriminatorConfig(scale=0.25, num_scales=2, input_size=(32, 32)))
    x = _input(2, 1, 32, 32)
    with torch.no_grad():
        maps = discriminator(x)
        score = discriminator.score(x)
    assert len(maps) == 2
    assert score.item() == pytest.approx((maps[0].mean() + maps[1].mean()).item() / 2, abs=1e-6)


def test_discriminator_3d():
    cfg = DiscriminatorConfig(dims=3, scale=0.1, num_scales=1, n_strided=2, input_size=HEMISPHERE_DIMS)
    maps = build_discriminator(cfg)(_input(1, 1, *HEMISPHERE_DIMS))
    assert maps[0].shape[1] == 1 and maps[0].ndim == 5


def test_discriminator_receptive_field():
    with pytest.raises(ModelConfigError, match="receptive field"):
        build_discriminator(DiscriminatorConfig(num_scales=2, n_strided=4, input_size=(16, 16)))
    discriminator = build_discriminator(DiscriminatorConfig(scale=0.1, num_scales=1, n_strided=2, input_size=(16, 16)))
    with pytest.raises(ModelConfigError):
        discriminator(_input(1, 1, 2, 2))


# --- segmentation models ---

def test_default_schedules():
    assert SegmentationConfig(variant=Variant.SEMI_SUPERVISED).encoder_channels == (32, 64, 128, 256, 320)
    assert SegmentationConfig(variant=Variant.SELF_SUPERVISED).encoder_channels == (16, 32, 64, 128, 256)


def test_scaled_default_models_order_by_parameters():
    # default channel schedules: semi-supervised 32..320, self-supervised 16..256;
    # the wider semi-supervised model also carries the presence/absence decoders
    semi = build_segmentation_model(SegmentationConfig(variant=Variant.SEMI_SUPERVISED, width=0.25))
    self_supervised = build_segmentation_model(SegmentationConfig(variant=Variant.SELF_SUPERVISED, width=0.25))
    assert count_parameters(semi) > count_parameters(self_supervised)


def test_self_supervised_model_has_no_translation_parts():
    model = build_segmentation_model(tiny_segmentation_config(Variant.SELF_SUPERVISED))
    assert model.common_decoder is None and model.res_decoder is None
    assert model.disc_A is None and model.disc_P is None
    with pytest.raises(ModelConfigError):
        audit_parameter_sharing(model)


def test_schedule_length_mismatch():
    with pytest.raises(ValueError):
        tiny_segmentation_config(encoder_convs=(1, 1))


def test_indivisible_input_dims():
    with pytest.raises(ModelConfigError):
        build_segmentation_model(tiny_segmentation_config(input_dims=(10, 16, 8)))


def test_segment_output_range_and_shape(semi_model):
    x = _input(2, 1, *HEMISPHERE_DIMS)
    with torch.no_grad():
        prob = semi_model(x)
    assert prob.shape == x.shape
    assert prob.min() > 0.0 and prob.max() < 1.0
    with torch.no_grad():
        assert torch.equal(prob, semi_model(x))


def test_sharing_audit_passes(semi_model):
    audit = audit_parameter_sharing(semi_model)
    assert audit.passed
    assert audit.shared == audit.body > 0
    assert any(name.startswith("heads.residual") for name in audit.residual_only)
    assert any(name.startswith("heads.segmentation") for name in audit.segmentation_only)


def test_separate_decoders_fail_the_audit():
    model = build_segmentation_model(tiny_segmentation_config(shared_decoder=False))
    assert model.res_decoder is not model.seg_decoder
    assert not audit_parameter_sharing(model).passed


def _decode(model, x, mode: DecoderMode) -> torch.Tensor:
    features = model.encode(x)
    return model.seg_decoder(features[-1], features, mode)


def test_shared_body_weight_changes_both_modes(semi_model):
    x = _input(1, 1, *HEMISPHERE_DIMS)
    with torch.no_grad():
        before = {mode: _decode(semi_model, x, mode) for mode in DecoderMode}
        name, weight = next(iter(semi_model.seg_decoder.body_parameters()))
        weight.add_(0.5)
        after = {mode: _decode(semi_model, x, mode) for mode in DecoderMode}
    for mode in DecoderMode:
        assert not torch.equal(before[mode], after[mode]), name


def test_segmentation_norm_leaves_residual_untouched(semi_model):
    x = _input(1, 1, *HEMISPHERE_DIMS)
    with torch.no_grad():
        residual = _decode(semi_model, x, DecoderMode.RESIDUAL)
        segmentation = _decode(semi_model, x, DecoderMode.SEGMENTATION)
        for name, p in semi_model.seg_decoder.named_parameters():
            if ".norms.segmentation." in name:
                p.mul_(1.5).add_(0.1)
        assert torch.equal(residual, _decode(semi_model, x, DecoderMode.RESIDUAL))
        assert not torch.equal(segmentation, _decode(semi_model, x, DecoderMode.SEGMENTATION))


def test_shared_decoder_needs_explicit_mode(semi_model):
    features = semi_model.encode(_input(1, 1, *HEMISPHERE_DIMS))
    with pytest.raises(ModelConfigError):
        semi_model.seg_decoder(features[-1], features, None)


def test_latent_partition_ratio():
    assert SegmentationConfig(variant=Variant.SEMI_SUPERVISED).common_channels == 240


def test_encode_partition(semi_model):
    x = _input(2, 1, *HEMISPHERE_DIMS)
    with torch.no_grad():
        code = encode_partition(semi_model, x)
        bottleneck = semi_model.encode(x)[-1]
        again = encode_partition(semi_model, x)
    assert code.c.shape[1] == semi_model.cfg.common_channels
    assert code.u.shape == semi_model.cfg.unique_code_shape(2)
    assert torch.equal(code.joined(), bottleneck)
    assert torch.equal(code.c, again.c) and torch.equal(code.u, again.u)


# --- attention ---

def test_attention_rows_are_distributions(semi_model):
    record = capture_attention(semi_model, _input(2, 1, *HEMISPHERE_DIMS))
    assert record.layers
    for weights in record.layers.values():
        torch.testing.assert_close(weights.sum(-1), torch.ones_like(weights.sum(-1)), atol=1e-5, rtol=0)
    confidences = head_confidence(record)
    assert len(confidences) == len(record.heads())
    assert all(0.0 < h.confidence <= 1.0 for h in confidences)


def test_head_confidence_oracles():
    one_hot = torch.eye(8).expand(1, 1, 8, 8)
    uniform = torch.full((1, 1, 8, 8), 1 / 8)
    record = AttentionRecord(layers={"one_hot": one_hot, "uniform": uniform})
    by_layer = {h.layer: h.confidence for h in head_confidence(record)}
    assert by_layer["one_hot"] == pytest.approx(1.0)
    assert by_layer["uniform"] == pytest.approx(0.125)
    assert most_confident_heads(record, top=1)[0].layer == "one_hot"


def test_capture_without_attention_raises():
    model = build_segmentation_model(tiny_segmentation_config(encoder_trans=(0, 0, 0), encoder_heads=(0, 0, 0)))
    with pytest.raises(ModelConfigError, match="no attention"):
        capture_attention(model, _input(1, 1, *HEMISPHERE_DIMS))


# --- checkpoints ---

def test_checkpoint_round_trip(tmp_path, semi_model):
    path = save_checkpoint(semi_model, semi_model.cfg, "segmentation", tmp_path / "model.pt", {"epoch": 3})
    restored, manifest = load_checkpoint(path, "segmentation")
    assert manifest.extra == {"epoch": 3}
    assert read_manifest(path).family == "segmentation"
    x = _input(1, 1, *HEMISPHERE_DIMS)
    with torch.no_grad():
        assert torch.equal(restored.eval()(x), semi_model(x))


def test_checkpoint_family_mismatch(tmp_path, semi_model):
    path = save_checkpoint(semi_model, semi_model.cfg, "segmentation", tmp_path / "model.pt")
    with pytest.raises(CheckpointError, match="translation"):
        load_checkpoint(path, "translation")


def test_checkpoint_shape_mismatch(tmp_path, semi_model):
    path = save_checkpoint(semi_model, semi_model.cfg, "segmentation", tmp_path / "model.pt")
    archive = torch.load(path, weights_only=True)
    name = next(iter(archive["state"]))
    archive["state"][name] = torch.zeros(1)
    torch.save(archive, path)
    with pytest.raises(CheckpointError, match="shapes differ"):
        load_checkpoint(path, "segmentation")


def test_checkpoint_missing_parameter(tmp_path, semi_model):
    path = save_checkpoint(semi_model, semi_model.cfg, "segmentation", tmp_path / "model.pt")
    archive = torch.load(path, weights_only=True)
    archive["state"].pop(next(iter(archive["state"])))
    torch.save(archive, path)
    with pytest.raises(CheckpointError, match="missing"):
        load_checkpoint(path, "segmentation")


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.pt", "segmentation")
