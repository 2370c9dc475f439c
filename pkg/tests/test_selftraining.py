import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from core.exceptions import ConfigError, DatasetError
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.entities import PseudoLabelSet, SelfTrainingConfig
from selftraining.repositories import PseudoLabelRepository
from selftraining.services import generate_pseudo_labels, threshold_probabilities
from selftraining.usecases import METRICS_NAME, RunSelfTrainingUseCase
from tests.conftest import HEMISPHERE_DIMS, make_volume, tiny_stage2_config


def test_threshold_is_inclusive():
    out = threshold_probabilities(np.array([0.59, 0.60, 0.61]), 0.6)
    np.testing.assert_array_equal(out, [0, 1, 1])
    assert out.dtype == np.uint8


def test_higher_alpha_never_adds_voxels():
    rng = np.random.default_rng(0)
    for _ in range(100):
        prob = rng.random((4, 4, 4))
        low, high = sorted(rng.uniform(0.05, 0.95, size=2))
        assert (threshold_probabilities(prob, high) <= threshold_probabilities(prob, low)).all()


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_thresholding_binary_masks_is_idempotent(alpha):
    mask = (np.random.default_rng(1).random((4, 4, 4)) > 0.5).astype(np.float32)
    np.testing.assert_array_equal(threshold_probabilities(mask, alpha), mask)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2])
def test_alpha_outside_unit_interval(alpha, trained_segmenter):
    from nets.repositories import load_checkpoint

    model, _ = load_checkpoint(trained_segmenter.checkpoint, "segmentation")
    with pytest.raises(ConfigError):
        generate_pseudo_labels(model, [make_volume(dims=HEMISPHERE_DIMS)], alpha, "ckpt")
    with pytest.raises(ValidationError):
        SelfTrainingConfig(alpha=alpha)


def test_generated_labels_are_binary(trained_segmenter):
    from nets.repositories import load_checkpoint

    model, _ = load_checkpoint(trained_segmenter.checkpoint, "segmentation")
    volumes = [make_volume(f"h{i}", dims=HEMISPHERE_DIMS, seed=i) for i in range(2)]
    labels = generate_pseudo_labels(model, volumes, 0.6, "ckpt", iteration=2)
    assert set(labels.masks) == {"h0", "h1"}
    assert labels.iteration == 2
    for mask in labels.masks.values():
        assert mask.shape == HEMISPHERE_DIMS
        assert set(np.unique(mask)) <= {0, 1}


def test_pseudo_label_set_rejects_soft_masks():
    with pytest.raises(ValidationError):
        PseudoLabelSet(iteration=0, alpha=0.6, checkpoint_id="c", masks={"v": np.full((2, 2, 2), 0.5)})


def _labels(iteration: int) -> PseudoLabelSet:
    mask = np.zeros((4, 4, 4), dtype=np.uint8)
    mask[1, 2, 3] = 1
    return PseudoLabelSet(iteration=iteration, alpha=0.6, checkpoint_id=f"ckpt{iteration}", masks={"a": mask, "b": 0 * mask})


def test_store_round_trip(tmp_path):
    store = PseudoLabelRepository(tmp_path)
    store.save(_labels(0))
    loaded = store.load(0)
    assert loaded.checkpoint_id == "ckpt0"
    assert loaded.positive == 1
    np.testing.assert_array_equal(loaded.masks["a"], _labels(0).masks["a"])


def test_lineage_must_increase(tmp_path):
    store = PseudoLabelRepository(tmp_path)
    store.save(_labels(0))
    store.save(_labels(1))
    with pytest.raises(DatasetError):
        store.save(_labels(1))
    assert [e["iteration"] for e in store.lineage()] == [0, 1]
    store.reset()
    assert store.lineage() == []


def test_missing_iteration(tmp_path):
    with pytest.raises(DatasetError):
        PseudoLabelRepository(tmp_path).load(3)


def test_zero_iterations_is_a_config_error(tmp_path, settings, trained_segmenter, source_volumes, target_volumes):
    usecase = RunSelfTrainingUseCase(TrainSegmentationUseCase(settings), settings)
    with pytest.raises(ConfigError):
        usecase.execute(
            tiny_stage2_config(), SelfTrainingConfig(), trained_segmenter.checkpoint,
            source_volumes, target_volumes, tmp_path, iterations=0,
        )


def test_fully_annotated_targets_leave_nothing_to_label(tmp_path, settings, trained_segmenter, source_volumes, target_volumes):
    usecase = RunSelfTrainingUseCase(TrainSegmentationUseCase(settings), settings)
    with pytest.raises(DatasetError):
        usecase.execute(
            tiny_stage2_config(), SelfTrainingConfig(), trained_segmenter.checkpoint,
            source_volumes, target_volumes, tmp_path,
            annotated_target_ids={v.volume_id for v in target_volumes},
        )


def test_single_iteration_run(tmp_path, settings, trained_segmenter, source_volumes, target_volumes):
    usecase = RunSelfTrainingUseCase(TrainSegmentationUseCase(settings), settings)
    result = usecase.execute(
        tiny_stage2_config(),
        SelfTrainingConfig(iterations=1, epochs_per_iteration=1),
        trained_segmenter.best_checkpoint,
        source_volumes,
        target_volumes,
        tmp_path,
        iterations=1,
    )

    assert result.final_checkpoint.exists()
    metrics = pd.read_csv(result.metrics_path)
    assert result.metrics_path.name == METRICS_NAME
    assert list(metrics["iteration"]) == [1]
    assert metrics["labelled_volumes"].iloc[0] == 2 * len(target_volumes)

    lineage = PseudoLabelRepository(tmp_path / "pseudo_labels").lineage()
    assert [e["checkpoint"] for e in lineage] == [str(trained_segmenter.best_checkpoint)]
    assert result.iterations[0].val_dice_before is not None
