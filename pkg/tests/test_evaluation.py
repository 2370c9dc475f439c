import json

import numpy as np
import pandas as pd
import pytest

from core.exceptions import DatasetError, MetricError, ShapeMismatchError
from evaluation.entities import EvalResult, VolumeMetrics
from evaluation.plots import bar_heights
from evaluation.repositories import CSV_COLUMNS, ReportRepository
from evaluation.services import assd, dice_score, evaluate_model, volume_metrics
from evaluation.usecases import ATTENTION_NAME, EmitReportUseCase, EvaluateCheckpointUseCase, emit_report
from tests.conftest import make_volume


def _voxels(*coords, dims=(8, 8, 8)) -> np.ndarray:
    mask = np.zeros(dims, dtype=bool)
    for c in coords:
        mask[c] = True
    return mask


# --- Dice ---

def test_dice_hand_computed():
    assert dice_score(_voxels((1, 1, 1)), _voxels((1, 1, 1), (1, 1, 2))) == pytest.approx(2 / 3)


def test_dice_edge_cases():
    mask = _voxels((2, 2, 2), (3, 3, 3))
    assert dice_score(mask, mask) == 1.0
    assert dice_score(_voxels((0, 0, 0)), _voxels((5, 5, 5))) == 0.0
    assert dice_score(_voxels(), _voxels()) == 1.0


def test_dice_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        dice_score(np.zeros((4, 4, 4)), np.zeros((4, 4, 5)))


# --- ASSD ---

def test_assd_single_voxels_three_apart():
    assert assd(_voxels((4, 4, 1)), _voxels((4, 4, 4))) == pytest.approx(3.0)


def test_assd_scales_with_spacing():
    assert assd(_voxels((4, 4, 1)), _voxels((4, 4, 4)), spacing=(1.0, 1.0, 0.5)) == pytest.approx(1.5)


def test_assd_is_symmetric_and_zero_on_identity():
    a = _voxels((2, 2, 2), (2, 2, 3), (2, 3, 3))
    b = _voxels((5, 5, 5), (5, 6, 5))
    assert assd(a, a) == 0.0
    assert assd(a, b) == pytest.approx(assd(b, a))
    assert assd(a, b) > 0.0


def test_assd_uses_surface_voxels_only():
    cube = np.zeros((9, 9, 9), dtype=bool)
    cube[2:7, 2:7, 2:7] = True
    inner = np.zeros_like(cube)
    inner[4, 4, 4] = True
    # the centre voxel is 2 voxels from the nearest face of the cube
    assert assd(inner, cube) > 2.0


@pytest.mark.parametrize("pred, gt", [
    (_voxels(), _voxels((1, 1, 1))),
    (_voxels((1, 1, 1)), _voxels()),
])
def test_assd_undefined_for_empty_masks(pred, gt):
    with pytest.raises(MetricError, match="undefined surface distance"):
        assd(pred, gt)


def test_volume_metrics_flags_both_empty():
    metrics = volume_metrics("v", _voxels(), _voxels(), (1.0, 1.0, 1.0))
    assert metrics.both_empty and metrics.dice == 1.0 and metrics.assd is None


# --- evaluation ---

def _labelled(count: int) -> list:
    return [
        make_volume(f"v{i}", dims=(8, 8, 8), mask=_voxels((i, 2, 2), (i, 2, 3)).astype(np.uint8), seed=i)
        for i in range(count)
    ]


def test_oracle_predictor_scores_perfectly():
    result = evaluate_model(lambda v: v.mask.astype(np.float32), _labelled(3), "oracle")
    assert result.dice_mean == 1.0
    assert result.assd_mean == 0.0
    assert result.assd_undefined == 0


def test_empty_predictor():
    result = evaluate_model(lambda v: np.zeros(v.dims, dtype=np.float32), _labelled(3), "empty")
    assert result.dice_mean == pytest.approx(0.0)
    assert result.assd_mean is None
    assert result.assd_undefined == 3


def test_threshold_is_applied():
    volumes = _labelled(2)
    result = evaluate_model(lambda v: 0.4 * v.mask, volumes, "soft", threshold=0.3)
    assert result.dice_mean == 1.0
    result = evaluate_model(lambda v: 0.4 * v.mask, volumes, "soft", threshold=0.5)
    assert result.dice_mean == 0.0


def test_unlabelled_volumes_are_skipped():
    volumes = _labelled(2) + [make_volume("unlabelled", dims=(8, 8, 8))]
    result = evaluate_model(lambda v: v.mask, volumes, "partial")
    assert [m.volume_id for m in result.per_volume] == ["v0", "v1"]
    with pytest.raises(DatasetError):
        evaluate_model(lambda v: v.mask, [make_volume(dims=(8, 8, 8))], "none")


# --- reports ---

def _result(name: str, **metadata) -> EvalResult:
    return EvalResult(
        experiment=name,
        per_volume=[
            VolumeMetrics(volume_id="a", dice=0.8, assd=1.5),
            VolumeMetrics(volume_id="b", dice=1.0, both_empty=True),
        ],
        metadata=metadata,
    )


def test_metrics_csv_columns(tmp_path):
    metrics_path, summary_path = ReportRepository(tmp_path).save([_result("semi"), _result("self")])
    frame = pd.read_csv(metrics_path)
    assert list(frame.columns) == CSV_COLUMNS == ["experiment", "volume_id", "dice", "assd"]
    assert len(frame) == 4
    summary = json.loads(summary_path.read_text())
    assert summary["semi"]["dice_mean"] == pytest.approx(0.9)
    assert summary["semi"]["both_empty_ids"] == ["b"]


def test_report_round_trip(tmp_path):
    repo = ReportRepository(tmp_path)
    repo.save([_result("semi", variant="semi_supervised")])
    (loaded,) = repo.load()
    assert loaded.experiment == "semi"
    assert loaded.metadata == {"variant": "semi_supervised"}
    assert [(m.assd, m.both_empty) for m in loaded.per_volume] == [(1.5, False), (None, True)]


def test_load_missing_report(tmp_path):
    with pytest.raises(DatasetError):
        ReportRepository(tmp_path).load()


def test_emit_report_files(tmp_path):
    results = [
        _result("semi-40", variant="semi_supervised", source_fraction=0.4),
        _result("semi-100", variant="semi_supervised", source_fraction=1.0),
        _result("self-100", variant="self_supervised", source_fraction=1.0),
    ]
    iterations = [{"iteration": 1, "val_dice_before": 0.5, "val_dice_after": 0.6}]
    written = emit_report(results, tmp_path, self_training=iterations)
    names = {p.name for p in written}
    assert {"metrics.csv", "summary.json", "dice_by_experiment.png", "dice_vs_fraction.png", "self_training.png"} <= names
    assert all(p.exists() and p.stat().st_size > 0 for p in written)


def test_emit_report_without_fractions_skips_the_curve(tmp_path):
    names = {p.name for p in emit_report([_result("only")], tmp_path)}
    assert "dice_vs_fraction.png" not in names


def test_emit_report_needs_results(tmp_path):
    with pytest.raises(DatasetError):
        emit_report([], tmp_path)


def test_report_use_case_merges_directories(tmp_path):
    ReportRepository(tmp_path / "a").save([_result("semi")])
    ReportRepository(tmp_path / "b").save([_result("self")])
    written = EmitReportUseCase().execute([tmp_path / "a", tmp_path / "b"], tmp_path / "report")
    frame = pd.read_csv(next(p for p in written if p.name == "metrics.csv"))
    assert set(frame["experiment"]) == {"semi", "self"}


def test_evaluate_checkpoint(tmp_path, settings, trained_segmenter, target_volumes):
    result = EvaluateCheckpointUseCase(settings).execute(
        trained_segmenter.best_checkpoint, target_volumes, "tiny", out_dir=tmp_path
    )
    assert len(result.per_volume) == len(target_volumes)
    assert result.metadata["variant"] == "semi_supervised"
    assert all(0.0 <= m.dice <= 1.0 for m in result.per_volume)
    heads = json.loads((tmp_path / ATTENTION_NAME).read_text())
    assert heads and all(0.0 < h["confidence"] <= 1.0 for h in heads)
    assert (tmp_path / "metrics.csv").exists()


def test_missing_self_training_dice_is_drawn_as_zero(tmp_path):
    csv = tmp_path / "self_training.csv"
    pd.DataFrame([
        {"iteration": 1, "val_dice_before": None, "val_dice_after": 0.7},
        {"iteration": 2, "val_dice_before": 0.7, "val_dice_after": None},
    ]).to_csv(csv, index=False)
    rows = pd.read_csv(csv).to_dict("records")

    assert bar_heights(rows, "val_dice_before") == [0.0, 0.7]
    assert bar_heights(rows, "val_dice_after") == [0.7, 0.0]
    assert bar_heights([{"iteration": 1}], "val_dice_after") == [0.0]

    ReportRepository(tmp_path / "a").save([_result("semi")])
    written = EmitReportUseCase().execute([tmp_path / "a"], tmp_path / "report", csv)
    assert "self_training.png" in {p.name for p in written}
