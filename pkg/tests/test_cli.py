from pathlib import Path

import pandas as pd
import pytest
import yaml

from cli.router import build_parser
from cli.validators import apply_overrides, load_config, parse_config
from core.exceptions import ConfigError
from main import main
from nets.generators import build_translation_model
from nets.repositories import save_checkpoint
from phantoms.repositories import VolumeRepository
from selftraining.usecases import METRICS_NAME
from tests.conftest import tiny_stage2_config, tiny_translation_config
from translation.entities import PseudoTargetDataset
from translation.repositories import PseudoTargetRepository

DESK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.yaml"


def _write(tmp_path: Path, data) -> Path:
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_desk_config_is_valid():
    cfg = load_config(DESK_CONFIG)
    assert cfg.name == "desk-semi"
    assert cfg.stage2.weights.seg_pT == 100.0
    assert cfg.stage2.alpha == cfg.self_training.alpha == 0.6


def test_seg_weight_follows_source_fraction(tmp_path):
    cfg = load_config(_write(tmp_path, {"annotation": {"source_fraction": 0.4}}))
    assert cfg.stage2.weights.seg_pT == 25.0
    assert cfg.stage2.weights.seg_st == 25.0


def test_explicit_seg_weight_wins(tmp_path):
    cfg = load_config(_write(tmp_path, {
        "annotation": {"source_fraction": 0.25},
        "stage2": {"weights": {"seg_pT": 12.0}},
    }))
    assert cfg.stage2.weights.seg_pT == 12.0


def test_unscheduled_fraction_without_weight(tmp_path):
    with pytest.raises(ConfigError, match="seg_pT"):
        load_config(_write(tmp_path, {"annotation": {"source_fraction": 0.25}}))


def test_global_seed_and_alpha_propagate():
    cfg = parse_config({"seed": 5, "self_training": {"alpha": 0.7}})
    assert cfg.phantom.seed == cfg.stage1.seed == cfg.stage2.seed == 5
    assert cfg.stage2.alpha == 0.7


@pytest.mark.parametrize("data, location", [
    ({"stage1": {"epochs": -3}}, "stage1.epochs"),
    ({"stage2": {"epochz": 3}}, "stage2.epochz"),
    ({"phantom": {"dims": [4, 16, 16]}}, "phantom.dims"),
    ({"self_training": {"alpha": 1.2}}, "self_training.alpha"),
])
def test_invalid_config_names_the_key(tmp_path, data, location):
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, data))
    assert location in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "absent.yaml")


def test_malformed_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("stage1: [epochs: 3\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(path)


def test_top_level_must_be_a_mapping(tmp_path):
    with pytest.raises(ConfigError, match="mapping"):
        load_config(_write(tmp_path, [1, 2, 3]))


def test_overrides(tmp_path):
    cfg = parse_config({"seed": 1})
    assert apply_overrides(cfg) is cfg
    changed = apply_overrides(cfg, seed=9, output=tmp_path)
    assert changed.seed == changed.stage2.seed == 9
    assert changed.output == tmp_path
    assert changed.stage_dir("eval", "abcdef0123456789") == tmp_path / "desk" / "eval" / "abcdef012345"


def test_parser_defaults():
    args = build_parser().parse_args(["run", "--config", "x.yaml"])
    assert args.resume is True
    assert build_parser().parse_args(["train-seg", "--config", "x.yaml", "--no-resume"]).resume is False
    args = build_parser().parse_args(["report", "--in", "a", "b", "--out", "r"])
    assert args.inputs == [Path("a"), Path("b")]


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train-everything"])


def test_main_exit_codes(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == 2
    assert main(["run"]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "model.pt")]) == 2
    assert main(["report", "--in", str(tmp_path / "missing"), "--out", str(tmp_path / "report")]) == 2


def test_parser_accepts_standalone_stage_commands():
    parser = build_parser()
    synth = parser.parse_args(["synth", "--checkpoint", "t.pt", "--in", "src", "--out", "pT"])
    assert (synth.checkpoint, synth.source_dir, synth.out) == (Path("t.pt"), Path("src"), Path("pT"))
    seg = parser.parse_args(["train-seg", "--config", "x.yaml", "--pseudo", "pT", "--target", "tgt"])
    assert (seg.pseudo, seg.target) == (Path("pT"), Path("tgt"))
    st = parser.parse_args(["self-train", "--config", "x.yaml", "--checkpoint", "c.pt", "--iters", "3"])
    assert (st.checkpoint, st.iters, st.target) == (Path("c.pt"), 3, None)


# --- standalone stage commands ---

@pytest.fixture(scope="module")
def standalone(tmp_path_factory, source_volumes, target_volumes):
    """Source, target and pseudo-target directories plus a tiny experiment file"""
    root = tmp_path_factory.mktemp("standalone")
    VolumeRepository(root / "source").save(
        source_volumes, {v.volume_id: {"split": "train", "annotated": True} for v in source_volumes}
    )
    VolumeRepository(root / "target").save(
        target_volumes, {v.volume_id: {"split": "train", "annotated": False} for v in target_volumes}
    )
    pseudo = [v.model_copy(update={"volume_id": f"pT_{v.volume_id}"}) for v in source_volumes]
    PseudoTargetRepository(root / "pseudo").save(PseudoTargetDataset(
        volumes=pseudo,
        source_ids={p.volume_id: v.volume_id for p, v in zip(pseudo, source_volumes)},
        checkpoint_id="fixture",
    ))
    config = _write(root, {
        "name": "cli",
        "seed": 0,
        "output": str(root / "runs"),
        "phantom": {"volume_count": 12, "dims": [8, 16, 16], "tumor_radius_range": [1.5, 2.5], "max_blobs": 2},
        "stage2": tiny_stage2_config().model_dump(mode="json"),
        "self_training": {"iterations": 2, "epochs_per_iteration": 1},
    })
    return root, config


def test_standalone_synth(standalone, tmp_path):
    root, _ = standalone
    checkpoint = save_checkpoint(
        build_translation_model(tiny_translation_config()), tiny_translation_config(), "translation", tmp_path / "t.pt"
    )
    out = tmp_path / "pseudo"
    assert main(["synth", "--checkpoint", str(checkpoint), "--in", str(root / "source"), "--out", str(out)]) == 0
    dataset = PseudoTargetRepository(out).load()
    assert len(dataset.volumes) == 6
    assert all(v.mask is not None for v in dataset.volumes)


def test_standalone_train_seg_then_self_train(standalone, tmp_path):
    root, config = standalone
    data = ["--pseudo", str(root / "pseudo"), "--target", str(root / "target")]
    assert main(["train-seg", "--config", str(config), *data, "--out", str(tmp_path / "seg")]) == 0
    best = tmp_path / "seg" / "checkpoints" / "best.pt"
    assert best.exists()

    argv = ["self-train", "--config", str(config), "--checkpoint", str(best), *data, "--iters", "1"]
    assert main([*argv, "--out", str(tmp_path / "st")]) == 0
    assert len(pd.read_csv(tmp_path / "st" / METRICS_NAME)) == 1


def test_standalone_commands_report_missing_inputs(standalone, tmp_path):
    root, config = standalone
    # no completed gen-data for this config
    assert main(["self-train", "--config", str(config), "--checkpoint", str(tmp_path / "c.pt")]) == 2
    # pseudo-target supervision without --pseudo
    assert main(["train-seg", "--config", str(config), "--target", str(root / "target")]) == 2
    assert main(["train-seg", "--config", str(config), "--target", str(tmp_path / "missing")]) == 2
    assert main(["synth", "--checkpoint", "t.pt", "--in", str(root / "source")]) == 2
