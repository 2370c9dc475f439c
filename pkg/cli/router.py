"""
CLI Router
==========

Subcommands:
1. gen-data / train-trans / synth / train-seg / self-train - one stage on
   top of the completed upstream stages of the same config
2. synth --checkpoint --in --out - standalone pseudo-target synthesis
3. train-seg --pseudo --target, self-train --checkpoint - standalone
   training on explicit volume directories; self-train without --target
   reads the data stages completed for --config
4. eval - one stage, or a standalone checkpoint evaluation with
   --checkpoint and --data
5. report - one stage, or a merge of evaluation directories with --in
6. run - the whole pipeline
"""
import argparse
from pathlib import Path

from cli.validators import ExperimentConfig, apply_overrides, load_config
from core.container import build_container
from core.environment.config import Settings
from core.exceptions import ConfigError, DatasetError
from core.logger import logger
from evaluation.entities import EvaluationConfig
from evaluation.usecases import EmitReportUseCase, EvaluateCheckpointUseCase
from phantoms.entities import Volume
from phantoms.repositories import VolumeRepository
from pipeline.entities import Stage
from pipeline.usecases import RunPipelineUseCase
from segmentation.entities import Supervision
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.usecases import RunSelfTrainingUseCase
from translation.repositories import PseudoTargetRepository
from translation.usecases import SynthesizePseudoTargetsUseCase

STAGE_COMMANDS = {stage.value: stage for stage in Stage}
STANDALONE_DIR = "standalone"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tumorda", description="Cross-modality tumor segmentation on phantoms")
    commands = parser.add_subparsers(dest="command", required=True)

    for name in (*STAGE_COMMANDS, "run"):
        command = commands.add_parser(name, help="full pipeline" if name == "run" else f"{name} stage")
        command.add_argument("--config", type=Path, help="experiment YAML file")
        command.add_argument("--seed", type=int, help="override the experiment seed")
        command.add_argument("--out", type=Path, help="override the output root, or the standalone output directory")
        command.add_argument(
            "--resume",
            action=argparse.BooleanOptionalAction,
            default=True,
            help="reuse completed stages with matching cache keys (default: on)",
        )
        if name == Stage.SYNTH.value:
            command.add_argument("--checkpoint", type=Path, help="translation checkpoint")
            command.add_argument("--in", dest="source_dir", type=Path, help="source volume directory")
        if name in (Stage.TRAIN_SEG.value, Stage.SELF_TRAIN.value):
            command.add_argument("--pseudo", type=Path, help="pseudo-target volume directory")
            command.add_argument("--target", type=Path, help="real target volume directory")
        if name == Stage.SELF_TRAIN.value:
            command.add_argument("--checkpoint", type=Path, help="segmentation checkpoint to start from")
            command.add_argument("--iters", type=int, help="override the number of self-training iterations")
        if name == Stage.EVAL.value:
            command.add_argument("--checkpoint", type=Path, help="segmentation checkpoint to evaluate")
            command.add_argument("--data", type=Path, help="volume directory with ground-truth masks")
            command.add_argument("--split", default="test", help="index split to evaluate (default: test)")
            command.add_argument("--experiment", default="eval", help="experiment name in the metrics")
        if name == Stage.REPORT.value:
            command.add_argument("--in", dest="inputs", type=Path, nargs="+", help="evaluation directories")
            command.add_argument("--self-training", type=Path, help="self-training metrics CSV")
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError(f"`{args.command}` needs --config")
    return apply_overrides(load_config(args.config), seed=args.seed)


def _volume_repository(path: Path) -> VolumeRepository:
    repo = VolumeRepository(path)
    if not repo.exists():
        raise DatasetError(f"{path} holds no volume index")
    return repo


def _standalone_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    return args.out if args.out is not None else cfg.stage_dir(args.command, STANDALONE_DIR)


def _explicit_supervision(
    args: argparse.Namespace, cfg: ExperimentConfig
) -> tuple[list[Volume], list[Volume], set[str]]:
    """(supervised pool, real target volumes, annotated real target ids) from --pseudo and --target"""
    real_targets, annotated = _volume_repository(args.target).load_splits("train", "val")
    if cfg.stage2.supervision == Supervision.TARGET:
        return [], real_targets, {v.volume_id for v in real_targets}
    if args.pseudo is None:
        raise ConfigError(f"`{args.command}` with {cfg.stage2.supervision.value} supervision needs --pseudo")
    pseudo = PseudoTargetRepository(args.pseudo)
    if not pseudo.exists():
        raise DatasetError(f"{args.pseudo} holds no pseudo-target index")
    return pseudo.load().annotated(), real_targets, annotated


def _pipeline(args: argparse.Namespace) -> int:
    if args.config is None:
        raise ConfigError(f"`{args.command}` needs --config")
    cfg = apply_overrides(load_config(args.config), seed=args.seed, output=args.out)
    container = build_container(Settings(output_root=cfg.output))
    try:
        with container() as request:
            usecase = request.get(RunPipelineUseCase, component="pipeline")
            only = None if args.command == "run" else STAGE_COMMANDS[args.command]
            result = usecase.execute(cfg, resume=args.resume, only=only)
    finally:
        container.close()

    logger.info(f"🏁 Stages: {result.stages}")
    for experiment, dice in result.dice.items():
        logger.info(f"🎯 {experiment}: mean Dice {dice:.3f}")
    if result.report_dir is not None:
        logger.info(f"📁 Report in {result.report_dir}")
    return 0


def _synthesize(args: argparse.Namespace) -> int:
    if args.source_dir is None or args.out is None:
        raise ConfigError("standalone `synth` needs --checkpoint, --in and --out")
    axis = load_config(args.config).stage1.slice_axis if args.config else 0
    volumes, annotated = _volume_repository(args.source_dir).load_splits("train", "val")
    container = build_container(Settings(output_root=args.out))
    try:
        with container() as request:
            dataset = request.get(SynthesizePseudoTargetsUseCase, component="translation").execute(
                args.checkpoint, [v for v in volumes if v.volume_id in annotated], args.out, axis
            )
    finally:
        container.close()
    logger.info(f"📁 {len(dataset.volumes)} pseudo-targets in {args.out}")
    return 0


def _train_segmentation(args: argparse.Namespace) -> int:
    cfg = _config(args)
    pool, real_targets, annotated = _explicit_supervision(args, cfg)
    out_dir = _standalone_dir(args, cfg)
    container = build_container(Settings(output_root=cfg.output))
    try:
        with container() as request:
            result = request.get(TrainSegmentationUseCase, component="segmentation").execute(
                cfg.stage2, pool, real_targets, out_dir, annotated
            )
    finally:
        container.close()
    logger.info(f"🎯 best validation Dice {result.best_val_dice}, checkpoint {result.best_checkpoint}")
    return 0


def _self_train(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out_dir = _standalone_dir(args, cfg)
    container = build_container(Settings(output_root=cfg.output))
    try:
        with container() as request:
            if args.target is not None:
                pool, real_targets, annotated = _explicit_supervision(args, cfg)
            else:
                pool, real_targets, annotated = request.get(
                    RunPipelineUseCase, component="pipeline"
                ).supervision_for(cfg)
            result = request.get(RunSelfTrainingUseCase, component="selftraining").execute(
                cfg.stage2,
                cfg.self_training,
                args.checkpoint,
                pool,
                real_targets,
                out_dir,
                annotated,
                iterations=args.iters,
            )
    finally:
        container.close()
    logger.info(f"🔁 {len(result.iterations)} iterations, final checkpoint {result.final_checkpoint}")
    return 0


def _evaluate_checkpoint(args: argparse.Namespace) -> int:
    if args.data is None or args.out is None:
        raise ConfigError("standalone `eval` needs --checkpoint, --data and --out")
    cfg = load_config(args.config).evaluation if args.config else EvaluationConfig()
    repo = VolumeRepository(args.data)
    volumes = repo.load_all(split=args.split) if args.split else repo.load_all()
    result = EvaluateCheckpointUseCase(Settings(output_root=args.out)).execute(
        args.checkpoint, volumes, args.experiment, cfg, out_dir=args.out
    )
    logger.info(f"🎯 {result.experiment}: {result.summary()}")
    return 0


def _report(args: argparse.Namespace) -> int:
    if args.out is None:
        raise ConfigError("standalone `report` needs --in and --out")
    EmitReportUseCase().execute(args.inputs, args.out, args.self_training)
    return 0


def dispatch(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == Stage.SYNTH.value and args.checkpoint is not None:
        return _synthesize(args)
    if args.command == Stage.TRAIN_SEG.value and args.target is not None:
        return _train_segmentation(args)
    if args.command == Stage.SELF_TRAIN.value and args.checkpoint is not None:
        return _self_train(args)
    if args.command == Stage.EVAL.value and args.checkpoint is not None:
        return _evaluate_checkpoint(args)
    if args.command == Stage.REPORT.value and args.inputs:
        return _report(args)
    return _pipeline(args)
