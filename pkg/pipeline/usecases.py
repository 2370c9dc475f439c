"""
Use cases for running the pipeline stage by stage
"""
import time
from collections.abc import Callable
from pathlib import Path

from cli.validators import ExperimentConfig
from core.environment.config import Settings
from core.exceptions import PipelineError, TumorDAError
from core.logger import logger
from evaluation.repositories import ReportRepository
from evaluation.usecases import EmitReportUseCase, EvaluateCheckpointUseCase
from phantoms.entities import Volume
from phantoms.repositories import VolumeRepository
from phantoms.usecases import GenerateDatasetUseCase
from pipeline.entities import STAGE_ORDER, PipelineResult, RunManifestEntity, Stage, StagePlan
from pipeline.repositories import ManifestRepository
from pipeline.services import artifact_id, cache_key, code_version, config_hash
from segmentation.entities import Supervision
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.usecases import RunSelfTrainingUseCase
from translation.repositories import PseudoTargetRepository
from translation.usecases import SynthesizePseudoTargetsUseCase, TrainTranslationUseCase

# artifact kinds each stage produces; the first one is what downstream stages consume
OUTPUT_KINDS = {
    Stage.GEN_DATA: ("dataset",),
    Stage.TRAIN_TRANS: ("translator",),
    Stage.SYNTH: ("pseudo_targets",),
    Stage.TRAIN_SEG: ("segmenter",),
    Stage.SELF_TRAIN: ("self_trained", "self_training_metrics", "pseudo_labels"),
    Stage.EVAL: ("evaluation",),
    Stage.REPORT: ("report",),
}
NO_SELF_TRAINING_SUFFIX = "-no-st"


def plan_stages(cfg: ExperimentConfig) -> dict[Stage, StagePlan]:
    """
    Cache identity of every stage the config enables

    Keys chain through upstream artifact ids, so any change upstream
    invalidates everything downstream.
    """
    plans: dict[Stage, StagePlan] = {}

    def add(stage: Stage, subtree, upstream: list[Stage]) -> None:
        inputs = [artifact_id(OUTPUT_KINDS[s][0], plans[s].cache_key) for s in upstream]
        subtree_hash = config_hash(subtree)
        key = cache_key(stage.value, subtree_hash, inputs)
        plans[stage] = StagePlan(
            stage=stage, cache_key=key, config_hash=subtree_hash, inputs=inputs, out_dir=cfg.stage_dir(stage.value, key)
        )

    add(Stage.GEN_DATA, {
        "phantom": cfg.phantom.model_dump(mode="json"),
        "split": cfg.split.model_dump(mode="json"),
        "annotation": cfg.annotation.model_dump(mode="json"),
    }, [])
    supervised_by = [Stage.GEN_DATA]
    if cfg.stage2.supervision == Supervision.PSEUDO_TARGET:
        add(Stage.TRAIN_TRANS, cfg.stage1, [Stage.GEN_DATA])
        add(Stage.SYNTH, {"slice_axis": cfg.stage1.slice_axis}, [Stage.TRAIN_TRANS])
        supervised_by.append(Stage.SYNTH)
    add(Stage.TRAIN_SEG, cfg.stage2, supervised_by)
    evaluated = [Stage.TRAIN_SEG]
    # target supervision annotates every real target volume, leaving nothing to pseudo-label
    if cfg.self_training.enabled and cfg.stage2.supervision != Supervision.TARGET:
        add(Stage.SELF_TRAIN, cfg.self_training, [Stage.TRAIN_SEG, *supervised_by])
        evaluated.append(Stage.SELF_TRAIN)
    add(Stage.EVAL, {"name": cfg.name, **cfg.evaluation.model_dump(mode="json")}, [Stage.GEN_DATA, *evaluated])
    add(Stage.REPORT, {"name": cfg.name}, [Stage.EVAL, *evaluated[1:]])
    return plans


class RunPipelineUseCase:
    """
    gen-data → train-trans → synth → train-seg → self-train → eval → report

    Each stage writes a manifest. A stage whose cache key matches a
    completed manifest with its outputs on disk is reused instead of rerun.
    """

    def __init__(
        self,
        generate: GenerateDatasetUseCase,
        train_translation: TrainTranslationUseCase,
        synthesize: SynthesizePseudoTargetsUseCase,
        train_segmentation: TrainSegmentationUseCase,
        self_training: RunSelfTrainingUseCase,
        evaluate: EvaluateCheckpointUseCase,
        report: EmitReportUseCase,
        manifests: ManifestRepository,
        settings: Settings,
    ):
        self.generate = generate
        self.train_translation = train_translation
        self.synthesize = synthesize
        self.train_segmentation = train_segmentation
        self.self_training = self_training
        self.evaluate = evaluate
        self.report = report
        self.manifests = manifests
        self.settings = settings

    def execute(self, cfg: ExperimentConfig, resume: bool = True, only: Stage | None = None) -> PipelineResult:
        """
        Run the pipeline, or just `only` on top of completed upstream stages

        Raises:
            PipelineError: a stage failed, or `only` needs an upstream stage
                that has not completed for this config
        """
        plans = plan_stages(cfg)
        if only is not None and only not in plans:
            raise PipelineError(only.value, "stage is disabled by this config")

        done: dict[Stage, RunManifestEntity] = {}
        status: dict[str, str] = {}
        for stage in STAGE_ORDER:
            if stage not in plans:
                status[stage.value] = "skipped"
                continue
            plan = plans[stage]
            upstream_only = only is not None and STAGE_ORDER.index(stage) < STAGE_ORDER.index(only)
            if only is not None and STAGE_ORDER.index(stage) > STAGE_ORDER.index(only):
                break

            cached = self.manifests.find_completed(stage.value, plan.cache_key) if resume or upstream_only else None
            if cached is not None:
                logger.info(f"♻️ {stage.value}: reusing run {cached.id} ({plan.cache_key[:12]})")
                done[stage], status[stage.value] = cached, "cached"
                continue
            if upstream_only:
                raise PipelineError(
                    stage.value, f"no completed artifact for this config; rerun `{stage.value}` first"
                )

            done[stage] = self._run_stage(cfg, plan, done)
            status[stage.value] = "ran"

        report = done.get(Stage.REPORT)
        return PipelineResult(
            report_dir=Path(report.output("report").path) if report else None,
            stages=status,
            dice=self._dice(done),
        )

    def supervision_for(self, cfg: ExperimentConfig) -> tuple[list[Volume], list[Volume], set[str]]:
        """
        Segmentation inputs from the completed data stages of `cfg`

        Raises:
            PipelineError: gen-data (or synth, under pseudo-target
                supervision) has not completed for this config
        """
        plans = plan_stages(cfg)
        done: dict[Stage, RunManifestEntity] = {}
        for stage in (Stage.GEN_DATA, Stage.SYNTH):
            if stage not in plans:
                continue
            manifest = self.manifests.find_completed(stage.value, plans[stage].cache_key)
            if manifest is None:
                raise PipelineError(stage.value, f"no completed artifact for this config; rerun `{stage.value}` first")
            done[stage] = manifest
        return self._supervision(cfg, done)

    def _run_stage(self, cfg: ExperimentConfig, plan: StagePlan, done: dict[Stage, RunManifestEntity]) -> RunManifestEntity:
        handlers: dict[Stage, Callable[..., list[tuple[str, Path]]]] = {
            Stage.GEN_DATA: self._gen_data,
            Stage.TRAIN_TRANS: self._train_translation,
            Stage.SYNTH: self._synthesize,
            Stage.TRAIN_SEG: self._train_segmentation,
            Stage.SELF_TRAIN: self._self_train,
            Stage.EVAL: self._evaluate,
            Stage.REPORT: self._report,
        }
        stage = plan.stage
        manifest = self.manifests.start(
            stage.value, plan.cache_key, plan.config_hash, code_version(), cfg.seed, plan.inputs
        )
        logger.info(f"🚀 {stage.value}: starting run {manifest.id} in {plan.out_dir}")
        started = time.perf_counter()
        try:
            plan.out_dir.mkdir(parents=True, exist_ok=True)
            produced = handlers[stage](cfg, plan.out_dir, done)
        except Exception as e:
            self.manifests.fail(manifest.id, str(e))
            logger.error(f"❌ stage {stage.value} failed: {e}", exc_info=True)
            if isinstance(e, TumorDAError) and not isinstance(e, PipelineError):
                raise PipelineError(stage.value, str(e)) from e
            raise

        outputs = [(artifact_id(kind, plan.cache_key), kind, str(path)) for kind, path in produced]
        finished = self.manifests.complete(manifest.id, outputs)
        logger.info(f"✅ {stage.value}: finished in {time.perf_counter() - started:.1f}s")
        return finished

    @staticmethod
    def _volumes(done: dict[Stage, RunManifestEntity], modality: str, splits: set[str]) -> tuple[list[Volume], set[str]]:
        """Volumes of the given splits plus the ids whose masks count as annotations"""
        repo = VolumeRepository(Path(done[Stage.GEN_DATA].output("dataset").path) / modality)
        return repo.load_splits(*sorted(splits))

    def _gen_data(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        self.generate.execute(cfg.phantom, cfg.split, cfg.annotation, out_dir)
        return [("dataset", out_dir)]

    def _train_translation(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        source, annotated = self._volumes(done, "source", {"train"})
        target, _ = self._volumes(done, "target", {"train"})
        validation, _ = self._volumes(done, "source", {"val"})
        result = self.train_translation.execute(cfg.stage1, source, target, out_dir, annotated, validation)
        return [("translator", result.checkpoint)]

    def _synthesize(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        source, annotated = self._volumes(done, "source", {"train", "val"})
        checkpoint = Path(done[Stage.TRAIN_TRANS].output("translator").path)
        self.synthesize.execute(checkpoint, [v for v in source if v.volume_id in annotated], out_dir, cfg.stage1.slice_axis)
        return [("pseudo_targets", out_dir)]

    def _supervision(self, cfg: ExperimentConfig, done) -> tuple[list[Volume], list[Volume], set[str]]:
        """(supervised pool, real target volumes, annotated real target ids)"""
        real_targets, annotated_targets = self._volumes(done, "target", {"train", "val"})
        supervision = cfg.stage2.supervision
        if supervision == Supervision.PSEUDO_TARGET:
            pool = PseudoTargetRepository(Path(done[Stage.SYNTH].output("pseudo_targets").path)).load().annotated()
        elif supervision == Supervision.SOURCE:
            source, annotated = self._volumes(done, "source", {"train", "val"})
            pool = [v for v in source if v.volume_id in annotated]
        else:
            pool, annotated_targets = [], {v.volume_id for v in real_targets}
        return pool, real_targets, annotated_targets

    def _train_segmentation(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        pool, real_targets, annotated = self._supervision(cfg, done)
        result = self.train_segmentation.execute(cfg.stage2, pool, real_targets, out_dir, annotated)
        return [("segmenter", result.best_checkpoint)]

    def _self_train(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        pool, real_targets, annotated = self._supervision(cfg, done)
        result = self.self_training.execute(
            cfg.stage2,
            cfg.self_training,
            Path(done[Stage.TRAIN_SEG].output("segmenter").path),
            pool,
            real_targets,
            out_dir,
            annotated,
        )
        return [
            ("self_trained", result.final_checkpoint),
            ("self_training_metrics", result.metrics_path),
            ("pseudo_labels", out_dir / "pseudo_labels"),
        ]

    def _evaluate(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        test, _ = self._volumes(done, "target", {"test"})
        metadata = {
            "source_fraction": cfg.annotation.source_fraction,
            "target_fraction": cfg.annotation.target_fraction,
            "variant": cfg.stage2.variant.value,
            "supervision": cfg.stage2.supervision.value,
            "seed": cfg.seed,
        }
        checkpoints = {cfg.name: Path(done[Stage.TRAIN_SEG].output("segmenter").path)}
        if Stage.SELF_TRAIN in done:
            checkpoints = {
                f"{cfg.name}{NO_SELF_TRAINING_SUFFIX}": checkpoints[cfg.name],
                cfg.name: Path(done[Stage.SELF_TRAIN].output("self_trained").path),
            }
        for experiment, checkpoint in checkpoints.items():
            self.evaluate.execute(checkpoint, test, experiment, cfg.evaluation, out_dir / experiment, metadata)
        return [("evaluation", out_dir)]

    def _report(self, cfg: ExperimentConfig, out_dir: Path, done) -> list[tuple[str, Path]]:
        evaluation = Path(done[Stage.EVAL].output("evaluation").path)
        metrics = None
        if Stage.SELF_TRAIN in done:
            metrics = Path(done[Stage.SELF_TRAIN].output("self_training_metrics").path)
        self.report.execute(sorted(p for p in evaluation.iterdir() if p.is_dir()), out_dir, metrics)
        return [("report", out_dir)]

    @staticmethod
    def _dice(done: dict[Stage, RunManifestEntity]) -> dict[str, float]:
        if Stage.EVAL not in done:
            return {}
        evaluation = Path(done[Stage.EVAL].output("evaluation").path)
        return {
            r.experiment: r.dice_mean
            for d in sorted(p for p in evaluation.iterdir() if p.is_dir())
            for r in ReportRepository(d).load()
        }
