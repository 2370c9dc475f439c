from typing import Annotated

from dishka import FromComponent, Provider, Scope, provide
from sqlalchemy.orm import Session

from core.environment.config import Settings
from evaluation.usecases import EmitReportUseCase, EvaluateCheckpointUseCase
from phantoms.usecases import GenerateDatasetUseCase
from pipeline.repositories import ManifestRepository
from pipeline.usecases import RunPipelineUseCase
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.usecases import RunSelfTrainingUseCase
from translation.usecases import SynthesizePseudoTargetsUseCase, TrainTranslationUseCase


class PipelineProvider(Provider):
    scope = Scope.REQUEST
    component = "pipeline"

    @provide
    def get_manifest_repository(
        self,
        session: Annotated[Session, FromComponent("database")],
    ) -> ManifestRepository:
        """Get manifest repository"""
        return ManifestRepository(session)

    @provide
    def get_run_pipeline_usecase(
        self,
        generate: Annotated[GenerateDatasetUseCase, FromComponent("phantoms")],
        train_translation: Annotated[TrainTranslationUseCase, FromComponent("translation")],
        synthesize: Annotated[SynthesizePseudoTargetsUseCase, FromComponent("translation")],
        train_segmentation: Annotated[TrainSegmentationUseCase, FromComponent("segmentation")],
        self_training: Annotated[RunSelfTrainingUseCase, FromComponent("selftraining")],
        evaluate: Annotated[EvaluateCheckpointUseCase, FromComponent("evaluation")],
        report: Annotated[EmitReportUseCase, FromComponent("evaluation")],
        manifests: Annotated[ManifestRepository, FromComponent("pipeline")],
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> RunPipelineUseCase:
        """Get pipeline use case"""
        return RunPipelineUseCase(
            generate=generate,
            train_translation=train_translation,
            synthesize=synthesize,
            train_segmentation=train_segmentation,
            self_training=self_training,
            evaluate=evaluate,
            report=report,
            manifests=manifests,
            settings=settings,
        )
