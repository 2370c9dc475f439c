from typing import Annotated

from dishka import FromComponent, Provider, Scope, provide

from core.environment.config import Settings
from segmentation.usecases import TrainSegmentationUseCase
from selftraining.usecases import RunSelfTrainingUseCase


class SelfTrainingProvider(Provider):
    scope = Scope.REQUEST
    component = "selftraining"

    @provide
    def get_run_self_training_usecase(
        self,
        train_segmentation: Annotated[TrainSegmentationUseCase, FromComponent("segmentation")],
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> RunSelfTrainingUseCase:
        """Get self-training use case"""
        return RunSelfTrainingUseCase(train_segmentation, settings)
