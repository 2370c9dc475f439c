from typing import Annotated

from dishka import FromComponent, Provider, Scope, provide

from core.environment.config import Settings
from segmentation.usecases import TrainSegmentationUseCase


class SegmentationProvider(Provider):
    scope = Scope.REQUEST
    component = "segmentation"

    @provide
    def get_train_segmentation_usecase(
        self,
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> TrainSegmentationUseCase:
        """Get segmentation training use case"""
        return TrainSegmentationUseCase(settings)
