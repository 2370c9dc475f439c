from typing import Annotated

from dishka import FromComponent, Provider, Scope, provide

from core.environment.config import Settings
from translation.usecases import SynthesizePseudoTargetsUseCase, TrainTranslationUseCase


class TranslationProvider(Provider):
    scope = Scope.REQUEST
    component = "translation"

    @provide
    def get_train_translation_usecase(
        self,
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> TrainTranslationUseCase:
        """Get translation training use case"""
        return TrainTranslationUseCase(settings)

    @provide
    def get_synthesize_usecase(
        self,
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> SynthesizePseudoTargetsUseCase:
        """Get pseudo-target synthesis use case"""
        return SynthesizePseudoTargetsUseCase(settings)
