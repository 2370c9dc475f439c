from typing import Annotated

from dishka import FromComponent, Provider, Scope, provide

from core.environment.config import Settings
from evaluation.usecases import EmitReportUseCase, EvaluateCheckpointUseCase


class EvaluationProvider(Provider):
    scope = Scope.REQUEST
    component = "evaluation"

    @provide
    def get_evaluate_checkpoint_usecase(
        self,
        settings: Annotated[Settings, FromComponent("environment")],
    ) -> EvaluateCheckpointUseCase:
        """Get checkpoint evaluation use case"""
        return EvaluateCheckpointUseCase(settings)

    @provide
    def get_emit_report_usecase(self) -> EmitReportUseCase:
        """Get report use case"""
        return EmitReportUseCase()
