from dishka import Container, make_container

from core.database.providers import DatabaseConnectionProvider, DatabaseSessionProvider
from core.environment.config import Settings
from core.environment.providers import EnvironmentProvider
from evaluation.providers import EvaluationProvider
from phantoms.providers import PhantomsProvider
from pipeline.providers import PipelineProvider
from segmentation.providers import SegmentationProvider
from selftraining.providers import SelfTrainingProvider
from translation.providers import TranslationProvider


def build_container(settings: Settings | None = None) -> Container:
    """One container per CLI invocation; each command runs in one request scope"""
    return make_container(
        EnvironmentProvider(settings),
        DatabaseConnectionProvider(),
        DatabaseSessionProvider(),
        PhantomsProvider(),
        TranslationProvider(),
        SegmentationProvider(),
        SelfTrainingProvider(),
        EvaluationProvider(),
        PipelineProvider(),
    )
