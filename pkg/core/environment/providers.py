from dishka import Provider, Scope, provide

from core.environment.config import Settings
from core.logger import logger


class EnvironmentProvider(Provider):
    """Hands out one Settings per container; tests and the CLI pass their own"""

    component = "environment"
    scope = Scope.APP

    def __init__(self, settings: Settings | None = None):
        super().__init__()
        self._settings = settings

    @provide
    def get_environment(self) -> Settings:
        resolved = self._settings if self._settings is not None else Settings()
        logger.debug(f"⚙️ settings: output_root={resolved.output_root} device={resolved.device}")
        return resolved
