"""
Exception hierarchy
===================

Every failure the pipeline reports on purpose derives from TumorDAError,
so the CLI can tell expected failures (exit 2) from crashes (exit 1).
"""


class TumorDAError(Exception):
    """Base class for pipeline errors"""


class ConfigError(TumorDAError):
    """Invalid experiment configuration"""


class PhantomError(TumorDAError):
    """Invalid phantom configuration or volume content"""


class VolumeFormatError(TumorDAError):
    """Malformed MVL1 file"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ShapeMismatchError(TumorDAError):
    """Tensor or array shapes do not agree"""


class LossCompositionError(TumorDAError):
    """Loss terms and weights are inconsistent"""


class ModelConfigError(TumorDAError):
    """A network cannot be built or run with the given configuration"""


class CheckpointError(TumorDAError):
    """Checkpoint archive does not match the model it should restore"""


class DatasetError(TumorDAError):
    """Training or evaluation data is missing or inconsistent"""


class MetricError(TumorDAError):
    """A metric is undefined for the given inputs"""


class PipelineError(TumorDAError):
    """A pipeline stage failed or cannot run"""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
