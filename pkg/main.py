"""
Tumor Domain Adaptation Pipeline
================================

Two-stage cross-modality tumor segmentation on procedural phantoms:
tumor-aware image translation, then segmentation with presence/absence
disentanglement and self-training.

Exit codes: 0 success, 2 pipeline error (stage named in the log), 1 crash.
"""
import sys

from cli.router import dispatch
from core.exceptions import PipelineError, TumorDAError
from core.logger import logger


def main(argv: list[str] | None = None) -> int:
    try:
        return dispatch(argv)
    except PipelineError as e:
        logger.error(f"❌ stage {e.stage} failed: {e}")
        return 2
    except TumorDAError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return 2
    except Exception:
        logger.exception("💥 Unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
