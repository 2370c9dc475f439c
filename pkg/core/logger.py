"""
Logger configuration
"""
import logging
import sys

from core.environment.config import settings

logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout)
    ]
)

# font discovery and image encoding chatter from the report plots
for noisy in ("matplotlib", "PIL"):
    logging.getLogger(noisy).setLevel(logging.WARNING)

logger = logging.getLogger("tumorda")
