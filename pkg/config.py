import logging
import os

from dotenv import load_dotenv

load_dotenv()

DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///./ltr_noise_lab.db")
SQL_ECHO = os.getenv("SQL_ECHO", "false").lower() in ("1", "true", "yes")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LTR_THREADS = int(os.getenv("LTR_THREADS", "1"))
LTR_OUTPUT_DIR = os.getenv("LTR_OUTPUT_DIR", "./results")
LTR_SEED = int(os.getenv("LTR_SEED", "0"))

LOG_FORMAT = "%(asctime)s %(levelname)-5.5s [%(name)s] %(message)s"


def configure_logging(level: str = LOG_LEVEL) -> None:
    """Install one stream handler on the root logger (idempotent)"""
    root = logging.getLogger()
    root.setLevel(level.upper())
    if not any(getattr(h, "_ltr_noise", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
        handler._ltr_noise = True
        root.addHandler(handler)
