from dotenv import load_dotenv
import logging
import os

logger = logging.getLogger("insulation_lab")


def _int_env(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return max(minimum, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer {name}={raw!r}, using {default}")
        return default


def get_env_vars():
    """Load environment variables from .env file."""
    load_dotenv(override=True)
    return {
        "INSULATION_LAB_THREADS": _int_env("INSULATION_LAB_THREADS", os.cpu_count() or 1, 1),
        "INSULATION_LAB_LOG_LEVEL": (os.getenv("INSULATION_LAB_LOG_LEVEL") or "INFO").upper(),
    }
