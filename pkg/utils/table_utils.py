import dataclasses
import json
import logging
import math
import os
import sys
from typing import Any, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger("insulation_lab")

# Significant digits of every float in JSON and CSV reports.
FLOAT_DIGITS = 12


def round_floats(value: Any, digits: int = FLOAT_DIGITS) -> Any:
    """Recursively convert records to JSON-ready values, floats rounded to ``digits`` significant digits."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        value = {f.name: getattr(value, f.name) for f in dataclasses.fields(value) if f.repr}
    if isinstance(value, dict):
        return {str(k): round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return [round_floats(v, digits) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    return value


def to_json(report: dict, digits: int = FLOAT_DIGITS) -> str:
    return json.dumps(round_floats(report, digits), indent=2, ensure_ascii=False) + "\n"


def to_csv(rows: list[dict], prefix: str, digits: int = FLOAT_DIGITS) -> str:
    """One row per record with columns qualified as ``prefix.column``."""
    df = pd.DataFrame(rows)
    df.columns = [f"{prefix}.{col}" for col in df.columns]
    return df.to_csv(index=False, lineterminator="\n", float_format=f"%.{digits}g")


def write_output(text: str, path: Optional[str] = None) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    logger.info(f"Report written to {path}")
