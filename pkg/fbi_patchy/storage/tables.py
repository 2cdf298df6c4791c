# ## path: fbi_patchy/storage/tables.py
import logging

import pandas as pd

from fbi_patchy import constants as const

logger = logging.getLogger(__name__)


def write_table(frame: pd.DataFrame, path: str) -> None:
    """CSV with a header row, 17 significant digits and empty cells for NaN."""
    frame.to_csv(path, index=False, float_format=const.CSV_FLOAT_FORMAT, na_rep="")
    logger.info(f"Wrote {len(frame)} rows to {path}")


def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
