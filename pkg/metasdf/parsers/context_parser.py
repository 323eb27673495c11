"""
Parser for context files (CSV with columns x0, x1[, x2], sdf)
"""
from typing import Tuple

import numpy as np
import pandas as pd

from metasdf.errors import SdfDataError


def load_context_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read context observations

    Expected CSV format:
    x0,x1,sdf
    -0.25,0.10,0.031
    ...

    A file without an sdf column is treated as zero-level-set context.

    Args:
        path: CSV file

    Returns:
        (coords (n, d), values (n,))
    """
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SdfDataError(f"Cannot read context file {path}: {e}") from e
    coord_cols = [c for c in ("x0", "x1", "x2") if c in df.columns]
    if len(coord_cols) not in (2, 3) or coord_cols != ["x0", "x1", "x2"][:len(coord_cols)]:
        raise SdfDataError(f"{path}: expected columns x0, x1[, x2], got {list(df.columns)}")
    if df.empty:
        raise SdfDataError(f"{path}: no context rows")
    coords = df[coord_cols].to_numpy(dtype=np.float64)
    values = df["sdf"].to_numpy(dtype=np.float64) if "sdf" in df.columns else np.zeros(len(df))
    if not (np.isfinite(coords).all() and np.isfinite(values).all()):
        raise SdfDataError(f"{path}: non-finite context values")
    return coords, values


def context_to_frame(coords: np.ndarray, values: np.ndarray) -> pd.DataFrame:
    """Inverse of load_context_csv (used for sample dumps)"""
    df = pd.DataFrame(np.asarray(coords), columns=[f"x{j}" for j in range(np.asarray(coords).shape[1])])
    df["sdf"] = np.asarray(values)
    return df
