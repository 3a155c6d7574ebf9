"""Small numeric helpers shared by the detector and clustering modules."""

from __future__ import annotations

import numpy as np

# Guard against division by zero on constant columns; spec'd floor.
STD_FLOOR = 1e-8


def column_stats(rows: np.ndarray, floor: float = STD_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and sample (N-1) standard deviation, std floored at `floor`."""
    rows = np.asarray(rows, dtype=float)
    mean = rows.mean(axis=0)
    if rows.shape[0] < 2:
        std = np.zeros(rows.shape[1])
    else:
        std = rows.std(axis=0, ddof=1)
    return mean, np.maximum(std, floor)


def standardize_columns(rows: np.ndarray, floor: float = STD_FLOOR) -> np.ndarray:
    """Z-score each column (sample std, floored). Returns a new array."""
    mean, std = column_stats(rows, floor)
    return (np.asarray(rows, dtype=float) - mean) / std
