"""
Utility Functions

Common helpers used across modules: Monte-Carlo batch statistics,
safe division, banner-style text reports and file hashing.
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

DEFAULT_BATCHES = 10


def safe_divide(numerator: float, denominator: float, default: float = 0.0) -> float:
    """
    Safely divide two numbers, returning default if denominator is zero

    Args:
        numerator: Numerator
        denominator: Denominator
        default: Default value if division fails

    Returns:
        Result of division or default
    """
    if denominator == 0 or pd.isna(denominator):
        return default
    return numerator / denominator


def batch_means(samples: Union[Sequence[float], np.ndarray],
                n_batches: int = DEFAULT_BATCHES) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and batch-means standard error along the first axis

    Paths are split into contiguous batches; the standard error is the
    sample deviation of the batch means over sqrt(number of batches).

    Args:
        samples: Array of shape (paths, ...)
        n_batches: Number of batches (capped at the number of paths)

    Returns:
        (mean, stderr), each of shape samples.shape[1:]
    """
    arr = np.asarray(samples, dtype=float)
    if arr.shape[0] == 0:
        nan = np.full(arr.shape[1:], np.nan)
        return nan, nan
    mean = arr.mean(axis=0)
    k = min(n_batches, arr.shape[0])
    if k < 2:
        return mean, np.zeros_like(mean)
    batches = np.array([chunk.mean(axis=0) for chunk in np.array_split(arr, k, axis=0)])
    return mean, batches.std(axis=0, ddof=1) / np.sqrt(k)


def weighted_cumulative(values: np.ndarray, dts: np.ndarray, right: bool = False) -> np.ndarray:
    """Running integral out[k] = sum_{j<k} dts[j] * values[..., j] (values[..., j+1] if right)"""
    increments = (values[..., 1:] if right else values[..., :-1]) * dts
    zeros = np.zeros(values.shape[:-1] + (1,))
    return np.concatenate([zeros, np.cumsum(increments, axis=-1)], axis=-1)


def format_report(title: str, rows: List[Tuple[str, Any]], width: int = 80) -> str:
    """
    Format key/value rows as a banner text block

    Args:
        title: Report title
        rows: (label, value) pairs; floats are printed with 6 significant digits
        width: Banner width

    Returns:
        Formatted report string
    """
    report = f"\n{'=' * width}\n{title:^{width}}\n{'=' * width}\n"
    for label, value in rows:
        if isinstance(value, float):
            value = f"{value:.6g}"
        report += f"  {label:<36} {value}\n"
    return report


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_table(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a comma-separated table with a fixed float format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format='%.12e', lineterminator='\n')
    return path


def flatten_record(record: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
    """Flatten nested dicts into dotted keys (for one-row summary tables)"""
    flat: Dict[str, Any] = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_record(value, f"{name}."))
        else:
            flat[name] = value
    return flat
