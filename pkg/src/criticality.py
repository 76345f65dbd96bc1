"""
Criticality Module

Supercritical clusters of a solution: connected node runs where |X| exceeds
the critical level (1 for psi1, where phi jumps). Produces a per-snapshot
event log and an empirical cluster-size histogram.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from scipy import ndimage

from .discrete_spaces import Field
from .spde_solver import PathEnsemble

logger = logging.getLogger(__name__)

CRITICAL_LEVEL = 1.0
EVENT_COLUMNS = ['path', 'time', 'cluster', 'start', 'end', 'size', 'mass']


@dataclass(frozen=True)
class Cluster:
    """Connected run of supercritical nodes (indices into the interior nodes)"""

    start: int
    end: int
    mass: float

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def get_description(self) -> str:
        return f"nodes {self.start}-{self.end} (size {self.size}, excess mass {self.mass:.4g})"


def detect_clusters(u: Field, threshold: float = CRITICAL_LEVEL) -> List[Cluster]:
    """
    Find connected regions with |u| > threshold

    Args:
        u: Field
        threshold: Critical level

    Returns:
        Clusters ordered left to right; mass is h * sum(|u| - threshold)
    """
    excess = np.abs(u.values) - threshold
    labels, count = ndimage.label(excess > 0)
    clusters = []
    for i, region in enumerate(ndimage.find_objects(labels)):
        s = region[0]
        mass = u.grid.spacing * float(np.sum(excess[s][labels[s] == i + 1]))
        clusters.append(Cluster(start=int(s.start), end=int(s.stop) - 1, mass=mass))
    return clusters


def cluster_event_log(ens: PathEnsemble, threshold: float = CRITICAL_LEVEL) -> pd.DataFrame:
    """
    One row per cluster per valid path and snapshot time

    Returns:
        DataFrame with columns path, time, cluster, start, end, size, mass
    """
    rows = []
    for p in np.flatnonzero(ens.valid):
        for k, t in enumerate(ens.times):
            for c, cluster in enumerate(detect_clusters(ens.snapshot_field(p, k), threshold)):
                rows.append({
                    'path': int(p),
                    'time': float(t),
                    'cluster': c,
                    'start': cluster.start,
                    'end': cluster.end,
                    'size': cluster.size,
                    'mass': cluster.mass,
                })
    logger.info("Detected %d supercritical clusters", len(rows))
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def size_histogram(events: pd.DataFrame, cells: int) -> pd.DataFrame:
    """
    Counts per integer cluster size 1..cells-1 with cumulative counts

    Args:
        events: Event log from cluster_event_log
        cells: Number of grid cells (bounds the cluster size)

    Returns:
        DataFrame with columns size, count, cumulative
    """
    sizes = np.arange(1, cells)
    edges = np.arange(0.5, cells + 0.5)
    counts, _ = np.histogram(events['size'].to_numpy(dtype=float), bins=edges)
    return pd.DataFrame({'size': sizes, 'count': counts, 'cumulative': np.cumsum(counts)})
