"""Time-varying partition of the field into clusters of similar loops.

Each loop is described by (effective solar power, mean HTF temperature).
Candidate cluster counts are scored with the Calinski-Harabasz index on
z-scored features and the best-scoring K-means partition is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .plant import LoopParams

RESTARTS = 10
MAX_LLOYD = 100
COINCIDENCE_RADIUS = 1e-9


@dataclass(frozen=True)
class FeaturePoint:
    effective_power: float
    mean_temp: float


@dataclass(frozen=True)
class Partition:
    clusters: tuple[tuple[int, ...], ...]
    epoch: int = 0

    def __post_init__(self):
        if not self.clusters or any(len(c) == 0 for c in self.clusters):
            raise ValueError("partition clusters must be nonempty")
        flat = [i for c in self.clusters for i in c]
        if len(flat) != len(set(flat)):
            raise ValueError("partition clusters overlap")

    @classmethod
    def from_labels(cls, labels, epoch: int = 0) -> "Partition":
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(i)
        clusters = sorted((tuple(sorted(g)) for g in groups.values()), key=lambda c: c[0])
        return cls(tuple(clusters), epoch)

    @classmethod
    def singletons(cls, n: int, epoch: int = 0) -> "Partition":
        return cls(tuple((i,) for i in range(n)), epoch)

    @classmethod
    def whole(cls, n: int, epoch: int = 0) -> "Partition":
        return cls((tuple(range(n)),), epoch)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_loops(self) -> int:
        return sum(len(c) for c in self.clusters)

    def covers(self, n: int) -> bool:
        return sorted(i for c in self.clusters for i in c) == list(range(n))

    def labels(self) -> np.ndarray:
        lab = np.empty(self.n_loops, dtype=int)
        for j, c in enumerate(self.clusters):
            lab[list(c)] = j
        return lab


def build_feature_dataset(
    t_outs: Sequence[float],
    t_in: float,
    params: Sequence[LoopParams],
    irradiance: Sequence[float],
) -> list[FeaturePoint]:
    return [
        FeaturePoint(p.eta * p.S * float(I), 0.5 * (float(t) + t_in))
        for t, p, I in zip(t_outs, params, irradiance)
    ]


def _as_array(points) -> np.ndarray:
    if len(points) and isinstance(points[0], FeaturePoint):
        return np.array([[p.effective_power, p.mean_temp] for p in points], dtype=float)
    return np.atleast_2d(np.asarray(points, dtype=float))


def normalize(X: np.ndarray) -> np.ndarray:
    """Z-score each column; columns with negligible spread are only centred."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    floor = COINCIDENCE_RADIUS * (1.0 + np.abs(mean))
    scale = np.where(std > floor, std, 1.0 + np.abs(mean))
    return (X - mean) / scale


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(X, centers):
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    # argmin keeps the lowest-index centroid on ties
    lab = np.argmin(d2, axis=1)
    return lab, d2[np.arange(X.shape[0]), lab].sum()


def lloyd(X, centers, max_iter: int = MAX_LLOYD):
    """Lloyd iterations; returns labels, centers and the WCSS history."""
    k = centers.shape[0]
    labels, wcss = _assign(X, centers)
    history = [wcss]
    for _ in range(max_iter):
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centre
                far = np.argmax(((X - centers[labels]) ** 2).sum(axis=1))
                new_centers[j] = X[far]
        centers = new_centers
        new_labels, wcss = _assign(X, centers)
        history.append(wcss)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers, history


def kmeans_cluster(points, k: int, seed: int = 0, normalized: bool = True):
    """Best of several seeded k-means++ / Lloyd runs; returns (labels, centroids)."""
    X = _as_array(points)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    Z = normalize(X) if normalized else X
    # cluster in a canonical point order so the result does not depend on
    # how the loops happen to be numbered
    order = np.lexsort(Z.T[::-1])
    Zs = Z[order]
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(RESTARTS):
        labels, centers, history = lloyd(Zs, _kmeanspp(Zs, k, rng))
        if best is None or history[-1] < best[0]:
            best = (history[-1], labels)
    unsorted = np.empty(n, dtype=int)
    unsorted[order] = best[1]
    labels = _canonical(unsorted)
    cents = np.array([X[labels == j].mean(axis=0) for j in range(labels.max() + 1)])
    return labels, cents


def _canonical(labels):
    """Relabel so clusters are numbered by their smallest member."""
    order = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in order:
            order[lab] = len(order)
        out[i] = order[lab]
    return out


def calinski_harabasz(points, labels, normalized: bool = False) -> float:
    X = _as_array(points)
    if normalized:
        X = normalize(X)
    labels = np.asarray(labels)
    n = X.shape[0]
    ks = np.unique(labels)
    k = ks.size
    if not 2 <= k <= n - 1:
        raise ValueError(f"Calinski-Harabasz needs 2 <= k <= n-1, got k={k}, n={n}")
    mean = X.mean(axis=0)
    between = 0.0
    within = 0.0
    for lab in ks:
        Xc = X[labels == lab]
        c = Xc.mean(axis=0)
        between += Xc.shape[0] * float(((c - mean) ** 2).sum())
        within += float(((Xc - c) ** 2).sum())
    if within == 0.0:
        return np.inf
    return (between / (k - 1)) / (within / (n - k))


def select_partition(points, n_cl_max: int, seed: int = 0, epoch: int = 0) -> Partition:
    if n_cl_max < 1:
        raise ValueError("n_cl_max must be at least 1")
    X = _as_array(points)
    n = X.shape[0]
    Z = normalize(X)
    if n_cl_max == 1 or np.all(np.linalg.norm(Z, axis=1) <= COINCIDENCE_RADIUS):
        return Partition.whole(n, epoch)
    best_score, best_labels = -np.inf, None
    for k in range(2, min(n_cl_max, n - 1) + 1):
        labels, _ = kmeans_cluster(X, k, seed)
        if np.unique(labels).size < 2:
            continue
        score = calinski_harabasz(Z, labels)
        # strict improvement keeps the lowest k on ties
        if score > best_score:
            best_score, best_labels = score, labels
    if best_labels is None:
        return Partition.whole(n, epoch)
    return Partition.from_labels(best_labels, epoch)
