"""Retrieval evaluation: test-area splits, Recall@N, Smooth-AP and k-means."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateError, EmptyError, ParameterError, ShapeError


@dataclass(frozen=True)
class TestArea:
    """Axis-aligned square given by its centre and side length in metres."""

    __test__ = False  # not a pytest class

    cx: float
    cy: float
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ParameterError(f"test area side must be > 0, got {self.side}")

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(xy)
        h = self.side / 2.0
        return (np.abs(xy[:, 0] - self.cx) <= h) & (np.abs(xy[:, 1] - self.cy) <= h)


@dataclass(frozen=True)
class EvalProtocol:
    positive_threshold: float = 25.0
    test_areas: tuple = ()
    recall_percent_floor: int = 1
    exclude_self: bool = False

    def __post_init__(self):
        if not self.positive_threshold > 0:
            raise ParameterError("positive_threshold must be > 0")
        if self.recall_percent_floor < 1:
            raise ParameterError("recall_percent_floor must be >= 1")
        object.__setattr__(self, "test_areas", tuple(self.test_areas))


@dataclass(eq=False)
class DescriptorSet:
    """Descriptors with the pose of the scan each one summarises.

    ``positions`` holds planar ``(x, y)``; ``z`` is NaN where a pose has none.
    """

    source_ids: Sequence[str]
    descriptors: np.ndarray
    positions: np.ndarray
    timestamps: np.ndarray | None = None
    z: np.ndarray | None = None
    role: str = "database"

    def __post_init__(self):
        self.source_ids = tuple(self.source_ids)
        n = len(self.source_ids)
        d = np.asarray(self.descriptors, dtype=np.float64)
        self.descriptors = d if d.ndim == 2 and len(d) == n else d.reshape(n, -1)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(n, 2)
        self.timestamps = (np.zeros(n) if self.timestamps is None
                           else np.asarray(self.timestamps, dtype=np.float64).reshape(n))
        self.z = np.full(n, np.nan) if self.z is None else np.asarray(self.z, dtype=np.float64).reshape(n)
        if len(set(self.source_ids)) != n:
            raise ParameterError("source ids must be unique within a descriptor set")
        if self.role not in ("query", "database"):
            raise ParameterError(f"role must be query or database, got {self.role!r}")
        if not np.isfinite(self.positions).all():
            raise ParameterError("positions must be finite")

    def __len__(self):
        return len(self.source_ids)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def subset(self, mask) -> "DescriptorSet":
        idx = np.flatnonzero(np.asarray(mask))
        return DescriptorSet([self.source_ids[i] for i in idx], self.descriptors[idx],
                             self.positions[idx], self.timestamps[idx], self.z[idx], self.role)

    def with_role(self, role: str) -> "DescriptorSet":
        return DescriptorSet(self.source_ids, self.descriptors, self.positions,
                             self.timestamps, self.z, role)


def area_mask(xy: np.ndarray, areas: Sequence[TestArea]) -> np.ndarray:
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    inside = np.zeros(len(xy), dtype=bool)
    for a in areas:
        inside |= a.contains(xy)
    return inside


def split_by_areas(entries: DescriptorSet, areas: Sequence[TestArea]):
    """Partition into (inside any area, outside all areas); edges count as inside."""
    m = area_mask(entries.positions, areas)
    return entries.subset(m), entries.subset(~m)


@dataclass(frozen=True)
class RecallResult:
    n: int
    evaluated: int
    successes: int

    @property
    def value(self) -> float | None:
        """Success fraction, or ``None`` when no query had a reachable positive."""
        return self.successes / self.evaluated if self.evaluated else None


def candidate_count(n, database_size: int, floor: int = 1) -> int:
    if n == "1%":
        return max(math.ceil(0.01 * database_size), floor)
    if isinstance(n, (int, np.integer)) and n >= 1:
        return int(n)
    raise ParameterError(f"n must be a positive integer or '1%', got {n!r}")


def recall_at(queries: DescriptorSet, database: DescriptorSet, protocol: EvalProtocol,
              n=1, chunk: int = 512) -> RecallResult:
    """Fraction of answerable queries with a true positive among the top ``n`` matches.

    A query is answerable when some database pose lies within
    ``positive_threshold`` metres (planar). Ties in descriptor distance
    resolve by database order.
    """
    if len(queries) == 0 or len(database) == 0:
        raise EmptyError("query and database sets must be non-empty")
    if queries.dim != database.dim:
        raise ShapeError(f"descriptor dimension {queries.dim} vs {database.dim}")
    top = candidate_count(n, len(database), protocol.recall_percent_floor)
    thr2 = protocol.positive_threshold ** 2
    db_ids = np.array(database.source_ids, dtype=object)
    evaluated = successes = 0
    for start in range(0, len(queries), chunk):
        sl = slice(start, start + chunk)
        q, qxy = queries.descriptors[sl], queries.positions[sl]
        dist = ((q[:, None, :] - database.descriptors[None, :, :]) ** 2).sum(axis=2)
        geo = ((qxy[:, None, :] - database.positions[None, :, :]) ** 2).sum(axis=2)
        positive = geo <= thr2
        if protocol.exclude_self:
            same = np.array(queries.source_ids[sl], dtype=object)[:, None] == db_ids[None, :]
            dist = np.where(same, np.inf, dist)
            positive &= ~same
        answerable = positive.any(axis=1)
        order = np.argsort(dist, axis=1, kind="stable")[:, :top]
        hit = np.take_along_axis(positive, order, axis=1).any(axis=1)
        evaluated += int(answerable.sum())
        successes += int((hit & answerable).sum())
    return RecallResult(top, evaluated, successes)


@dataclass(frozen=True)
class SmoothApConfig:
    tau: float = 0.01
    truncation: int | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError("tau must be > 0")
        if self.truncation is not None and self.truncation < 1:
            raise ParameterError("truncation must be a positive candidate count")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def smooth_ap(scores, positive_mask, config: SmoothApConfig = SmoothApConfig()) -> float:
    """Sigmoid-relaxed average precision for one query's candidate list.

    Each rank indicator ``[s_j > s_i]`` is replaced with
    ``sigmoid((s_j - s_i) / tau)``. With truncation, only the top-k
    scores form the candidate pool and positives outside it add nothing,
    though they still count in the normaliser.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(positive_mask, dtype=bool).reshape(-1)
    if len(s) != len(pos):
        raise ShapeError("scores and positive_mask differ in length")
    if not np.isfinite(s).all():
        raise ParameterError("scores must be finite")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise DegenerateError("smooth AP needs at least one positive")
    if config.truncation is not None and config.truncation < len(s):
        keep = np.argsort(-s, kind="stable")[:config.truncation]
        s, pos = s[keep], pos[keep]
    if not pos.any():
        return 0.0
    diff = (s[None, :] - s[:, None]) / config.tau  # [i, j] = s_j - s_i
    sg = _sigmoid(diff)
    np.fill_diagonal(sg, 0.0)
    rank_all = 1.0 + sg.sum(axis=1)
    rank_pos = 1.0 + (sg * pos[None, :]).sum(axis=1)
    return float((rank_pos[pos] / rank_all[pos]).sum() / n_pos)


def average_precision(scores, positive_mask) -> float:
    """Exact AP of a ranking by descending score."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive_mask, dtype=bool)
    order = np.argsort(-s, kind="stable")
    hits = pos[order]
    if not hits.any():
        raise DegenerateError("average precision needs at least one positive")
    prec = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(prec[hits].mean())


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss_history: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def wcss(self) -> float:
        return self.wcss_history[-1]


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, len(x) - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(x: np.ndarray, centroids: np.ndarray):
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(len(x)), labels].sum())


def kmeans(descriptors, k: int, seed: int = 0, init: np.ndarray | None = None,
           max_iter: int = 300, tol: float = 1e-6) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding (or explicit ``init`` centres).

    Stops once no centroid moves more than ``tol`` or after ``max_iter``
    rounds. An empty cluster keeps its previous centroid.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyError("need a non-empty (n, d) descriptor array")
    if not 1 <= k <= len(x):
        raise ParameterError(f"k must lie in [1, {len(x)}], got {k}")
    if init is None:
        centroids = kmeans_plusplus(x, k, np.random.default_rng(seed))
    else:
        centroids = np.array(init, dtype=np.float64).reshape(k, x.shape[1])
    history = []
    for it in range(1, max_iter + 1):
        labels, wcss = _assign(x, centroids)
        history.append(wcss)
        new = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    labels, wcss = _assign(x, centroids)
    history.append(wcss)
    return KMeansResult(labels, centroids, history, it)
