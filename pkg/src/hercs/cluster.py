"""Failed-goal collection, k-means cluster model and clustered buffers.

Goals the agent failed to reach are pushed into a :class:`FailedGoalBuffer`.
Once every slot of that buffer has been overwritten since the last fit, a new
k-means model is fit on its contents and every stored episode is re-bucketed
by the nearest centroid to its last achieved goal. Episodes stored between
refits are bucketed one by one with the current model.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .envs import ContractError

log = logging.getLogger(__name__)


class FailedGoalBuffer:
    def __init__(self, capacity: int = 100):
        if capacity < 1:
            raise ContractError("failed goal buffer capacity must be positive")
        self.capacity = capacity
        self.goals = deque(maxlen=capacity)
        self.new_since_refit = 0
        self.total_pushed = 0

    def __len__(self):
        return len(self.goals)

    @property
    def full(self) -> bool:
        return len(self.goals) == self.capacity

    def push(self, goal):
        self.goals.append(np.array(goal, dtype=np.float64))
        self.new_since_refit = min(self.new_since_refit + 1, self.capacity)
        self.total_pushed += 1

    def as_array(self) -> np.ndarray:
        return np.array(self.goals)


@dataclass
class ClusterModel:
    k: int
    centroids: Optional[np.ndarray] = None  # (k, goal_dim)
    version: int = 0

    @property
    def fitted(self) -> bool:
        return self.version >= 1


@dataclass
class ClusteredIndex:
    """Partition of the live episode ids into ``k`` clustered buffers.

    Each bucket is kept sorted by id, so evicted ids (always the oldest)
    sit at the front.
    """

    model_version: int
    buckets: List[deque] = field(default_factory=list)

    @classmethod
    def empty(cls, k: int, version: int = 0) -> "ClusteredIndex":
        return cls(version, [deque() for _ in range(k)])

    @property
    def sizes(self) -> List[int]:
        return [len(b) for b in self.buckets]

    def bucket_of(self, episode_id: int) -> Optional[int]:
        for i, b in enumerate(self.buckets):
            if episode_id in b:
                return i
        return None

    def as_sets(self) -> List[set]:
        return [set(b) for b in self.buckets]

    def replace_with(self, other: "ClusteredIndex"):
        self.model_version = other.model_version
        self.buckets = other.buckets

    def drop_older_than(self, oldest_live_id: int):
        for b in self.buckets:
            while b and b[0] < oldest_live_id:
                b.popleft()


def is_partition(index: ClusteredIndex, live_ids) -> bool:
    """True when the buckets are disjoint and cover exactly ``live_ids``."""
    flat = [i for b in index.buckets for i in b]
    return len(flat) == len(set(flat)) and set(flat) == set(int(i) for i in live_ids)


def record_episode_outcome(fgb: FailedGoalBuffer, episode) -> bool:
    """Push the desired goal of a failed episode. Returns whether it was pushed."""
    if episode.succeeded:
        return False
    fgb.push(episode.desired_goal)
    return True


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _as_points(points) -> np.ndarray:
    if len(points) == 0:
        raise ValueError("no failed goals to cluster")
    try:
        arr = np.array([np.asarray(p, dtype=np.float64) for p in points])
    except ValueError:
        raise ContractError("all points must have the same dimension") from None
    if arr.ndim != 2:
        raise ContractError("all points must have the same dimension")
    return arr


def kmeans_plus_plus(points: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding.

    When fewer than ``k`` distinct points exist, the distinct points are
    returned cyclically repeated up to ``k`` rows.
    """
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        return distinct[np.arange(k) % len(distinct)].copy()
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = _sq_dists(points, centroids[:1])[:, 0]
    for i in range(1, k):
        centroids[i] = points[rng.choice(n, p=closest / closest.sum())]
        closest = np.minimum(closest, _sq_dists(points, centroids[i : i + 1])[:, 0])
    return centroids


def lloyd(points: np.ndarray, centroids: np.ndarray, max_iters: int = 100, tol: float = 1e-6):
    """Run Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, inertia_history)``. The history holds the
    inertia of the starting centroids followed by the inertia after each
    update. Empty clusters keep their previous centroid.
    """
    centroids = np.array(centroids, dtype=np.float64)
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    history = [float(d2[np.arange(len(points)), labels].sum())]
    for _ in range(max_iters):
        updated = centroids.copy()
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        shift = np.max(np.linalg.norm(updated - centroids, axis=1))
        centroids = updated
        d2 = _sq_dists(points, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(points)), labels].sum()))
        if shift < tol:
            break
    return centroids, labels, history


def kmeans_fit(points, k: int, max_iters: int = 100, tol: float = 1e-6, seed=None) -> ClusterModel:
    """Fit k-means (k-means++ seeding, then Lloyd). The result is unversioned."""
    if k < 1:
        raise ContractError("k must be >= 1")
    pts = _as_points(points)
    rng = np.random.default_rng(seed)
    init = kmeans_plus_plus(pts, k, rng)
    centroids, _, _ = lloyd(pts, init, max_iters, tol)
    return ClusterModel(k=k, centroids=centroids, version=0)


def assign(model: ClusterModel, goal) -> int:
    """Nearest centroid index; ties go to the smallest index."""
    if not model.fitted:
        raise RuntimeError("cluster model not yet fit")
    g = np.asarray(goal, dtype=np.float64)
    d2 = np.sum((model.centroids - g) ** 2, axis=1)
    return int(np.argmin(d2))


def assign_many(model: ClusterModel, goals) -> np.ndarray:
    if not model.fitted:
        raise RuntimeError("cluster model not yet fit")
    g = np.asarray(goals, dtype=np.float64)
    if len(g) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmin(_sq_dists(g, model.centroids), axis=1)


def reassign_all(model: ClusterModel, replay) -> ClusteredIndex:
    """Stamp every stored episode with its cluster and rebuild the buckets."""
    if not model.fitted:
        raise RuntimeError("cluster model not yet fit")
    index = ClusteredIndex.empty(model.k, model.version)
    ids = replay.ids
    labels = assign_many(model, replay.achieved_goals[replay.slot(ids), -1])
    for eid, label in zip(ids.tolist(), labels.tolist()):
        ep = replay[eid]
        ep.cluster_index = label
        ep.cluster_version = model.version
        index.buckets[label].append(eid)
    return index


def index_new_episode(model: ClusterModel, index: ClusteredIndex, episode, replay) -> ClusteredIndex:
    """Bucket a freshly stored episode and drop ids the buffer has evicted."""
    if index.model_version != model.version:
        raise RuntimeError("index/model version mismatch")
    label = assign(model, episode.last_achieved_goal)
    episode.cluster_index = label
    episode.cluster_version = model.version
    index.buckets[label].append(episode.episode_id)
    index.drop_older_than(replay.oldest_id)
    return index


def maybe_refit(
    fgb: FailedGoalBuffer,
    model: ClusterModel,
    replay,
    index: ClusteredIndex,
    rng=None,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> bool:
    """Refit once the failed goal buffer has fully turned over.

    On refit the model is updated in place (new centroids, version + 1), the
    turnover counter resets and ``index`` is rebuilt over the whole replay
    buffer.
    """
    if not (fgb.full and fgb.new_since_refit >= fgb.capacity):
        return False
    fitted = kmeans_fit(fgb.as_array(), model.k, max_iters, tol, rng)
    model.centroids = fitted.centroids
    model.version += 1
    fgb.new_since_refit = 0
    index.replace_with(reassign_all(model, replay))
    log.debug("cluster refit: version=%d sizes=%s", model.version, index.sizes)
    return True


class GoalClusterer:
    """Bundles the failed goal buffer, model and live index of one run."""

    def __init__(self, k: int = 4, fgb_capacity: int = 100, max_iters: int = 100,
                 tol: float = 1e-6, rng=None):
        self.fgb = FailedGoalBuffer(fgb_capacity)
        self.model = ClusterModel(k=k)
        self.index = ClusteredIndex.empty(k)
        self.max_iters = max_iters
        self.tol = tol
        self.rng = np.random.default_rng(rng)

    @property
    def k(self) -> int:
        return self.model.k

    def observe(self, episode, replay) -> bool:
        """Handle a just-stored episode. Returns True if a refit happened."""
        record_episode_outcome(self.fgb, episode)
        if self.model.fitted:
            index_new_episode(self.model, self.index, episode, replay)
        return maybe_refit(self.fgb, self.model, replay, self.index, self.rng,
                           self.max_iters, self.tol)
