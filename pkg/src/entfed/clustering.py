"""Cosine similarity, affinity propagation and per-cluster FedAvg."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ContractError("cosine similarity needs two non-empty vectors of equal length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ContractError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def similarity_to_previous_global(update, prev_global) -> float:
    """Angle score between an enterprise's update and the previous round's global model."""
    return cosine_similarity(update, prev_global)


def pairwise_cosine(vectors) -> np.ndarray:
    m = np.asarray(vectors, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError("expected a stack of equal-length vectors")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        raise ContractError("cosine similarity is undefined for a zero vector")
    u = m / norms[:, None]
    return np.clip(u @ u.T, -1.0, 1.0)


def with_median_preference(s: np.ndarray) -> np.ndarray:
    """Copy of ``s`` whose diagonal is the median of the off-diagonal entries."""
    s = np.array(s, dtype=np.float64, copy=True)
    n = s.shape[0]
    if n > 1:
        off = s[~np.eye(n, dtype=bool)]
        np.fill_diagonal(s, np.median(off))
    return s


@dataclass
class ClusterAssignment:
    exemplar_of: np.ndarray   # exemplar index for each member
    iterations: int = 0
    converged: bool = True

    @property
    def exemplars(self) -> list[int]:
        return sorted(set(int(e) for e in self.exemplar_of))

    @property
    def clusters(self) -> list[list[int]]:
        return [[i for i, e in enumerate(self.exemplar_of) if e == ex] for ex in self.exemplars]


def affinity_propagation(s, damping: float = 0.9, max_iter: int = 1000,
                         stable_iters: int = 100) -> ClusterAssignment:
    """Responsibility/availability message passing on a similarity matrix.

    ``s`` carries preferences on its diagonal. Runs until the exemplar set is
    unchanged for ``stable_iters`` sweeps or ``max_iter`` is reached. A tiny
    index-ordered penalty makes exact ties resolve toward the lower index.
    """
    s = np.array(s, dtype=np.float64, copy=True)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError("similarity matrix must be square")
    if not 0.5 <= damping < 1:
        raise ContractError("damping must be in [0.5, 1)")
    n = s.shape[0]
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), 0, True)
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=np.int64), 0, True)

    spread = float(np.ptp(s)) or 1.0
    s_work = s - (1e-10 * spread / n) * np.arange(n)[None, :]
    r = np.zeros((n, n))
    a = np.zeros((n, n))
    rows = np.arange(n)
    last = None
    unchanged = 0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        # responsibilities
        t = a + s_work
        best = np.argmax(t, axis=1)
        first = t[rows, best]
        t[rows, best] = -np.inf
        second = t.max(axis=1)
        r_new = s_work - first[:, None]
        r_new[rows, best] = s_work[rows, best] - second
        r = damping * r + (1 - damping) * r_new
        # availabilities
        rp = np.maximum(r, 0)
        rp[rows, rows] = r[rows, rows]
        col = rp.sum(axis=0)
        a_new = col[None, :] - rp
        diag = a_new[rows, rows].copy()
        a_new = np.minimum(a_new, 0)
        a_new[rows, rows] = diag
        a = damping * a + (1 - damping) * a_new

        ex = tuple(np.flatnonzero(np.diag(a + r) > 0))
        if ex == last and ex:
            unchanged += 1
        else:
            unchanged = 0
        last = ex
        if unchanged >= stable_iters:
            converged = True
            break

    exemplars = np.flatnonzero(np.diag(a + r) > 0)
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(np.diag(a + r)))])
    return ClusterAssignment(_assign(s_work, exemplars), it, converged)


def _assign(s: np.ndarray, exemplars: np.ndarray) -> np.ndarray:
    """Nearest-exemplar assignment followed by one exemplar refinement pass."""
    lab = exemplars[np.argmax(s[:, exemplars], axis=1)]
    lab[exemplars] = exemplars
    refined = []
    for ex in exemplars:
        members = np.flatnonzero(lab == ex)
        score = s[np.ix_(members, members)].sum(axis=0)
        refined.append(members[int(np.argmax(score))])
    refined = np.array(sorted(refined))
    lab = refined[np.argmax(s[:, refined], axis=1)]
    lab[refined] = refined
    return lab.astype(np.int64)


def net_similarity(s, exemplar_of) -> float:
    """Sum of member-to-exemplar similarities plus exemplar preferences."""
    s = np.asarray(s, dtype=np.float64)
    lab = np.asarray(exemplar_of)
    return float(s[np.arange(len(lab)), lab].sum())


def cluster_fedavg(clusters, updates) -> list[np.ndarray]:
    """Size-weighted mean of member vectors inside each cluster.

    ``clusters`` is a list of member-index lists into ``updates``, which holds
    ``(vector, dataset_size)`` pairs.
    """
    out = []
    for members in clusters:
        if not members:
            raise ContractError("empty cluster")
        vecs = [np.asarray(updates[m][0], dtype=np.float64) for m in members]
        if len({v.shape for v in vecs}) != 1:
            raise ContractError("cluster mixes architectures")
        w = np.array([float(updates[m][1]) for m in members])
        if np.any(w <= 0):
            raise ContractError("dataset sizes must be positive")
        out.append(np.tensordot(w, np.stack(vecs), axes=1) / w.sum())
    return out
