"""Clustering and reporting over per-user intent embeddings.

Users are summarized by the aggregated intent embedding at their final
sequence position plus the head-attention weights there. K-means++ with
Lloyd iterations groups the embeddings; purity and adjusted Rand index
score the grouping against the generator's planted states; a PCA
projection provides deterministic 2-D coordinates for external plotting;
the attention report names each user's dominant prediction head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import UserSequence
from .errors import ConfigError, DataValidationError
from .models import RecModel


# ---------------------------------------------------------------------------
# K-means++

@dataclass
class KMeansResult:
    assignments: np.ndarray   # (n,) cluster index per point
    centers: np.ndarray       # (k, d)
    inertia: float
    inertia_trace: list[float]


def _nearest_sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1)


def kmeans_pp(points: np.ndarray, k: int, seed: int = 0,
              max_iter: int = 100, tol: float = 1e-6) -> KMeansResult:
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1 or k > n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)

    # seeding: first center uniform, later ones proportional to squared
    # distance from the nearest center already chosen
    centers = [points[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = _nearest_sq_dist(points, np.array(centers))
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
    centers = np.array(centers)

    trace: list[float] = []
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignments = d2.argmin(axis=1)  # ties resolve to the lowest index
        inertia = float(d2[np.arange(n), assignments].sum())
        trace.append(inertia)
        new_centers = centers.copy()
        for c in range(k):
            members = points[assignments == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
        # revive any empty cluster with the point farthest from its center
        for c in range(k):
            if not (assignments == c).any():
                worst = int(d2[np.arange(n), assignments].argmax())
                new_centers[c] = points[worst]
                assignments[worst] = c
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    trace.append(inertia)
    return KMeansResult(assignments, centers, inertia, trace)


# ---------------------------------------------------------------------------
# PCA

@dataclass
class PCAResult:
    projected: np.ndarray         # (n, out_dim)
    components: np.ndarray        # (out_dim, d), orthonormal rows
    explained_ratio: np.ndarray   # (out_dim,)


def pca_project(points: np.ndarray, out_dim: int = 2) -> PCAResult:
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n < 2:
        raise DataValidationError(f"pca needs at least 2 points, got {n}")
    out_dim = min(out_dim, d)
    centered = points - points.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:out_dim].copy()
    # deterministic orientation: the largest-magnitude loading is positive
    for i in range(out_dim):
        j = int(np.abs(comps[i]).argmax())
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    total = float((svals ** 2).sum())
    if total <= 0.0:
        ratios = np.zeros(out_dim)
    else:
        ratios = (svals[:out_dim] ** 2) / total
    return PCAResult(centered @ comps.T, comps, ratios)


# ---------------------------------------------------------------------------
# agreement with planted labels

def cluster_purity(assignments, labels) -> float:
    assignments, labels = np.asarray(assignments), np.asarray(labels)
    if assignments.shape != labels.shape:
        raise DataValidationError("purity needs equally many assignments and labels")
    n = len(assignments)
    total = 0
    for c in np.unique(assignments):
        member_labels = labels[assignments == c]
        _, counts = np.unique(member_labels, return_counts=True)
        total += int(counts.max())
    return total / n


def adjusted_rand_index(assignments, labels) -> float:
    assignments, labels = np.asarray(assignments), np.asarray(labels)
    if assignments.shape != labels.shape:
        raise DataValidationError("ARI needs equally many assignments and labels")
    n = len(assignments)

    def comb2(x):
        return x * (x - 1) / 2.0

    cats_a, inv_a = np.unique(assignments, return_inverse=True)
    cats_b, inv_b = np.unique(labels, return_inverse=True)
    table = np.zeros((len(cats_a), len(cats_b)))
    np.add.at(table, (inv_a, inv_b), 1)
    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    denom = max_index - expected
    if denom == 0.0:
        return 1.0 if sum_ij == max_index else 0.0
    return float((sum_ij - expected) / denom)


# ---------------------------------------------------------------------------
# intent embeddings and attention

@dataclass
class IntentEmbedding:
    user_id: int
    z: np.ndarray        # (d_proj,) aggregated embedding at the final position
    alpha: np.ndarray    # (M,) head-attention weights at the final position
    latent: int | None   # planted generator state, when available


def collect_intent_embeddings(model: RecModel, users: list[UserSequence],
                              latents: dict[int, list[int]] | None = None
                              ) -> list[IntentEmbedding]:
    if not model.cfg.variant.hierarchical:
        raise ConfigError(
            f"variant {model.cfg.variant.kind} has no aggregated intent embedding")
    max_seq = model.cfg.features.max_seq
    out = []
    for u in users:
        fwd = model.forward(u.interactions)
        alpha = fwd.intent.alpha.data[-1]
        if abs(alpha.sum() - 1.0) > 1e-9:
            raise DataValidationError(f"user {u.user_id}: attention weights sum to {alpha.sum()}")
        latent = None
        if latents is not None and u.user_id in latents:
            states = latents[u.user_id][-max_seq:]
            latent = int(states[-1])
        out.append(IntentEmbedding(u.user_id, fwd.intent.z.data[-1].copy(),
                                   alpha.copy(), latent))
    return out


def attention_report(embeddings: list[IntentEmbedding], head_names: list[str],
                     top_k: int = 10) -> dict:
    """Dominant head per user, the population histogram, and the clearest
    examples per head ranked by attention margin."""
    if not embeddings:
        raise DataValidationError("attention report needs at least one user")
    users = []
    histogram = {name: 0 for name in head_names}
    margins: dict[str, list[tuple[float, int]]] = {name: [] for name in head_names}
    for e in embeddings:
        order = np.argsort(-e.alpha, kind="stable")
        primary = int(order[0])  # argsort is stable, so ties pick the lowest index
        tie = bool(np.sum(e.alpha == e.alpha[primary]) > 1)
        margin = float(e.alpha[primary] - e.alpha[order[1]]) if len(e.alpha) > 1 else 1.0
        name = head_names[primary]
        histogram[name] += 1
        margins[name].append((margin, e.user_id))
        users.append({"user_id": e.user_id, "primary": name,
                      "alpha": [float(a) for a in e.alpha], "tie": tie})
    exemplars = {}
    for name in head_names:
        ranked = sorted(margins[name], key=lambda mv: (-mv[0], mv[1]))
        exemplars[name] = [{"user_id": uid, "margin": m} for m, uid in ranked[:top_k]]
    return {"users": users, "histogram": histogram, "exemplars": exemplars}
