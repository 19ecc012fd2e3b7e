"""Nearest-neighbour classification, cross-modal retrieval and ranking metrics.

All ties (equal distances or scores) are broken by ascending sample ID.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import MultiModalDataset
from .optimizer import EmbeddingModel

__all__ = [
    "RetrievalResult",
    "EvaluationReport",
    "evaluate",
    "METRICS",
    "classify",
    "classify_batch",
    "retrieve",
    "rank_candidates",
    "precision_recall",
    "precision_recall_curve",
    "average_precision",
    "map_score",
    "mean_average_precision",
    "misclassification_rate",
    "evaluate_retrieval",
]

METRICS = ("euclidean", "cosine")
MODES = ("all", "own")


@dataclass(frozen=True)
class RetrievalResult:
    query_id: int | None
    query_modality: int
    target_modality: int
    ids: np.ndarray
    scores: np.ndarray
    metric: str


@dataclass
class EvaluationReport:
    """Classification rates per modality and retrieval results per direction."""

    mode: str
    misclassification_percent: list
    retrieval: list = field(default_factory=list)

    def __post_init__(self):
        for r in self.misclassification_percent:
            if r is not None and not 0.0 <= r <= 100.0:
                raise ValueError("misclassification rate outside [0, 100]")
        for d in self.retrieval:
            values = [d["map"], *d["precision_at_k"], *d["recall_at_k"]]
            if not all(0.0 <= x <= 1.0 for x in values):
                raise ValueError("MAP, precision or recall outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_model(model):
    if not isinstance(model, EmbeddingModel):
        raise TypeError("expected a trained EmbeddingModel")


def _candidates(model: EmbeddingModel, v: int, mode: str):
    """Training embeddings, labels and IDs searched by the classifier."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    mods = range(model.num_modalities) if mode == "all" else [v]
    Y = np.concatenate([model.blocks[u] for u in mods])
    lab = np.concatenate([model.labels[u] for u in mods])
    ids = np.concatenate([model.sample_ids[u] for u in mods])
    order = np.argsort(ids, kind="stable")
    return Y[order], lab[order], ids[order]


def classify_batch(model: EmbeddingModel, X, v: int, mode: str = "all") -> np.ndarray:
    """Labels of the nearest training embeddings to ``f_v(X)`` (rows of X)."""
    _check_model(model)
    Y, lab, _ = _candidates(model, v, mode)
    Z = model.embed(np.atleast_2d(X), v)
    D = cdist(Z, Y, "sqeuclidean")
    # argmin returns the first minimum, i.e. the smallest sample ID
    return lab[np.argmin(D, axis=1)]


def classify(model: EmbeddingModel, x, v: int, mode: str = "all") -> int:
    """Nearest-neighbour class of one observation from modality ``v``.

    ``mode="all"`` searches every modality's training embeddings;
    ``mode="own"`` only those of modality ``v``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("classify takes a single feature vector")
    return int(classify_batch(model, x[None, :], v, mode)[0])


def rank_candidates(z, Y, ids, metric: str = "cosine"):
    """Order rows of ``Y`` against the query embedding ``z``.

    Returns ``(order, scores)`` where scores are distances (ascending) for
    ``euclidean`` and cosine similarities (descending) for ``cosine``.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    z = np.asarray(z, dtype=float)
    ids = np.asarray(ids)
    if metric == "euclidean":
        s = np.sqrt(np.sum((Y - z) ** 2, axis=1))
        order = np.lexsort((ids, s))
    else:
        nz, nY = np.linalg.norm(z), np.linalg.norm(Y, axis=1)
        if nz == 0 or np.any(nY == 0):
            raise ValueError("undefined cosine similarity for a zero embedding")
        s = (Y @ z) / (nY * nz)
        order = np.lexsort((ids, -s))
    return order, s[order]


def retrieve(model: EmbeddingModel, x, v: int, u: int, K: int, metric: str = "cosine",
             query_id: int | None = None) -> RetrievalResult:
    """Top-``K`` modality-``u`` training samples for a modality-``v`` query."""
    _check_model(model)
    Yu, ids = model.blocks[u], model.sample_ids[u]
    if not 1 <= K <= ids.size:
        raise ValueError(f"K must lie in 1..{ids.size}")
    z = model.embed(np.asarray(x, dtype=float), v)
    order, scores = rank_candidates(z, Yu, ids, metric)
    return RetrievalResult(query_id, v, u, ids[order[:K]], scores[:K], metric)


def precision_recall(retrieved, relevant, total_relevant: int):
    """Set-based precision ``TP/(TP+FP)`` and recall ``TP/(TP+FN)``."""
    retrieved = list(retrieved)
    if not retrieved:
        raise ValueError("nothing retrieved")
    relevant = set(relevant)
    tp = sum(1 for r in retrieved if r in relevant)
    fp = len(retrieved) - tp
    if total_relevant < tp:
        raise ValueError("total relevant count is smaller than the true positives")
    fn = total_relevant - tp
    P = tp / (tp + fp)
    R = tp / (tp + fn) if tp + fn else 0.0
    return P, R


def precision_recall_curve(flags, total_relevant: int):
    """Precision@k and recall@k for k = 1..len(flags)."""
    flags = np.asarray(flags, dtype=float)
    hits = np.cumsum(flags)
    k = np.arange(1, flags.size + 1)
    return hits / k, hits / total_relevant if total_relevant else np.zeros_like(hits)


def average_precision(flags, total_relevant: int) -> float:
    """Mean of precision@k over the ranks k holding a relevant item, divided by all relevant."""
    if total_relevant < 1:
        raise ValueError("average precision needs at least one relevant item")
    flags = np.asarray(flags, dtype=bool)
    k = np.flatnonzero(flags) + 1
    if k.size == 0:
        return 0.0
    return float(np.sum(np.arange(1, k.size + 1) / k) / total_relevant)


def map_score(flag_rows, totals) -> float:
    return float(np.mean([average_precision(f, t) for f, t in zip(flag_rows, totals)]))


def _queries(test: MultiModalDataset, v: int):
    return test.features[v], test.labels_of(v), test.sample_ids[v]


def _ranked_flags(model, test, v, u, metric):
    X, qlab, qids = _queries(test, v)
    Yu, tids, tlab = model.blocks[u], model.sample_ids[u], model.labels[u]
    Z = model.embed(X, v) if X.shape[0] else np.zeros((0, model.dim))
    out = []
    for z, c, qid in zip(Z, qlab, qids):
        total = int(np.sum(tlab == c))
        if total == 0:
            raise ValueError(f"class {int(c)} has no training sample in modality {u}")
        order, _ = rank_candidates(z, Yu, tids, metric)
        out.append((int(qid), int(c), tlab[order] == c, total))
    return out


def mean_average_precision(model: EmbeddingModel, test: MultiModalDataset, v: int, u: int,
                           metric: str = "cosine") -> float:
    """MAP of modality-``v`` test queries against the full modality-``u`` training ranking."""
    _check_model(model)
    ranked = _ranked_flags(model, test, v, u, metric)
    if not ranked:
        raise ValueError(f"no test queries in modality {v}")
    return map_score([r[2] for r in ranked], [r[3] for r in ranked])


def misclassification_rate(model: EmbeddingModel, test: MultiModalDataset,
                           mode: str = "all") -> list:
    """Percent of misclassified test observations, one entry per modality (None if empty)."""
    _check_model(model)
    out = []
    for v in range(test.num_modalities):
        X, lab, _ = _queries(test, v)
        if X.shape[0] == 0:
            out.append(None)
            continue
        pred = classify_batch(model, X, v, mode)
        out.append(float(100.0 * np.mean(pred != lab)))
    return out


def evaluate_retrieval(model: EmbeddingModel, test: MultiModalDataset, v: int, u: int,
                       K: int, metric: str = "cosine") -> dict:
    """MAP, mean P@k / R@k curves and per-query TP/FP/FN at depth ``K``."""
    _check_model(model)
    n_u = model.sample_ids[u].size
    if not 1 <= K <= n_u:
        raise ValueError(f"K must lie in 1..{n_u}")
    ranked = _ranked_flags(model, test, v, u, metric)
    if not ranked:
        raise ValueError(f"no test queries in modality {v}")
    P_curves, R_curves, per_query = [], [], []
    for qid, c, flags, total in ranked:
        P, R = precision_recall_curve(flags, total)
        P_curves.append(P)
        R_curves.append(R)
        tp = int(np.sum(flags[:K]))
        per_query.append({"query_id": qid, "class": c, "tp": tp, "fp": K - tp,
                          "fn": total - tp, "precision": tp / K, "recall": tp / total})
    return {
        "direction": f"{v}->{u}",
        "metric": metric,
        "k": int(K),
        "map": map_score([r[2] for r in ranked], [r[3] for r in ranked]),
        "precision_at_k": np.mean(P_curves, axis=0).tolist(),
        "recall_at_k": np.mean(R_curves, axis=0).tolist(),
        "queries": per_query,
    }


def evaluate(model: EmbeddingModel, test: MultiModalDataset, mode: str = "all",
             K: int | None = None, metric: str = "cosine") -> EvaluationReport:
    """Misclassification rates plus retrieval in every ordered modality pair.

    Retrieval is skipped when ``K`` is None.
    """
    rates = misclassification_rate(model, test, mode)
    directions = []
    if K is not None:
        V = model.num_modalities
        directions = [evaluate_retrieval(model, test, v, u, K, metric)
                      for v in range(V) for u in range(V)
                      if v != u and test.sizes[v] > 0]
    return EvaluationReport(mode, rates, directions)
