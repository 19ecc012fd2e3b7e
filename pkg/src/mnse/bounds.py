"""Generalisation-bound quantities for supervised multi-modal embeddings.

Estimators measure the embedding geometry on training data:

* alignment ``eta``: largest distance between the embeddings of one sample
  in two modalities,
* compactness ``R_delta``: largest embedding distance between same-class,
  same-modality samples at most ``2 delta`` apart in input space,
* separation ``gamma``: smallest embedding distance between samples of
  different classes, over all modality pairs,
* ball measure ``eta_{m,delta}``: smallest fraction of class-m mass found in
  an open ``delta``-ball around a class-m point.

From these, :func:`check_condition` tests ``6 L delta + 2 sqrt(d) eps +
2 R_delta + 2 eta <= gamma`` and :func:`classification_bound` /
:func:`retrieval_guarantee` evaluate the probability and precision/recall
floors. :func:`audit` sweeps the free parameters and
:func:`monte_carlo_validate` checks the floors against fresh draws.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .dataset import MultiModalDataset, SynthConfig, draw_samples, generate_synthetic
from .evaluation import classify_batch, rank_candidates
from .optimizer import EmbeddingModel, HyperParams, train

__all__ = [
    "BoundsError",
    "GeometryParams",
    "BoundReport",
    "estimate_alignment",
    "estimate_compactness",
    "estimate_separation",
    "estimate_ball_measure",
    "pool_ball_measure",
    "check_condition",
    "classification_bound",
    "single_modality_probability",
    "retrieval_guarantee",
    "default_grids",
    "audit",
    "monte_carlo_validate",
]


class BoundsError(ValueError):
    """A bound was evaluated outside its preconditions."""


@dataclass
class GeometryParams:
    eta: float
    R_delta: float
    gamma: float
    delta: float
    eps: float
    Q: int
    d: int
    lipschitz: list
    L: float
    ball_measure: list  # per class, plug-in estimate
    N_m: list           # per class, samples observed in every modality
    V: int


@dataclass
class BoundReport:
    geometry: GeometryParams | None
    condition_holds: bool
    slack: float | None
    classification_floor: float
    class_floors: list
    single_modality_floor: float
    retrieval_k: int | None
    precision_floor: float | None
    recall_floor: float | None
    vacuous: bool
    grid_points: int
    admissible_points: int
    ball_measure_kind: str = "plug-in estimate"
    note: str = ""
    empirical: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# estimators


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, rows of ``a`` against rows of ``b``."""
    return np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))


def _unpack(model, ds):
    """(blocks, ds) from a trained model or an explicit list of embedding blocks."""
    if isinstance(model, EmbeddingModel):
        return list(model.blocks), ds if ds is not None else model.training_set()
    if ds is None:
        raise BoundsError("explicit embedding blocks need the dataset they embed")
    blocks = [np.asarray(b, dtype=float) for b in model]
    if [b.shape[0] for b in blocks] != list(ds.sizes):
        raise BoundsError("embedding blocks do not match the dataset's modality sizes")
    return blocks, ds


def estimate_alignment(model, ds: MultiModalDataset | None = None) -> float:
    """Largest ``|y_i^(v) - y_i^(u)|`` over samples observed in two modalities."""
    blocks, ds = _unpack(model, ds)
    V = ds.num_modalities
    best, found = 0.0, False
    for v in range(V):
        iv = ds.row_index(v)
        for u in range(v + 1, V):
            iu = ds.row_index(u)
            common = sorted(set(iv) & set(iu))
            if not common:
                continue
            found = True
            a = blocks[v][[iv[i] for i in common]]
            b = blocks[u][[iu[i] for i in common]]
            best = max(best, float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=1)))))
    if not found:
        raise BoundsError("no sample is observed in two modalities")
    return best


def estimate_compactness(model, ds: MultiModalDataset | None, delta: float) -> float:
    """Largest same-class embedding distance among pairs within ``2 delta`` in input space."""
    if not delta > 0:
        raise BoundsError("delta must be positive")
    blocks, ds = _unpack(model, ds)
    best = 0.0
    for v in range(ds.num_modalities):
        X, Y, lab = ds.features[v], blocks[v], ds.labels_of(v)
        for m in np.unique(lab):
            idx = np.flatnonzero(lab == m)
            if idx.size < 2:
                continue
            near = _dist(X[idx], X[idx]) <= 2 * delta
            np.fill_diagonal(near, False)
            if near.any():
                best = max(best, float(np.max(_dist(Y[idx], Y[idx])[near])))
    return best


def estimate_separation(model, ds: MultiModalDataset | None = None) -> float:
    """Smallest embedding distance between samples of different classes, any modalities."""
    blocks, ds = _unpack(model, ds)
    Y = np.concatenate(blocks)
    lab = np.concatenate([ds.labels_of(v) for v in range(ds.num_modalities)])
    if np.unique(lab).size < 2:
        raise BoundsError("separation needs at least two classes")
    cross = lab[:, None] != lab[None, :]
    return float(np.min(_dist(Y, Y)[cross]))


def estimate_ball_measure(ds: MultiModalDataset, m: int, delta: float) -> float:
    """Plug-in estimate of the smallest class-m ball mass at radius ``delta``.

    Every class-m observation serves as a centre; the mass is the fraction
    of the *other* class-m observations of that modality inside the open
    ball. The minimum is taken over centres and modalities. A modality with
    a single class-m observation contributes 0.
    """
    if not delta > 0:
        raise BoundsError("delta must be positive")
    best, seen = 1.0, False
    for v in range(ds.num_modalities):
        X = ds.features[v][ds.labels_of(v) == m]
        n = X.shape[0]
        if n == 0:
            continue
        seen = True
        if n == 1:
            return 0.0
        inside = _dist(X, X) < delta
        np.fill_diagonal(inside, False)
        best = min(best, float(np.min(inside.sum(axis=1))) / (n - 1))
    if not seen:
        raise BoundsError(f"class {m} is empty")
    return best


def pool_ball_measure(centers_per_modality, pool_per_modality, delta: float) -> float:
    """Ball mass estimated from a large independent pool instead of leave-one-out."""
    best = 1.0
    for C, P in zip(centers_per_modality, pool_per_modality):
        if len(C) == 0:
            continue
        counts = np.zeros(len(C))
        for start in range(0, len(P), 4096):
            counts += np.sum(_dist(C, P[start:start + 4096]) < delta, axis=1)
        best = min(best, float(np.min(counts)) / len(P))
    return best


# ---------------------------------------------------------------------------
# bounds


def check_condition(L: float, delta: float, eps: float, d: int, R_delta: float, eta: float,
                    gamma: float):
    """Return ``(holds, slack)`` with ``slack = gamma - (6 L delta + 2 sqrt(d) eps + 2 R + 2 eta)``."""
    slack = gamma - (6.0 * L * delta + 2.0 * math.sqrt(d) * eps + 2.0 * R_delta + 2.0 * eta)
    return slack >= 0, slack


def _failure_terms(N_m, eta_md, Q, d, eps, L, delta):
    if Q < 1:
        raise BoundsError("Q must be >= 1")
    if not 0 < eta_md <= 1:
        raise BoundsError("ball measure must lie in (0, 1]")
    if not N_m > Q / eta_md:
        raise BoundsError(f"need N_m > Q / eta_m,delta ({N_m} <= {Q / eta_md:g})")
    count = math.exp(-2.0 * (N_m * eta_md - Q) ** 2 / N_m)
    spread = L * delta
    # limit Ld -> 0 of exp(-Q eps^2 / (2 L^2 d^2)) is 0
    if spread > 0:
        r = eps / spread  # ratio form: spread**2 can underflow
        deviation = 2.0 * d * math.exp(-0.5 * Q * (r * r))
    else:
        deviation = 0.0
    link = (1.0 - eta_md) ** Q
    return count, deviation, link


def single_modality_probability(N_m, eta_md, Q, d, eps, L, delta) -> float:
    """``1 - (count + deviation + link)`` failure sum for one modality, floored at 0."""
    return max(0.0, 1.0 - sum(_failure_terms(N_m, eta_md, Q, d, eps, L, delta)))


def classification_bound(N_m, eta_md, Q, d, eps, L, delta, V) -> float:
    """Probability floor for correct nearest-neighbour classification, floored at 0."""
    bracket = sum(_failure_terms(N_m, eta_md, Q, d, eps, L, delta))
    if bracket >= 1.0:
        return 0.0
    return max(0.0, 1.0 - bracket**V)


def retrieval_guarantee(K: int, Q: int, N_m: int):
    """Precision and recall floors of top-K retrieval: exact when ``K <= Q``."""
    if K < 1 or Q < 1:
        raise BoundsError("K and Q must be >= 1")
    if K > N_m:
        raise BoundsError(f"K = {K} exceeds N_m = {N_m}")
    if K <= Q:
        return 1.0, K / N_m
    return Q / K, Q / N_m


# ---------------------------------------------------------------------------
# audit


def _median_input_distance(ds):
    d = np.concatenate([pdist(X) for X in ds.features if X.shape[0] > 1] or [np.ones(1)])
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def default_grids(model, ds=None):
    """delta: 8 log points on [1e-2, 1] x median input distance; eps: {0.01, 0.1, 0.5, 1}
    x median embedding distance; Q: {1, 2, 5, 10}."""
    blocks, ds = _unpack(model, ds)
    emb = pdist(np.concatenate(blocks))
    emb = emb[emb > 0]
    e_ref = float(np.median(emb)) if emb.size else 1.0
    deltas = np.geomspace(1e-2, 1.0, 8) * _median_input_distance(ds)
    epss = np.array([0.01, 0.1, 0.5, 1.0]) * e_ref
    return list(deltas), list(epss), [1, 2, 5, 10]


def _complete_counts(ds):
    """Per class, samples observed in every modality."""
    common = set(int(i) for i in ds.sample_ids[0])
    for I in ds.sample_ids[1:]:
        common &= set(int(i) for i in I)
    counts = [0] * ds.num_classes
    for i in common:
        counts[ds.labels[i]] += 1
    return counts


def audit(model: EmbeddingModel, ds: MultiModalDataset | None = None, deltas=None, epss=None,
          Qs=None, K: int | None = None, ball_measure=None) -> BoundReport:
    """Search (delta, eps, Q) for the largest classification floor.

    At each grid point the floor of the worst class is taken; the point with
    the largest such floor is reported. ``ball_measure`` optionally replaces
    the plug-in estimator: a callable ``(m, delta) -> measure``.
    """
    blocks, ds = _unpack(model, ds)
    gd, ge, gq = default_grids(blocks, ds)
    deltas = gd if deltas is None else list(deltas)
    epss = ge if epss is None else list(epss)
    Qs = gq if Qs is None else [int(q) for q in Qs]
    V, M = ds.num_modalities, ds.num_classes
    d = blocks[0].shape[1]
    eta = estimate_alignment(blocks, ds) if V > 1 else 0.0
    gamma = estimate_separation(blocks, ds)
    if isinstance(model, EmbeddingModel):
        lips = list(model.lipschitz_constants)
    else:
        raise BoundsError("audit needs a trained model for the Lipschitz constants")
    L = max(lips)
    N_m = _complete_counts(ds)
    measure = ball_measure or (lambda m, delta: estimate_ball_measure(ds, m, delta))

    best = None
    admissible = 0
    total = 0
    for delta in deltas:
        R = estimate_compactness(blocks, ds, delta)
        eta_md = [measure(m, delta) for m in range(M)]
        for eps in epss:
            holds, slack = check_condition(L, delta, eps, d, R, eta, gamma)
            for Q in Qs:
                total += 1
                floors = []
                singles = []
                for m in range(M):
                    ok = holds and eta_md[m] > 0 and N_m[m] > Q / eta_md[m]
                    if not ok:
                        floors.append(0.0)
                        singles.append(0.0)
                        continue
                    args = (N_m[m], eta_md[m], Q, d, eps, L, delta)
                    floors.append(classification_bound(*args, V))
                    singles.append(single_modality_probability(*args))
                if holds and all(eta_md[m] > 0 and N_m[m] > Q / eta_md[m] for m in range(M)):
                    admissible += 1
                key = (min(floors), slack)
                if best is None or key > best[0]:
                    geom = GeometryParams(eta, R, gamma, float(delta), float(eps), int(Q), d,
                                          lips, L, list(eta_md), list(N_m), V)
                    best = (key, geom, holds, slack, floors, min(singles))

    if best is None:
        return BoundReport(None, False, None, 0.0, [0.0] * M, 0.0, None, None, None, True,
                           0, 0, note="empty grid")
    (floor, _), geom, holds, slack, floors, single = best
    kk = K if K is not None else geom.Q
    P = Rr = None
    if floor > 0 and min(N_m) >= kk >= 1:
        P, Rr = retrieval_guarantee(kk, geom.Q, min(N_m))
    note = "" if floor > 0 else "no grid point satisfies the separation condition with a positive floor"
    return BoundReport(
        geometry=geom,
        condition_holds=bool(holds),
        slack=float(slack),
        classification_floor=float(floor),
        class_floors=[float(f) for f in floors],
        single_modality_floor=float(single),
        retrieval_k=int(kk) if P is not None else None,
        precision_floor=P,
        recall_floor=Rr,
        vacuous=not floor > 0,
        grid_points=total,
        admissible_points=admissible,
        ball_measure_kind="plug-in estimate" if ball_measure is None else "pool estimate",
        note=note,
    )


def _slack(floor: float, trials: int) -> float:
    return 3.0 * math.sqrt(floor * (1.0 - floor) / trials)


def monte_carlo_validate(cfg: SynthConfig, hp: HyperParams | None = None, trials: int = 1000,
                         K: int | None = None, test_seed: int | None = None,
                         pool_size: int = 0, model: EmbeddingModel | None = None,
                         **audit_kw) -> BoundReport:
    """Train on ``cfg`` data, audit it, then check the floors on fresh draws.

    ``trials`` fresh samples per class are drawn (observed in every
    modality). Each observation is classified with the all-modalities
    nearest-neighbour rule; for every class with a nonvacuous floor the
    empirical correct rate must reach ``floor - 3 sqrt(floor (1 - floor) /
    trials)``. Retrieval precision and recall at ``K`` (default: the audited
    Q) are measured from modality 0 queries into every other modality with
    the Euclidean ranking.

    ``pool_size > 0`` replaces the plug-in ball measure by the fraction of an
    independent pool of that many draws per class.
    """
    if trials < 100:
        raise BoundsError("need at least 100 trials")
    ds = generate_synthetic(cfg)
    if model is None:
        model = train(ds, hp or HyperParams())
    measure = None
    if pool_size:
        pool = draw_samples(cfg, pool_size, np.random.default_rng([cfg.seed, 0xB011]))

        def measure(m, delta):
            centers = [ds.features[v][ds.labels_of(v) == m] for v in range(ds.num_modalities)]
            pts = [pool.features[v][pool.labels_of(v) == m] for v in range(pool.num_modalities)]
            return pool_ball_measure(centers, pts, delta)

    report = audit(model, ds, K=K, ball_measure=measure, **audit_kw)

    seed = cfg.seed + 1 if test_seed is None else test_seed
    test = draw_samples(cfg, trials, np.random.default_rng([seed, 0x7E57]), first_id=10**9)
    M, V = cfg.num_classes, cfg.num_modalities
    correct = np.zeros((M, V))
    for v in range(V):
        pred = classify_batch(model, test.features[v], v, "all")
        lab = test.labels_of(v)
        for m in range(M):
            correct[m, v] = np.mean(pred[lab == m] == m)
    per_class = correct.min(axis=1)
    checks = []
    for m in range(M):
        f = report.class_floors[m]
        if f > 0:
            checks.append(bool(per_class[m] >= f - _slack(f, trials)))
    emp = {
        "trials": int(trials),
        "correct_rate": float(correct.mean()),
        "correct_rate_per_class": [float(x) for x in per_class],
        "correct_rate_per_class_modality": correct.tolist(),
        "floor_respected": all(checks),
        "checked_classes": len(checks),
        "status": "vacuous" if not checks else ("pass" if all(checks) else "violated"),
    }
    kk = K if K is not None else (report.geometry.Q if report.geometry else 1)
    if V > 1:
        n_u = min(model.sizes[1:])
        kk = min(kk, n_u)
        precisions, recalls = [], []
        Z = model.embed(test.features[0], 0)
        qlab = test.labels_of(0)
        for u in range(1, V):
            Yu, tids, tlab = model.blocks[u], model.sample_ids[u], model.labels[u]
            for z, c in zip(Z, qlab):
                order, _ = rank_candidates(z, Yu, tids, "euclidean")
                tp = int(np.sum(tlab[order[:kk]] == c))
                precisions.append(tp / kk)
                recalls.append(tp / max(int(np.sum(tlab == c)), 1))
        emp.update(retrieval_k=int(kk), precision_mean=float(np.mean(precisions)),
                   precision_min=float(np.min(precisions)),
                   recall_mean=float(np.mean(recalls)), recall_min=float(np.min(recalls)))
    report.empirical = emp
    return report
