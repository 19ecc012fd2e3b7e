"""Alternating minimisation for multi-modal nonlinear supervised embeddings.

The objective over the stacked embedding ``Y`` (N x d, ``Y.T @ Y = I``) and
per-modality kernel scales ``sigma`` is

    tr(Y' Lw Y) - mu1 tr(Y' Lb Y) + mu2 tr(Y' Psi^-2 Y) + mu3 sum_v sigma_v^-2
        + mu4 tr(Y' Lcw Y) - mu5 tr(Y' Lcb Y)

which equals ``tr(Y' A Y) + mu3 sum_v sigma_v^-2`` for the matrix built by
:func:`build_A`. ``Y`` is updated by a symmetric eigensolve, each ``sigma_v``
by exhaustive search over a log grid that always contains the incumbent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist

from .dataset import MultiModalDataset
from .graphs import LaplacianSet, build_laplacians
from .kernel import (
    JITTER_LADDER,
    MIN_RCOND,
    InterpolatorModel,
    KernelFactor,
    SingularKernelError,
    factor_kernel,
    rbf_kernel_matrix,
)

__all__ = [
    "HyperParams",
    "TraceEntry",
    "ObjectiveTrace",
    "EmbeddingModel",
    "EigenSolution",
    "build_A",
    "solve_embedding",
    "objective",
    "sigma_grid",
    "optimize_sigma",
    "reference_scale",
    "inverse_squared_kernel",
    "train",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParams:
    """Objective weights and solver settings.

    ``dim=None`` resolves to ``num_classes - 1`` (at least 1) at training time.
    The sigma grid has ``grid_count`` log-spaced points on
    ``[grid_min, grid_max] * reference`` where the reference is the median
    pairwise distance of the modality, which is also the initial sigma.
    """

    mu1: float = 100.0
    mu2: float = 0.001
    mu3: float = 1.0
    mu4: float = 100.0
    mu5: float = 100.0
    dim: int | None = None
    grid_count: int = 25
    grid_min: float = 0.1
    grid_max: float = 10.0
    max_iters: int = 50
    tol: float = 1e-6
    sigma_init: tuple | None = None
    thetas: tuple | None = None
    jitter_ladder: tuple = JITTER_LADDER

    def __post_init__(self):
        for name in ("mu1", "mu2", "mu3", "mu4", "mu5"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0")
        if self.dim is not None and int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        if int(self.grid_count) < 1:
            raise ValueError("grid_count must be >= 1")
        if not (0 < self.grid_min <= self.grid_max):
            raise ValueError("need 0 < grid_min <= grid_max")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.sigma_init is not None and any(not s > 0 for s in self.sigma_init):
            raise ValueError("sigma_init entries must be positive")
        if self.thetas is not None and any(not t > 0 for t in self.thetas):
            raise ValueError("thetas must be positive")

    @classmethod
    def classification(cls, **overrides) -> "HyperParams":
        """Weights used for the classification workloads."""
        return cls(**{**dict(mu1=100.0, mu2=0.001, mu3=1.0, mu4=100.0, mu5=100.0), **overrides})

    @classmethod
    def retrieval(cls, **overrides) -> "HyperParams":
        """Weights used for cross-modal retrieval workloads."""
        return cls(**{**dict(mu1=0.1, mu2=1.0, mu3=1.0, mu4=10.0, mu5=0.1), **overrides})

    def weights(self) -> tuple:
        return (self.mu1, self.mu2, self.mu3, self.mu4, self.mu5)

    def with_(self, **kw) -> "HyperParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    after_y: float
    after_sigma: float
    sigmas: tuple
    orthonormality_error: float
    eigenvalue_sum: float


@dataclass
class ObjectiveTrace:
    entries: list = field(default_factory=list)

    def values(self) -> list:
        """All recorded objective values in order (Y-step, sigma-step, ...)."""
        out = []
        for e in self.entries:
            out += [e.after_y, e.after_sigma]
        return out

    def __len__(self):
        return len(self.entries)

    def is_monotone(self, slack: float = 1e-9) -> bool:
        vals = self.values()
        return all(b <= a + slack for a, b in zip(vals, vals[1:]))


@dataclass(frozen=True)
class EmbeddingModel:
    """Trained embedding: stacked coordinates, per-modality interpolators, bookkeeping."""

    Y: np.ndarray
    interpolators: tuple
    sample_ids: tuple
    labels: tuple
    num_classes: int
    hyperparams: HyperParams
    trace: ObjectiveTrace
    thetas: tuple = ()
    degenerate: bool = False

    @property
    def num_modalities(self) -> int:
        return len(self.interpolators)

    @property
    def dim(self) -> int:
        return self.Y.shape[1]

    @property
    def sizes(self) -> tuple:
        return tuple(f.X.shape[0] for f in self.interpolators)

    @property
    def blocks(self) -> tuple:
        """Per-modality embedding blocks Y^(v)."""
        return tuple(f.Y for f in self.interpolators)

    @property
    def sigmas(self) -> tuple:
        return tuple(f.sigma for f in self.interpolators)

    @property
    def lipschitz_constants(self) -> tuple:
        return tuple(f.lipschitz for f in self.interpolators)

    def training_set(self) -> MultiModalDataset:
        labels = {}
        for ids, lab in zip(self.sample_ids, self.labels):
            labels.update({int(i): int(c) for i, c in zip(ids, lab)})
        return MultiModalDataset(
            tuple(f.X for f in self.interpolators), self.sample_ids, labels, self.num_classes
        )

    def embed(self, X, v: int) -> np.ndarray:
        return self.interpolators[v](X)


# ---------------------------------------------------------------------------
# building blocks


def reference_scale(X) -> float:
    """Median nonzero pairwise distance of a modality (1.0 when undefined)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        return 1.0
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def sigma_grid(reference: float, hp: HyperParams) -> np.ndarray:
    return reference * np.geomspace(hp.grid_min, hp.grid_max, int(hp.grid_count))


def inverse_squared_kernel(factors) -> np.ndarray:
    """Block-diagonal ``(Psi + lam I)^-2`` from per-modality factors."""
    return scipy.linalg.block_diag(*[F.inverse_squared() for F in factors])


def _laplacian_part(lap: LaplacianSet, hp) -> np.ndarray:
    mu1, _, _, mu4, mu5 = _weights(hp)
    return lap.within - mu1 * lap.between + mu4 * lap.cross_within - mu5 * lap.cross_between


def _weights(hp):
    if isinstance(hp, HyperParams):
        return hp.weights()
    return tuple(float(m) for m in hp)


def build_A(lap: LaplacianSet, inv_sq_kernel, hp) -> np.ndarray:
    """``Lw - mu1 Lb + mu2 Psi^-2 + mu4 Lcw - mu5 Lcb``, symmetrised.

    ``hp`` is a :class:`HyperParams` or a 5-tuple of weights.
    """
    K = np.asarray(inv_sq_kernel, dtype=float)
    if K.shape != lap.within.shape:
        raise ValueError(f"kernel term has shape {K.shape}, Laplacians {lap.within.shape}")
    mu2 = _weights(hp)[1]
    A = _laplacian_part(lap, hp) + mu2 * K
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class EigenSolution:
    Y: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool  # d-th and (d+1)-th eigenvalues coincide


def _fix_signs(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for k in range(V.shape[1]):
        j = int(np.argmax(np.abs(V[:, k])))
        if V[j, k] < 0:
            V[:, k] = -V[:, k]
    return V


def solve_embedding(A, d: int) -> EigenSolution:
    """Orthonormal eigenvectors of the ``d`` algebraically smallest eigenvalues.

    Columns are ordered by ascending eigenvalue; numerically equal
    eigenvalues are ordered by lexicographic comparison of their
    sign-normalised eigenvectors. Each column's largest-magnitude entry is
    made positive.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"embedding dimension {d} outside 1..{n}")
    top = min(d, n - 1)
    try:
        w, V = scipy.linalg.eigh(A, subset_by_index=[0, top])
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver failed: {exc}") from exc
    V = _fix_signs(V)
    tie = 1e-12 * max(1.0, float(np.max(np.abs(w))))
    # stable ordering: eigenvalue groups first, then lexicographic within a group
    groups = np.zeros(w.size, dtype=int)
    for k in range(1, w.size):
        groups[k] = groups[k - 1] + (w[k] - w[k - 1] > tie)
    keys = [tuple(V[:, k]) for k in range(w.size)]
    order = sorted(range(w.size), key=lambda k: (groups[k], keys[k]))
    w, V = w[order], V[:, order]
    degenerate = bool(top >= d and abs(w[d] - w[d - 1]) <= tie)
    return EigenSolution(np.ascontiguousarray(V[:, :d]), w[:d], degenerate)


def objective(Y, lap: LaplacianSet, inv_sq_kernel, sigmas, hp) -> float:
    """``tr(Y' A Y) + mu3 sum sigma^-2``."""
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(sigmas <= 0):
        raise ValueError("kernel scales must be positive")
    Y = np.asarray(Y, dtype=float)
    A = build_A(lap, inv_sq_kernel, hp)
    mu3 = _weights(hp)[2]
    return float(np.trace(Y.T @ A @ Y) + mu3 * np.sum(sigmas**-2.0))


def _regularity(F: KernelFactor, Yv: np.ndarray) -> float:
    C = F.solve(Yv)
    return float(np.sum(C * C))


def optimize_sigma(X_v, Y_v, mu2: float, mu3: float, grid, incumbent: float,
                   ladder=JITTER_LADDER):
    """Minimise ``mu2 ||(Psi(s) + lam I)^-1 Y_v||_F^2 + mu3 / s^2`` over ``grid`` and the incumbent.

    The incumbent wins any tie it is part of (so a flat objective leaves
    sigma alone); other ties go to the largest sigma.

    Returns
    -------
    sigma : float
    value : float
        Objective value at the returned sigma.
    """
    cands = sorted(set(float(s) for s in np.atleast_1d(grid)) | {float(incumbent)})
    X_v = np.asarray(X_v, dtype=float)
    Y_v = np.asarray(Y_v, dtype=float)
    values = {}
    for s in cands:
        try:
            reg = 0.0
            if mu2:
                F = factor_kernel(rbf_kernel_matrix(X_v, s), ladder, MIN_RCOND)
                reg = _regularity(F, Y_v)
        except SingularKernelError:
            continue
        values[s] = mu2 * reg + mu3 * s**-2.0
    if not values:
        raise SingularKernelError("every sigma candidate gave a singular kernel")
    best = min(values.values())
    if values.get(float(incumbent)) == best:
        return float(incumbent), best
    winner = max(s for s, g in values.items() if g == best)
    return winner, best


# ---------------------------------------------------------------------------
# training loop


class _State:
    """Per-modality kernel factors for the current sigmas."""

    def __init__(self, ds: MultiModalDataset, hp: HyperParams):
        self.ds, self.hp = ds, hp
        self.factors = {}

    def factor(self, v: int, sigma: float) -> KernelFactor:
        key = (v, sigma)
        if key not in self.factors:
            self.factors[key] = factor_kernel(rbf_kernel_matrix(self.ds.features[v], sigma),
                                              self.hp.jitter_ladder, MIN_RCOND)
        return self.factors[key]


def _split_blocks(Y: np.ndarray, sizes) -> list:
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [Y[off[v]:off[v + 1]] for v in range(len(sizes))]


def train(ds: MultiModalDataset, hp: HyperParams | None = None) -> EmbeddingModel:
    """Run the alternating Y / sigma updates until the objective settles.

    Iteration stops when a sigma-step leaves every sigma unchanged (the next
    Y-step would reproduce the same point), when the relative decrease of
    the end-of-iteration objective drops below ``hp.tol``, or after
    ``hp.max_iters`` iterations.
    """
    hp = hp or HyperParams()
    V = ds.num_modalities
    d = hp.dim if hp.dim is not None else max(ds.num_classes - 1, 1)
    N = sum(ds.sizes)
    if d > N:
        raise ValueError(f"embedding dimension {d} exceeds the {N} training observations")
    present = set()
    for v in range(V):
        present.update(int(c) for c in ds.labels_of(v))
    if not present:
        raise ValueError("training set has no observations")

    lap = build_laplacians(ds, hp.thetas)
    lap_part = _laplacian_part(lap, hp)
    lap_part = 0.5 * (lap_part + lap_part.T)
    refs = [reference_scale(ds.features[v]) for v in range(V)]
    grids = [sigma_grid(r, hp) for r in refs]
    sigmas = [float(s) for s in (hp.sigma_init or refs)]
    if len(sigmas) != V:
        raise ValueError("sigma_init needs one entry per modality")

    state = _State(ds, hp)
    trace = ObjectiveTrace()
    warned = False
    degenerate = False
    prev_final = None
    Y = None

    def full_value(Y, sigmas):
        blocks = _split_blocks(Y, ds.sizes)
        reg = sum(_regularity(state.factor(v, sigmas[v]), blocks[v]) for v in range(V))
        return (float(np.sum(Y * (lap_part @ Y))) + hp.mu2 * reg
                + hp.mu3 * sum(s**-2.0 for s in sigmas))

    for it in range(1, int(hp.max_iters) + 1):
        K = inverse_squared_kernel([state.factor(v, sigmas[v]) for v in range(V)])
        A = lap_part + hp.mu2 * K
        A = 0.5 * (A + A.T)
        sol = solve_embedding(A, d)
        Y = sol.Y
        degenerate = sol.degenerate
        if not warned and sol.eigenvalues[0] < -1e-10 * max(1.0, np.abs(A).max()):
            log.info("A is indefinite (smallest eigenvalue %.3g); the PSD convergence "
                     "argument needs smaller mu1/mu5, the updates remain monotone",
                     sol.eigenvalues[0])
            warned = True
        orth = float(np.linalg.norm(Y.T @ Y - np.eye(d)))
        after_y = full_value(Y, sigmas)

        blocks = _split_blocks(Y, ds.sizes)
        new_sigmas = []
        for v in range(V):
            s, _ = optimize_sigma(ds.features[v], blocks[v], hp.mu2, hp.mu3, grids[v],
                                  sigmas[v], hp.jitter_ladder)
            new_sigmas.append(s)
        unchanged = new_sigmas == sigmas
        sigmas = new_sigmas
        after_sigma = full_value(Y, sigmas)
        trace.entries.append(TraceEntry(it, after_y, after_sigma, tuple(sigmas), orth,
                                        float(np.sum(sol.eigenvalues))))
        if unchanged:
            break
        if prev_final is not None:
            rel = (prev_final - after_sigma) / max(abs(prev_final), np.finfo(float).tiny)
            if rel < hp.tol:
                break
        prev_final = after_sigma

    blocks = _split_blocks(Y, ds.sizes)
    interps = []
    for v in range(V):
        F = state.factor(v, sigmas[v])
        interps.append(InterpolatorModel(ds.features[v], sigmas[v], F.solve(blocks[v]),
                                         blocks[v], F.jitter))
    if degenerate:
        log.warning("eigenvalues %d and %d of A coincide; the embedding is not unique", d, d + 1)
    return EmbeddingModel(
        Y=Y,
        interpolators=tuple(interps),
        sample_ids=ds.sample_ids,
        labels=tuple(ds.labels_of(v) for v in range(V)),
        num_classes=ds.num_classes,
        hyperparams=hp,
        trace=trace,
        thetas=lap.thetas,
        degenerate=degenerate,
    )
