"""Gaussian RBF interpolators: kernel matrices, jittered fits, Lipschitz constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.linalg.lapack
from scipy.spatial.distance import cdist

__all__ = [
    "JITTER_LADDER",
    "SingularKernelError",
    "FIT_RCOND",
    "MIN_RCOND",
    "KernelFactor",
    "InterpolatorModel",
    "rbf_kernel_matrix",
    "rbf_cross_kernel",
    "factor_kernel",
    "fit_coefficients",
    "evaluate_interpolator",
    "lipschitz_constant",
    "LIPSCHITZ_FACTOR",
]

# multiples of mean(diag(Psi)) tried in order until the Cholesky factor is usable
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)

# below the top rung, a factor is rejected when 1/cond(Psi + lam I) falls under a floor.
# For a plain fit the residual |Psi C - Y| grows like eps * cond * |Y|, so 1e-9 keeps
# it near 2e-7 |Y|. The training objective squares the inverse, so there
# cond(Psi)^2 must stay below 1/eps.
FIT_RCOND = 1e-9
MIN_RCOND = float(np.sqrt(np.finfo(float).eps))

# sqrt(2) * exp(-1/2): the maximum slope of r -> exp(-r^2) times sqrt(2)
LIPSCHITZ_FACTOR = math.sqrt(2.0) * math.exp(-0.5)


class SingularKernelError(np.linalg.LinAlgError):
    """Kernel matrix could not be factorised even at the top of the jitter ladder."""


def rbf_kernel_matrix(X, sigma: float) -> np.ndarray:
    """``Psi[i, j] = exp(-|x_i - x_j|^2 / sigma^2)``; exactly symmetric, unit diagonal."""
    if not sigma > 0:
        raise ValueError("kernel scale sigma must be positive")
    X = np.asarray(X, dtype=float)
    Psi = np.exp(-cdist(X, X, "sqeuclidean") / sigma**2)
    Psi = np.triu(Psi, 1)
    Psi = Psi + Psi.T
    np.fill_diagonal(Psi, 1.0)
    return Psi


def rbf_cross_kernel(Xq, X, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("kernel scale sigma must be positive")
    return np.exp(-cdist(np.atleast_2d(Xq), X, "sqeuclidean") / sigma**2)


@dataclass(frozen=True)
class KernelFactor:
    """Cholesky factor of ``Psi + jitter * I``."""

    cho: tuple
    jitter: float

    def solve(self, B) -> np.ndarray:
        return scipy.linalg.cho_solve(self.cho, B)

    def inverse_squared(self) -> np.ndarray:
        """``(Psi + jitter I)^-2`` by two triangular solve passes, symmetrised."""
        n = self.cho[0].shape[0]
        P = self.solve(self.solve(np.eye(n)))
        return 0.5 * (P + P.T)


def factor_kernel(Psi, ladder=JITTER_LADDER, min_rcond: float = FIT_RCOND) -> KernelFactor:
    """Factor ``Psi + lam I`` for the first ladder rung that succeeds.

    Below the top rung, success means Cholesky completes *and* the estimated
    reciprocal condition number is at least ``min_rcond``. Training passes
    ``MIN_RCOND`` because it forms ``(Psi + lam I)^-2``. The top rung only
    needs Cholesky to complete.
    """
    Psi = np.asarray(Psi, dtype=float)
    n = Psi.shape[0]
    if Psi.ndim != 2 or n != Psi.shape[1]:
        raise ValueError("kernel matrix must be square")
    scale = float(np.mean(np.diag(Psi))) if n else 1.0
    for k, step in enumerate(ladder):
        lam = step * scale
        M = Psi + lam * np.eye(n)
        try:
            c, lower = scipy.linalg.cho_factor(M, lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if k < len(ladder) - 1:
            rcond, info = scipy.linalg.lapack.dpocon(c, np.abs(M).sum(axis=0).max())
            if info != 0 or not rcond >= min_rcond:
                continue
        return KernelFactor((c, lower), lam)
    raise SingularKernelError(
        f"kernel matrix not positive definite even with jitter {ladder[-1] * scale:g}"
    )


def fit_coefficients(Psi, Y, ladder=JITTER_LADDER, min_rcond: float = FIT_RCOND):
    """Solve ``(Psi + lam I) C = Y`` with the smallest workable jitter.

    Returns
    -------
    C : ndarray
    lam : float
        Jitter actually added to the diagonal.
    """
    Y = np.asarray(Y, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    if Y.shape[0] != Psi.shape[0]:
        raise ValueError("Y must have one row per kernel row")
    F = factor_kernel(Psi, ladder, min_rcond)
    return F.solve(Y), F.jitter


@dataclass(frozen=True)
class InterpolatorModel:
    """RBF extension of one modality's embedding.

    ``f(x)[k] = sum_i C[i, k] * exp(-|x - X[i]|^2 / sigma^2)``.
    """

    X: np.ndarray
    sigma: float
    C: np.ndarray
    Y: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        # fresh C-ordered copies: BLAS results can depend on layout and alignment,
        # and a reloaded model must reproduce the original bit for bit
        X = np.array(np.atleast_2d(self.X), dtype=float, order="C")
        C = np.array(self.C, dtype=float, order="C").reshape(X.shape[0], -1)
        Y = np.array(self.Y, dtype=float, order="C").reshape(X.shape[0], -1)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if C.shape != Y.shape:
            raise ValueError("coefficients and embedding block disagree in shape")
        if not np.all(np.isfinite(C)):
            raise ValueError("non-finite interpolator coefficients")
        for a in (X, C, Y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "jitter", float(self.jitter))

    @classmethod
    def fit(cls, X, Y, sigma: float, ladder=JITTER_LADDER,
            min_rcond: float = FIT_RCOND) -> "InterpolatorModel":
        C, lam = fit_coefficients(rbf_kernel_matrix(X, sigma), Y, ladder, min_rcond)
        return cls(X, sigma, C, Y, lam)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def lipschitz(self) -> float:
        return lipschitz_constant(self.X.shape[0], self.sigma, self.C)

    def __call__(self, x) -> np.ndarray:
        return evaluate_interpolator(self, x)


def evaluate_interpolator(model: InterpolatorModel, x) -> np.ndarray:
    """Embed one point (1-D input) or a batch of rows (2-D input)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = np.atleast_2d(x)
    if Xq.shape[1] != model.X.shape[1]:
        raise ValueError(
            f"query dimension {Xq.shape[1]} != training dimension {model.X.shape[1]}"
        )
    out = rbf_cross_kernel(Xq, model.X, model.sigma) @ model.C
    return out[0] if single else out


def lipschitz_constant(n: int, sigma: float, C) -> float:
    """``sqrt(2) e^{-1/2} sqrt(n) / sigma * ||C||_F`` for an n-centre Gaussian interpolator."""
    if not sigma > 0:
        raise ValueError("kernel scale sigma must be positive")
    return LIPSCHITZ_FACTOR * math.sqrt(n) / sigma * float(np.linalg.norm(C))
