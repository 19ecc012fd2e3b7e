"""
The RBF interpolator and its Lipschitz constant
===============================================

Each modality's embedding is extended to unseen inputs by Gaussian RBF
interpolation. The closed-form Lipschitz constant is checked against
finite differences.
"""

import numpy as np

from mnse.kernel import InterpolatorModel, rbf_kernel_matrix

rng = np.random.default_rng(0)
X = rng.normal(size=(15, 2))
Y = rng.normal(size=(15, 2))

for sigma in (0.3, 1.0, 3.0):
    f = InterpolatorModel.fit(X, Y, sigma)
    cond = np.linalg.cond(rbf_kernel_matrix(X, sigma))
    a = rng.normal(scale=2, size=(5000, 2))
    b = a + rng.normal(scale=1e-3, size=a.shape)
    slopes = np.linalg.norm(f(a) - f(b), axis=1) / np.linalg.norm(a - b, axis=1)
    print("sigma %.1f  cond %.2e  jitter %g  fit error %.1e  L %.3f  max slope %.3f"
          % (sigma, cond, f.jitter, np.abs(f(X) - Y).max(), f.lipschitz, slopes.max()))

###############################################################################
# Duplicate inputs make the kernel singular; the fit climbs the jitter
# ladder and reports the jitter it used.

Xd = np.vstack([X, X[:1]])
Yd = np.vstack([Y, Y[:1]])
print("duplicate point -> jitter", InterpolatorModel.fit(Xd, Yd, 1.0).jitter)
