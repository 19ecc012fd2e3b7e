"""
Auditing the generalisation floors
==================================

The audit measures the geometry of a trained embedding (cross-view
alignment, within-class compactness, class margin, ball masses) and
searches for the largest probability floor on correct classification.
Monte Carlo draws then check that floor.
"""

from mnse import HyperParams, SynthConfig
from mnse.bounds import audit, monte_carlo_validate, retrieval_guarantee

###############################################################################
# With unit noise the classes are separable but the interpolators are too
# steep for the separation condition to hold anywhere: the floor is 0.

loose = SynthConfig(num_classes=3, per_class=20, noise=1.0, seed=7)
rep = monte_carlo_validate(loose, HyperParams(), trials=500)
print("noise 1.0: floor", rep.classification_floor, "|", rep.note)
print("           empirical correct rate", rep.empirical["correct_rate"])

###############################################################################
# Tight blobs and a heavy smoothness weight shrink the Lipschitz constant
# and the within-class spread, and the floor becomes informative.

tight = SynthConfig(num_classes=3, per_class=20, noise=0.01, seed=7)
rep = monte_carlo_validate(tight, HyperParams(mu2=1.0, mu3=1.0), trials=1000)
g = rep.geometry
print("noise 0.01: floor %.12f" % rep.classification_floor)
print("  eta=%.3g R=%.3g gamma=%.3g L=%.3g delta=%.3g eps=%.3g Q=%d"
      % (g.eta, g.R_delta, g.gamma, g.L, g.delta, g.eps, g.Q))
print("  condition slack", rep.slack)
print("  empirical", rep.empirical["status"], rep.empirical["correct_rate_per_class"])
print("  retrieval at K=%d: precision floor %s, measured min %s"
      % (rep.empirical["retrieval_k"], rep.precision_floor, rep.empirical["precision_min"]))

###############################################################################
# The retrieval floors on their own.

for K in (5, 10, 20):
    print("K=%2d Q=10 N=100 ->" % K, retrieval_guarantee(K, 10, 100))

###############################################################################
# ``audit`` can be called directly on any trained model, with custom grids.

from mnse import generate_synthetic, train  # noqa: E402

model = train(generate_synthetic(tight), HyperParams(mu2=1.0, mu3=1.0))
print(audit(model, Qs=[1, 3]).classification_floor)
