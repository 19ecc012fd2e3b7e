"""
Nearest-neighbour classification in a learnt shared space
=========================================================

Two noisy views of three Gaussian blobs are embedded jointly. New
observations from either view are pushed through that view's RBF
interpolator and labelled by their nearest training embedding.
"""

import numpy as np

from mnse import HyperParams, SynthConfig, generate_synthetic, split, train
from mnse.evaluation import classify, misclassification_rate

###############################################################################
# Data: three classes seen in two modalities. The second view is a cubic
# warp of an independent draw, so the views do not share coordinates.

cfg = SynthConfig(num_classes=3, per_class=30, noise=1.0, warp="cubic", seed=7)
ds = generate_synthetic(cfg)
train_set, test_set = split(ds, 0.5, seed=1)
print("train sizes per modality:", train_set.sizes)

###############################################################################
# Fit. ``HyperParams.classification()`` holds the weights used for
# classification; the embedding dimension defaults to classes - 1.

model = train(train_set, HyperParams.classification())
print("objective trace:", [round(v, 3) for v in model.trace.values()])
print("kernel scales:", model.sigmas)

###############################################################################
# Error rates. ``all`` searches every modality's training embeddings,
# ``own`` only the query's modality.

for mode in ("all", "own"):
    print(mode, "misclassification %:", misclassification_rate(model, test_set, mode))

###############################################################################
# One observation at a time.

x = test_set.features[1][0]
truth = test_set.labels_of(1)[0]
print("predicted", classify(model, x, v=1), "true", int(truth))
print("embedding:", np.round(model.embed(x, 1), 4))
