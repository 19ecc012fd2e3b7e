"""
Cross-modal retrieval and mean average precision
================================================

Queries from modality 0 rank the training items of modality 1 by distance
in the shared space. Ranking quality is summarised by MAP and by
precision and recall at each depth.
"""

from mnse import HyperParams, SynthConfig, generate_synthetic, split, train
from mnse.evaluation import evaluate_retrieval, retrieve

cfg = SynthConfig(num_classes=4, per_class=25, dims=(3, 6), warp="affine", noise=1.5, seed=3)
train_set, test_set = split(generate_synthetic(cfg), 0.6, seed=0)

###############################################################################
# The retrieval preset weights smoothness more heavily than the
# classification preset.

model = train(train_set, HyperParams.retrieval())

###############################################################################
# A single query: the five nearest modality-1 items under cosine similarity.

hit = retrieve(model, test_set.features[0][0], v=0, u=1, K=5, metric="cosine")
print("query class", int(test_set.labels_of(0)[0]))
print("retrieved ids", hit.ids.tolist())
print("their classes", [train_set.labels[int(i)] for i in hit.ids])

###############################################################################
# Whole test set, both directions.

for v, u in ((0, 1), (1, 0)):
    rep = evaluate_retrieval(model, test_set, v, u, K=10, metric="cosine")
    print(rep["direction"], "MAP %.4f" % rep["map"],
          "P@10 %.3f" % rep["precision_at_k"][9], "R@10 %.3f" % rep["recall_at_k"][9])
