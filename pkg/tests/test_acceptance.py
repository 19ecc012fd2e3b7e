"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when this file is run as a script.
"""

import json
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES, SEED7, TIGHT
from mnse.bounds import (
    audit,
    estimate_alignment,
    estimate_ball_measure,
    estimate_compactness,
    estimate_separation,
)
from mnse.cli import run
from mnse.dataset import MultiModalDataset, SynthConfig, draw_samples, generate_synthetic
from mnse.evaluation import (
    average_precision,
    map_score,
    misclassification_rate,
    precision_recall,
    rank_candidates,
)
from mnse.graphs import build_laplacians, laplacian
from mnse.kernel import InterpolatorModel, factor_kernel, rbf_kernel_matrix
from mnse.optimizer import (
    HyperParams,
    build_A,
    inverse_squared_kernel,
    objective,
    reference_scale,
    sigma_grid,
    solve_embedding,
    train,
)


def verdict(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_objective_monotone():
    ds = generate_synthetic(SEED7)
    t0 = time.perf_counter()
    model = train(ds, HyperParams())
    dt = time.perf_counter() - t0
    vals = model.trace.values()
    worst = max((b - a for a, b in zip(vals, vals[1:])), default=0.0)
    ok = model.trace.is_monotone(1e-9) and worst <= 1e-9 and dt < 10
    verdict(1, "objective monotone", ok,
            f"{len(vals)} values, max rise {worst:.3g} (<= 1e-9), {dt:.2f}s (< 10s)")


def test_02_orthonormality(seed7_model, tight_model):
    models = [seed7_model, tight_model,
              train(generate_synthetic(SynthConfig(num_classes=4, num_modalities=3,
                                                   per_class=8, dims=(3,), seed=2)),
                    HyperParams.retrieval())]
    errs = [e.orthonormality_error for m in models for e in m.trace.entries]
    verdict(2, "orthonormality after each Y-step", max(errs) < 1e-8,
            f"max |Y'Y - I|_F = {max(errs):.3g} over {len(errs)} steps (< 1e-8)")


def test_03_trace_identity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 31))
        W = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
        W = W + W.T
        Z = rng.normal(size=(n, int(rng.integers(1, 5))))
        brute = oracles.pairwise_trace(W, Z)
        got = float(np.trace(Z.T @ laplacian(W) @ Z))
        worst = max(worst, abs(got - brute) / max(abs(brute), 1e-300))
    verdict(3, "Laplacian trace identity", worst <= 1e-9,
            f"max relative gap {worst:.3g} on 100 instances (<= 1e-9)")


def test_04_six_term_objective():
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(20):
        cfg = SynthConfig(num_classes=int(rng.integers(2, 4)), per_class=int(rng.integers(2, 5)),
                          noise=float(rng.uniform(0.5, 2.0)), warp=["identity", "cubic"][k % 2],
                          seed=100 + k)
        ds = generate_synthetic(cfg)
        lap = build_laplacians(ds)
        sig = [float(s) for s in rng.uniform(0.5, 3.0, size=2)]
        F = [factor_kernel(rbf_kernel_matrix(ds.features[v], sig[v])) for v in range(2)]
        mu = tuple(float(m) for m in rng.uniform(0, 5, size=5))
        d = int(rng.integers(1, 4))
        Y, _ = np.linalg.qr(rng.normal(size=(lap.n, d)))
        got = objective(Y, lap, inverse_squared_kernel(F), sig, mu)
        want = oracles.six_term_objective(ds, Y, sig, lap.thetas, mu, [f.jitter for f in F])
        worst = max(worst, abs(got - want) / abs(want))
    verdict(4, "six-term objective equals trace form", worst <= 1e-8,
            f"max relative gap {worst:.3g} on 20 instances (<= 1e-8)")


def test_05_interpolation_exactness(seed7, seed7_model, tight, tight_model):
    errs = []
    for ds, model in ((seed7, seed7_model), (tight, tight_model)):
        for v, f in enumerate(model.interpolators):
            if f.jitter <= 1e-8:
                errs.append(float(np.max(np.linalg.norm(f(ds.features[v]) - f.Y, axis=1))))
            # refit across the whole sigma grid; only rungs at or below 1e-8 count
            for s in sigma_grid(reference_scale(ds.features[v]), model.hyperparams):
                g = InterpolatorModel.fit(ds.features[v], f.Y, s)
                if g.jitter <= 1e-8:
                    errs.append(float(np.max(np.linalg.norm(g(ds.features[v]) - g.Y, axis=1))))
    ok = bool(errs) and max(errs) < 1e-6
    verdict(5, "interpolation exactness", ok,
            f"max |f(x_i) - y_i| = {max(errs):.3g} over {len(errs)} fits with lambda <= 1e-8 (< 1e-6)")


def test_06_lipschitz(seed7_model, tight_model):
    rng = np.random.default_rng(6)
    violations = checked = 0
    for model in (seed7_model, tight_model):
        for f in model.interpolators:
            X = f.X
            lo, hi = X.min(axis=0) - 2, X.max(axis=0) + 2
            n = 10_000
            a = np.where(rng.random((n, 1)) < 0.5, X[rng.integers(0, len(X), n)]
                         + rng.normal(scale=0.3, size=(n, X.shape[1])),
                         rng.uniform(lo, hi, size=(n, X.shape[1])))
            scale = rng.choice([1e-4, 1e-2, 0.3, 3.0], size=(n, 1))
            b = a + scale * rng.normal(size=a.shape)
            lhs = np.linalg.norm(f(a) - f(b), axis=1)
            rhs = f.lipschitz * np.linalg.norm(a - b, axis=1) + 1e-9
            violations += int(np.sum(lhs > rhs))
            checked += n
    verdict(6, "Lipschitz bound", violations == 0,
            f"{violations} violations in {checked} pairs (10^4 per modality)")


def test_07_eigen_optimality():
    rng = np.random.default_rng(7)
    instances = []
    for n in (6, 17, 40):
        B = rng.normal(size=(n, n))
        instances.append(B + B.T)
    ds = generate_synthetic(SynthConfig(per_class=6, seed=7))
    lap = build_laplacians(ds)
    F = [factor_kernel(rbf_kernel_matrix(X, reference_scale(X))) for X in ds.features]
    instances.append(build_A(lap, inverse_squared_kernel(F), HyperParams()))
    worst = -np.inf
    for A in instances:
        n = A.shape[0]
        for d in (1, 2, 3):
            Y = solve_embedding(A, d).Y
            best = np.trace(Y.T @ A @ Y)
            for _ in range(100):
                Z, _ = np.linalg.qr(rng.normal(size=(n, d)))
                worst = max(worst, best - np.trace(Z.T @ A @ Z))
    verdict(7, "eigen-optimality", worst <= 1e-10,
            f"max tr(Y'AY) - tr(Z'AZ) = {worst:.3g} over {len(instances) * 300} draws (<= 1e-10)")


def test_08_metric_oracles():
    rng = np.random.default_rng(8)
    worst = 0.0
    rows, totals = [], []
    for _ in range(50):
        k = int(rng.integers(1, 40))
        flags = list(rng.random(k) < rng.uniform(0.1, 0.9))
        total = sum(flags) + int(rng.integers(1 if not any(flags) else 0, 5))
        ids = list(range(k))
        rel = {i for i in ids if flags[i]}
        P, R = precision_recall(ids, rel, total)
        bP, bR = oracles.precision_recall(flags, total)
        ap, bap = average_precision(flags, total), oracles.average_precision(flags, total)
        worst = max(worst, abs(P - bP), abs(R - bR), abs(ap - bap))
        rows.append(flags)
        totals.append(total)
    worst = max(worst, abs(map_score(rows, totals) - oracles.mean_average_precision(rows, totals)))
    five_sixths = average_precision([1, 0, 1], 2)
    ok = worst <= 1e-12 and abs(five_sixths - 5 / 6) <= 1e-12
    verdict(8, "metric oracles", ok,
            f"max gap {worst:.3g} on 50 rankings (<= 1e-12); AP[1,0,1] = {five_sixths:.12f}")


@pytest.mark.parametrize("cfg", [SEED7, TIGHT], ids=["noise1", "noise0.01"])
def test_09_synthetic_classification(cfg):
    t0 = time.perf_counter()
    model = train(generate_synthetic(cfg), HyperParams.classification())
    test = draw_samples(cfg, 200, np.random.default_rng([cfg.seed, 9]), first_id=10_000)
    rates = {mode: misclassification_rate(model, test, mode) for mode in ("all", "own")}
    dt = time.perf_counter() - t0
    ok = all(r == 0.0 for rs in rates.values() for r in rs) and dt < 30
    verdict(9, f"synthetic classification (separation 10, noise {cfg.noise:g})", ok,
            f"error % all={rates['all']} own={rates['own']} on {test.sizes[0]} draws/modality, "
            f"{dt:.2f}s (< 30s)")


def test_10_retrieval_precision_regime(tight):
    model = train(tight, HyperParams.classification())
    rep = audit(model)
    Q = rep.geometry.Q if not rep.vacuous else 0
    worst = 1.0
    Z = model.embed(tight.features[0], 0)
    lab = tight.labels_of(0)
    Yu, ids, tlab = model.blocks[1], model.sample_ids[1], model.labels[1]
    for K in range(1, Q + 1):
        for z, c in zip(Z, lab):
            order, _ = rank_candidates(z, Yu, ids, "euclidean")
            worst = min(worst, float(np.mean(tlab[order[:K]] == c)))
    ok = Q >= 1 and len(Z) == 60 and worst == 1.0
    verdict(10, "precision 1 for K <= audited Q", ok,
            f"audited Q = {Q}, floor {rep.classification_floor:.10g}; min precision {worst} "
            f"over 60 queries and K = 1..{Q}")


def test_11_monte_carlo(tmp_path):
    lines = []
    ok = True
    nonvacuous = 0
    cases = [("constructed", ["--noise", "0.01"], "mu2 = 1\nmu3 = 1\n"),
             ("default weights", ["--noise", "0.01"], ""),
             ("noise 1", ["--noise", "1"], "")]
    for name, flags, cfg_text in cases:
        d = tmp_path / name.replace(" ", "_")
        assert run(["gen", "--seed", "7", "--classes", "3", "--per-class", "20",
                    "--out", str(d / "ds")] + flags) == 0
        (d / "mnse.cfg").write_text(cfg_text)
        code = run(["validate", "--data", str(d / "ds"), "--config", str(d / "mnse.cfg"),
                    "--trials", "1000", "--seed", "11", "--out", str(d / "b.json")])
        doc = json.loads((d / "b.json").read_text())
        emp = doc["empirical"]
        floors = doc["class_floors"]
        slack = [3 * np.sqrt(f * (1 - f) / emp["trials"]) for f in floors]
        good = all(r >= f - s for r, f, s in zip(emp["correct_rate_per_class"], floors, slack)
                   if f > 0)
        ok &= code == 0 and good and emp["trials"] >= 1000
        nonvacuous += not doc["vacuous"]
        lines.append(f"{name}: floor {doc['classification_floor']:.10g} "
                     f"({'vacuous' if doc['vacuous'] else 'nonvacuous'}), "
                     f"min class rate {min(emp['correct_rate_per_class']):.4f}")
    ok &= nonvacuous >= 1
    verdict(11, "Monte Carlo floor check (1000 trials)", ok, "; ".join(lines))


def _instance(rng, n):
    ids = np.arange(n)
    V = 2
    keep = [ids, ids[rng.random(n) < 0.8]]
    labels = {int(i): int(rng.integers(0, 3)) for i in ids}
    feats = [rng.normal(size=(len(k), 2)) for k in keep]
    blocks = [rng.normal(size=(len(k), 2)) for k in keep]
    return MultiModalDataset(tuple(feats), tuple(keep), labels, 3), blocks


def test_12_estimator_exactness(tight, tight_model):
    rng = np.random.default_rng(12)
    cases = [_instance(rng, int(rng.integers(5, 26))) for _ in range(30)]
    sub = tight.subset(range(0, 60, 3))
    cases.append((sub, [tight_model.embed(sub.features[v], v) for v in range(2)]))
    mismatches = checks = 0
    for ds, blocks in cases:
        if len(set(int(c) for v in range(2) for c in ds.labels_of(v))) < 2:
            continue
        pairs = [(estimate_alignment(blocks, ds), oracles.alignment(blocks, ds)),
                 (estimate_separation(blocks, ds), oracles.separation(blocks, ds))]
        for delta in (0.05, 0.3, 1.0, 3.0):
            pairs.append((estimate_compactness(blocks, ds, delta),
                          oracles.compactness(blocks, ds, delta)))
            for m in range(ds.num_classes):
                if any(np.any(ds.labels_of(v) == m) for v in range(2)):
                    pairs.append((estimate_ball_measure(ds, m, delta),
                                  oracles.ball_measure(ds, m, delta)))
        mismatches += sum(a != b for a, b in pairs)
        checks += len(pairs)
    verdict(12, "estimator exactness", mismatches == 0,
            f"{mismatches} mismatches in {checks} exact comparisons (instances <= 50 samples)")


def test_13_determinism(tmp_path):
    assert run(["gen", "--seed", "7", "--classes", "3", "--per-class", "20",
                "--out", str(tmp_path / "ds")]) == 0
    assert run(["split", "--data", str(tmp_path / "ds"), "--out", str(tmp_path / "sp"),
                "--seed", "5"]) == 0
    blobs = []
    for tag in ("a", "b"):
        m = tmp_path / f"{tag}.json"
        assert run(["train", "--data", str(tmp_path / "sp" / "train"), "--model", str(m)]) == 0
        parts = [m.read_bytes()]
        for sub in (["classify"], ["retrieve", "--k", "5"]):
            out = tmp_path / f"{tag}_{sub[0]}.json"
            assert run(["eval", *sub, "--model", str(m), "--test", str(tmp_path / "sp" / "test"),
                        "--out", str(out)]) == 0
            doc = json.loads(out.read_text())
            doc.pop("timestamp")
            parts.append(json.dumps(doc, sort_keys=True).encode())
        blobs.append(parts)
    verdict(13, "determinism", blobs[0] == blobs[1],
            "model and reports byte-identical across two runs (timestamp excluded)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
