"""Command-line front end.

Subcommands: ``gen``, ``split``, ``train``, ``eval classify``, ``eval retrieve``,
``validate`` and ``dump-matrices``. Exit status is 0 on success, 1 on invalid
input or configuration, 2 on numerical failure or a violated bound.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundsError, monte_carlo_validate
from .dataset import DatasetError, SynthConfig, generate_synthetic, load_dataset_dir, save_dataset, split
from .evaluation import evaluate_retrieval, misclassification_rate
from .graphs import build_laplacians
from .kernel import MIN_RCOND, factor_kernel, rbf_kernel_matrix
from .optimizer import HyperParams, build_A, inverse_squared_kernel, reference_scale, train
from .serialize import (
    ConfigError,
    atomic_write,
    dumps,
    load_model,
    read_config,
    save_model,
    validate_document,
)

SYNTH_FILE = "synth.cfg"
HP_KEYS = ("mu1", "mu2", "mu3", "mu4", "mu5", "dim", "grid_count", "grid_min", "grid_max",
           "max_iters", "tol")


class UsageError(Exception):
    pass


class BoundViolation(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config plumbing


def _config(args) -> dict:
    return read_config(args.config) if getattr(args, "config", None) else {}


def _hyperparams(args, cfg: dict) -> HyperParams:
    kw = {k: cfg[k] for k in HP_KEYS if k in cfg}
    for k in HP_KEYS:
        value = getattr(args, k, None)
        if value is not None:
            kw[k] = value
    try:
        return HyperParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _synth_config(cfg: dict) -> SynthConfig:
    kw = {}
    mapping = {"classes": "num_classes", "modalities": "num_modalities", "per_class": "per_class",
               "separation": "separation", "noise": "noise", "warp": "warp",
               "cross_noise": "cross_noise", "seed": "seed"}
    for src, dst in mapping.items():
        if cfg.get(src) is not None:
            kw[dst] = cfg[src]
    V = kw.get("num_modalities", 2)
    dims = cfg.get("dims")
    if dims is not None:
        if isinstance(dims, str):
            dims = [int(t) for t in dims.replace(",", " ").split()]
        kw["dims"] = tuple(dims) if len(dims) > 1 else tuple(dims) * V
    else:
        kw["dims"] = (2,) * V
    try:
        return SynthConfig(**kw)
    except (DatasetError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _synth_to_text(sc: SynthConfig) -> str:
    return (
        f"classes = {sc.num_classes}\nmodalities = {sc.num_modalities}\n"
        f"per_class = {sc.per_class}\ndims = {','.join(map(str, sc.dims))}\n"
        f"separation = {sc.separation!r}\nnoise = {sc.noise!r}\nwarp = {sc.warp}\n"
        f"cross_noise = {sc.cross_noise!r}\nseed = {sc.seed}\n"
    )


def _emit(doc: dict, kind: str, out):
    doc = {**doc, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    validate_document(doc, kind)
    text = dumps(doc)
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _threads():
    raw = os.environ.get("MNSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MNSE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("MNSE_THREADS must be >= 0")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _config(args)
    for key in ("seed", "classes", "per_class", "modalities", "dims", "separation", "noise",
                "warp", "cross_noise"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    sc = _synth_config(cfg)
    ds = generate_synthetic(sc)
    save_dataset(ds, args.out)
    atomic_write(Path(args.out) / SYNTH_FILE, _synth_to_text(sc))
    return 0


def cmd_split(args) -> int:
    ds = load_dataset_dir(args.data)
    tr, te = split(ds, args.fraction, args.seed)
    out = Path(args.out)
    save_dataset(tr, out / "train")
    save_dataset(te, out / "test")
    return 0


def cmd_train(args) -> int:
    hp = _hyperparams(args, _config(args))
    ds = load_dataset_dir(args.data)
    model = train(ds, hp)
    save_model(model, args.model)
    return 0


def cmd_eval_classify(args) -> int:
    model = load_model(args.model)
    test = load_dataset_dir(args.test)
    rates = misclassification_rate(model, test, args.mode)
    counts = [int(n) for n in test.sizes]
    _emit({"report": "classify", "mode": args.mode, "misclassification_percent": rates,
           "counts": counts, "num_modalities": model.num_modalities}, "classify", args.out)
    return 0


def cmd_eval_retrieve(args) -> int:
    model = load_model(args.model)
    test = load_dataset_dir(args.test)
    V = model.num_modalities
    pairs = [(v, u) for v in range(V) for u in range(V) if v != u]
    if args.direction:
        try:
            v, u = (int(t) for t in args.direction.split("->"))
        except ValueError:
            raise ConfigError("--direction must look like '0->1'") from None
        pairs = [(v, u)]
    directions = [evaluate_retrieval(model, test, v, u, args.k, args.metric) for v, u in pairs]
    _emit({"report": "retrieve", "metric": args.metric, "k": args.k,
           "directions": directions}, "retrieve", args.out)
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    synth_path = Path(args.data) / SYNTH_FILE
    if not synth_path.exists():
        raise ConfigError(f"{args.data}: no {SYNTH_FILE}; validate needs a generated dataset")
    sc = _synth_config(read_config(synth_path))
    hp = _hyperparams(args, cfg)
    trials = args.trials or cfg.get("trials", 1000)
    k = args.k if args.k is not None else cfg.get("k")
    report = monte_carlo_validate(sc, hp, trials=trials, K=k, test_seed=args.seed,
                                  pool_size=cfg.get("pool_size", 0))
    doc = {"report": "bounds", **report.to_dict()}
    _emit(doc, "bounds", args.out)
    if report.empirical.get("status") == "violated":
        raise BoundViolation("empirical correct-classification rate fell below a nonvacuous floor")
    return 0


def cmd_dump(args) -> int:
    hp = _hyperparams(args, _config(args))
    ds = load_dataset_dir(args.data)
    lap = build_laplacians(ds, hp.thetas)
    sigmas = hp.sigma_init or [reference_scale(X) for X in ds.features]
    factors = [factor_kernel(rbf_kernel_matrix(X, s), hp.jitter_ladder, MIN_RCOND)
               for X, s in zip(ds.features, sigmas)]
    K = inverse_squared_kernel(factors)
    mats = {"L_within": lap.within, "L_between": lap.between,
            "L_cross_within": lap.cross_within, "L_cross_between": lap.cross_between,
            "Psi_inv_sq": K, "A": build_A(lap, K, hp)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, M in mats.items():
        rows = "".join(",".join(format(x, ".17g") for x in row) + "\n" for row in M)
        atomic_write(out / f"{name}.csv", rows)
    atomic_write(out / "stacked_ids.csv",
                 "".join(f"{v},{i}\n" for v, i in lap.stacked_ids))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_hp_flags(p):
    for i in range(1, 6):
        p.add_argument(f"--mu{i}", type=float, dest=f"mu{i}")
    p.add_argument("--dim", type=int)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mnse", description="Multi-modal nonlinear supervised embeddings.")
    p.add_argument("--version", action="version", version=f"mnse {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--classes", type=int)
    g.add_argument("--per-class", type=int, dest="per_class")
    g.add_argument("--modalities", type=int)
    g.add_argument("--dims", type=str)
    g.add_argument("--separation", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--warp", choices=["identity", "affine", "cubic"])
    g.add_argument("--cross-noise", type=float, dest="cross_noise")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("split", help="stratified train/test split")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--fraction", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="learn an embedding")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--model", required=True)
    _add_hp_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained model")
    esub = e.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    ec = esub.add_parser("classify")
    ec.add_argument("--model", required=True)
    ec.add_argument("--test", required=True)
    ec.add_argument("--mode", choices=["all", "own"], default="all")
    ec.add_argument("--out")
    ec.set_defaults(func=cmd_eval_classify)
    er = esub.add_parser("retrieve")
    er.add_argument("--model", required=True)
    er.add_argument("--test", required=True)
    er.add_argument("--k", type=int, default=10)
    er.add_argument("--metric", choices=["euclidean", "cosine"], default="cosine")
    er.add_argument("--direction")
    er.add_argument("--out")
    er.set_defaults(func=cmd_eval_retrieve)

    v = sub.add_parser("validate", help="Monte Carlo check of the generalisation floors")
    v.add_argument("--data", required=True)
    v.add_argument("--config")
    v.add_argument("--trials", type=int)
    v.add_argument("--k", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    _add_hp_flags(v)
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("dump-matrices", help="export Laplacians and A at the initial scales")
    d.add_argument("--data", required=True)
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    _add_hp_flags(d)
    d.set_defaults(func=cmd_dump)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with _threads():
            return args.func(args)
    except (UsageError, ConfigError, DatasetError, BoundsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, BoundViolation, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
