"""Multi-modal labelled datasets: containers, text loaders, synthetic generator, splits.

Observations of one sample in different modalities are tied together by a
global integer sample ID, so a sample may be missing from any modality
without sentinel rows.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DatasetError",
    "MultiModalDataset",
    "SynthConfig",
    "WARPS",
    "load_dataset",
    "load_dataset_dir",
    "save_dataset",
    "generate_synthetic",
    "draw_samples",
    "split",
]

WARPS = ("identity", "affine", "cubic")

# Truncation radius of the synthetic blobs, in units of the noise scale.
TRUNCATION = 4.0


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiModalDataset:
    """Per-modality feature matrices aligned to global sample IDs.

    Parameters
    ----------
    features : sequence of (N_v, n_v) arrays
        Row ``i`` of ``features[v]`` is the observation of sample
        ``sample_ids[v][i]`` in modality ``v``.
    sample_ids : sequence of (N_v,) integer arrays
    labels : dict
        Global sample ID -> class index in ``0..num_classes-1``.
    num_classes : int, optional
        Defaults to ``max(label) + 1``.
    """

    features: tuple
    sample_ids: tuple
    labels: dict
    num_classes: int = 0
    _label_rows: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        feats = tuple(_frozen(np.asarray(X, dtype=float)) for X in self.features)
        ids = tuple(_frozen(np.asarray(i, dtype=np.int64).reshape(-1)) for i in self.sample_ids)
        labels = {int(k): int(c) for k, c in self.labels.items()}
        if not feats:
            raise DatasetError("dataset needs at least one modality")
        if len(feats) != len(ids):
            raise DatasetError("features and sample_ids must have one entry per modality")
        M = self.num_classes or (max(labels.values()) + 1 if labels else 1)
        for v, (X, I) in enumerate(zip(feats, ids)):
            if X.ndim != 2:
                raise DatasetError(f"modality {v}: features must be a 2-D matrix")
            if X.shape[0] != I.shape[0]:
                raise DatasetError(
                    f"modality {v}: {X.shape[0]} feature rows but {I.shape[0]} sample IDs"
                )
            if not np.all(np.isfinite(X)):
                raise DatasetError(f"modality {v}: non-finite feature entries")
            if np.unique(I).size != I.size:
                raise DatasetError(f"modality {v}: duplicate sample IDs")
            missing = [int(i) for i in I if int(i) not in labels]
            if missing:
                raise DatasetError(f"modality {v}: missing label for sample {missing[0]}")
        if any(c < 0 or c >= M for c in labels.values()):
            raise DatasetError(f"class indices must lie in 0..{M - 1}")
        rows = tuple(_frozen(np.array([labels[int(i)] for i in I], dtype=np.int64)) for I in ids)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(M))
        object.__setattr__(self, "_label_rows", rows)

    @property
    def num_modalities(self) -> int:
        return len(self.features)

    @property
    def sizes(self) -> tuple:
        """Observation counts N_v per modality."""
        return tuple(X.shape[0] for X in self.features)

    @property
    def dims(self) -> tuple:
        return tuple(X.shape[1] for X in self.features)

    def labels_of(self, v: int) -> np.ndarray:
        """Class labels aligned with the rows of modality ``v``."""
        return self._label_rows[v]

    def all_ids(self) -> np.ndarray:
        """Sorted union of sample IDs over all modalities."""
        return np.unique(np.concatenate(self.sample_ids))

    def row_index(self, v: int) -> dict:
        return {int(i): r for r, i in enumerate(self.sample_ids[v])}

    def subset(self, ids) -> "MultiModalDataset":
        """Restrict every modality to the given sample IDs (row order kept)."""
        keep = set(int(i) for i in ids)
        feats, sids = [], []
        for X, I in zip(self.features, self.sample_ids):
            mask = np.array([int(i) in keep for i in I], dtype=bool)
            feats.append(X[mask])
            sids.append(I[mask])
        labels = {i: c for i, c in self.labels.items() if i in keep}
        return MultiModalDataset(tuple(feats), tuple(sids), labels, self.num_classes)


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for Gaussian-blob multi-modal data.

    ``dims[0]`` is the ambient dimension of modality 0; the other modalities
    are warps of fresh modality-0-style draws. ``identity`` and ``cubic``
    warps keep the dimension, ``affine`` may change it.
    """

    num_classes: int = 3
    num_modalities: int = 2
    per_class: int = 20
    dims: tuple = (2, 2)
    separation: float = 10.0
    noise: float = 1.0
    warp: str = "identity"
    cross_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) == 1:
            dims = dims * int(self.num_modalities)
        object.__setattr__(self, "dims", dims)
        for name in ("num_classes", "num_modalities", "per_class"):
            if int(getattr(self, name)) < 1:
                raise DatasetError(f"{name} must be >= 1")
        if len(dims) != self.num_modalities or min(dims) < 1:
            raise DatasetError("dims needs one positive entry per modality")
        for name in ("separation", "noise", "cross_noise"):
            if not (getattr(self, name) >= 0 and math.isfinite(getattr(self, name))):
                raise DatasetError(f"{name} must be finite and >= 0")
        if self.warp not in WARPS:
            raise DatasetError(f"warp must be one of {WARPS}")
        if self.warp != "affine" and len(set(dims)) != 1:
            raise DatasetError(f"{self.warp} warp requires equal dims in every modality")


def _class_centers(cfg: SynthConfig) -> np.ndarray:
    n, M = cfg.dims[0], cfg.num_classes
    C = np.zeros((M, n))
    if n >= M:
        # scaled simplex corners: every pair exactly `separation` apart
        C[np.arange(M), np.arange(M)] = cfg.separation / math.sqrt(2.0)
    else:
        C[:, 0] = cfg.separation * np.arange(M)
    return C


def _truncated_normal(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > TRUNCATION
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > TRUNCATION
    return z


def _warp_maps(cfg: SynthConfig):
    """Fixed per-modality maps, derived from the seed only."""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    n0 = cfg.dims[0]
    maps = [None]
    for v in range(1, cfg.num_modalities):
        nv = cfg.dims[v]
        if cfg.warp == "identity":
            maps.append(lambda X: X)
        elif cfg.warp == "cubic":
            maps.append(lambda X: X + 0.1 * X**3)
        else:
            G = rng.standard_normal((max(n0, nv), max(n0, nv)))
            Qm, _ = np.linalg.qr(G)
            A = Qm[:n0, :nv]
            b = rng.standard_normal(nv)
            maps.append(lambda X, A=A, b=b: X @ A + b)
    return maps


def draw_samples(cfg: SynthConfig, per_class: int, rng: np.random.Generator,
                 first_id: int = 0) -> MultiModalDataset:
    """Draw ``per_class`` fresh samples of every class, observed in all modalities.

    Each modality is an independent draw from the class measure, so samples
    sharing an ID are not tied beyond their class.
    """
    centers = _class_centers(cfg)
    maps = _warp_maps(cfg)
    M, n0 = cfg.num_classes, cfg.dims[0]
    y = np.repeat(np.arange(M), per_class)
    ids = first_id + np.arange(y.size)
    feats = []
    for v in range(cfg.num_modalities):
        X = centers[y] + cfg.noise * _truncated_normal(rng, (y.size, n0))
        if v > 0:
            X = maps[v](X)
            X = X + cfg.cross_noise * _truncated_normal(rng, X.shape)
        feats.append(X)
    labels = {int(i): int(c) for i, c in zip(ids, y)}
    return MultiModalDataset(tuple(feats), tuple(ids for _ in feats), labels, M)


def generate_synthetic(cfg: SynthConfig) -> MultiModalDataset:
    """Deterministic synthetic dataset; a pure function of ``cfg`` (PCG64 stream)."""
    return draw_samples(cfg, cfg.per_class, np.random.default_rng(cfg.seed))


def split(ds: MultiModalDataset, train_fraction: float, seed: int = 0):
    """Stratified split on global sample IDs.

    Each class's sorted ID list is permuted with a PCG64 generator seeded by
    ``seed``; the first ``round(f * n_c)`` IDs (clamped to ``1..n_c-1``) go
    to the training side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must lie in the open interval (0, 1)")
    rng = np.random.default_rng(seed)
    ids = ds.all_ids()
    cls = np.array([ds.labels[int(i)] for i in ids])
    train_ids = []
    for m in range(ds.num_classes):
        members = ids[cls == m]
        if members.size == 0:
            continue
        if members.size < 2:
            raise DatasetError(f"class {m} has fewer than 2 samples")
        perm = rng.permutation(members)
        k = min(max(int(round(train_fraction * members.size)), 1), members.size - 1)
        train_ids.extend(int(i) for i in perm[:k])
    train_set = set(train_ids)
    test_ids = [int(i) for i in ids if int(i) not in train_set]
    return ds.subset(train_set), ds.subset(test_ids)


# ---------------------------------------------------------------------------
# delimited-text files


def _parse_lines(path, parse, what):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse(line))
            except (ValueError, DatasetError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad {what}: {exc}") from None
    return out


def _feature_row(line):
    row = [float(t) for t in line.split(",")]
    if not all(math.isfinite(x) for x in row):
        raise DatasetError("non-finite value")
    return row


def _id_row(line):
    i = int(line)
    if i < 0:
        raise DatasetError("negative sample ID")
    return i


def _label_row(line):
    a, b = line.split(",")
    return int(a), int(b)


def load_dataset(feature_paths: Sequence, id_paths: Sequence, label_path,
                 num_classes: int = 0) -> MultiModalDataset:
    """Read features (CSV rows), sample IDs (one per line) and ``id,class`` labels."""
    if len(feature_paths) != len(id_paths):
        raise DatasetError("need one ID file per feature file")
    labels = {}
    label_lines = _parse_lines(label_path, _label_row, "label line")
    for sid, c in label_lines:
        if c < 0:
            raise DatasetError(f"{label_path}: negative class index for sample {sid}")
        labels[sid] = c
    feats, ids = [], []
    for fp, ip in zip(feature_paths, id_paths):
        rows = _parse_lines(fp, _feature_row, "feature row")
        I = _parse_lines(ip, _id_row, "sample ID")
        if len(rows) != len(I):
            raise DatasetError(f"{fp}: {len(rows)} rows but {ip} has {len(I)} IDs")
        if rows and len({len(r) for r in rows}) != 1:
            raise DatasetError(f"{fp}: ragged feature rows")
        for lineno, i in enumerate(I, 1):
            if i not in labels:
                raise DatasetError(f"{ip}:{lineno}: missing label for sample {i}")
        feats.append(np.array(rows, dtype=float).reshape(len(rows), -1))
        ids.append(np.array(I, dtype=np.int64))
    return MultiModalDataset(tuple(feats), tuple(ids), labels, num_classes)


def _dataset_files(directory: Path, v: int):
    return (directory / f"features_{v}.csv", directory / f"ids_{v}.txt",
            directory / f"labels_{v}.txt")


def load_dataset_dir(directory) -> MultiModalDataset:
    """Load a directory written by :func:`save_dataset`."""
    directory = Path(directory)
    if not (directory / "labels.csv").exists():
        raise DatasetError(f"{directory}: no labels.csv")
    fps, ips = [], []
    v = 0
    while _dataset_files(directory, v)[0].exists():
        fp, ip, _ = _dataset_files(directory, v)
        fps.append(fp)
        ips.append(ip)
        v += 1
    if not fps:
        raise DatasetError(f"{directory}: no features_0.csv")
    num_classes = 0
    meta = directory / "num_classes.txt"
    if meta.exists():
        num_classes = int(meta.read_text().strip())
    return load_dataset(fps, ips, directory / "labels.csv", num_classes)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_dataset(ds: MultiModalDataset, directory) -> list:
    """Write features, IDs and row-aligned labels per modality, plus ``labels.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for v in range(ds.num_modalities):
        fp, ip, lp = _dataset_files(directory, v)
        _atomic_write(fp, "".join(",".join(format(x, ".17g") for x in row) + "\n"
                                  for row in ds.features[v]))
        _atomic_write(ip, "".join(f"{int(i)}\n" for i in ds.sample_ids[v]))
        _atomic_write(lp, "".join(f"{int(c)}\n" for c in ds.labels_of(v)))
        written += [fp, ip, lp]
    lab = directory / "labels.csv"
    _atomic_write(lab, "".join(f"{i},{c}\n" for i, c in sorted(ds.labels.items())))
    _atomic_write(directory / "num_classes.txt", f"{ds.num_classes}\n")
    written += [lab, directory / "num_classes.txt"]
    return written
