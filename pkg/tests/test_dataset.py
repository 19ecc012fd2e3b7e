import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mnse.dataset import (
    DatasetError,
    MultiModalDataset,
    SynthConfig,
    generate_synthetic,
    load_dataset,
    load_dataset_dir,
    save_dataset,
    split,
)


def _write(path, text):
    path.write_text(text)
    return path


def test_minimal_files_load(tmp_path):
    f0 = _write(tmp_path / "a.csv", "0.0,1.0\n2.0,3.0\n")
    f1 = _write(tmp_path / "b.csv", "4.0\n5.0\n")
    i0 = _write(tmp_path / "a.ids", "0\n1\n")
    i1 = _write(tmp_path / "b.ids", "0\n1\n")
    lab = _write(tmp_path / "labels.csv", "0,0\n1,1\n")
    ds = load_dataset([f0, f1], [i0, i1], lab)
    assert ds.num_modalities == 2
    assert ds.sizes == (2, 2)
    assert ds.dims == (2, 1)
    assert ds.num_classes == 2


def test_missing_label_names_file_and_line(tmp_path):
    f0 = _write(tmp_path / "a.csv", "0.0\n1.0\n")
    i0 = _write(tmp_path / "a.ids", "0\n7\n")
    lab = _write(tmp_path / "labels.csv", "0,0\n")
    with pytest.raises(DatasetError, match=r"a\.ids:2: missing label"):
        load_dataset([f0], [i0], lab)


def test_nan_feature_rejected(tmp_path):
    f0 = _write(tmp_path / "a.csv", "0.0\nnan\n")
    i0 = _write(tmp_path / "a.ids", "0\n1\n")
    lab = _write(tmp_path / "labels.csv", "0,0\n1,1\n")
    with pytest.raises(DatasetError, match=r"a\.csv:2"):
        load_dataset([f0], [i0], lab)


def test_row_count_mismatch(tmp_path):
    f0 = _write(tmp_path / "a.csv", "0.0\n")
    i0 = _write(tmp_path / "a.ids", "0\n1\n")
    lab = _write(tmp_path / "labels.csv", "0,0\n1,1\n")
    with pytest.raises(DatasetError, match="1 rows"):
        load_dataset([f0], [i0], lab)


def test_unparseable_value(tmp_path):
    f0 = _write(tmp_path / "a.csv", "0.0\nabc\n")
    i0 = _write(tmp_path / "a.ids", "0\n1\n")
    lab = _write(tmp_path / "labels.csv", "0,0\n1,1\n")
    with pytest.raises(DatasetError, match=r"a\.csv:2: bad feature row"):
        load_dataset([f0], [i0], lab)


def test_duplicate_ids_rejected():
    with pytest.raises(DatasetError):
        MultiModalDataset((np.zeros((2, 1)),), (np.array([0, 0]),), {0: 0})


def test_seed7_counts(seed7):
    assert seed7.sizes == (60, 60)
    assert list(seed7.sample_ids[0]) == list(seed7.sample_ids[1])
    assert len(seed7.all_ids()) == 60
    assert [int(np.sum(seed7.labels_of(0) == m)) for m in range(3)] == [20, 20, 20]


def test_noise_free_identity_modalities_agree():
    ds = generate_synthetic(SynthConfig(noise=0.0, seed=3))
    assert np.array_equal(ds.features[0], ds.features[1])


def test_same_seed_bit_identical():
    a = generate_synthetic(SynthConfig(seed=11, warp="cubic"))
    b = generate_synthetic(SynthConfig(seed=11, warp="cubic"))
    for X, Y in zip(a.features, b.features):
        assert X.tobytes() == Y.tobytes()


def test_affine_warp_changes_dimension():
    ds = generate_synthetic(SynthConfig(dims=(2, 5), warp="affine", seed=1))
    assert ds.dims == (2, 5)


def test_bad_config():
    with pytest.raises(DatasetError):
        SynthConfig(dims=(2, 3), warp="identity")
    with pytest.raises(DatasetError):
        SynthConfig(warp="spiral")
    with pytest.raises(DatasetError):
        SynthConfig(noise=-1.0)


def test_split_half(seed7):
    tr, te = split(seed7, 0.5, seed=4)
    assert len(tr.all_ids()) == 30 and len(te.all_ids()) == 30
    for part in (tr, te):
        assert [int(np.sum(part.labels_of(0) == m)) for m in range(3)] == [10, 10, 10]
    assert not set(tr.all_ids()) & set(te.all_ids())


def test_split_fraction_bounds(seed7):
    for f in (0.0, 1.0, 1.5):
        with pytest.raises(DatasetError):
            split(seed7, f)


def test_split_deterministic(seed7):
    a, _ = split(seed7, 0.3, seed=9)
    b, _ = split(seed7, 0.3, seed=9)
    assert list(a.all_ids()) == list(b.all_ids())


def test_split_needs_two_per_class():
    ds = generate_synthetic(SynthConfig(per_class=1))
    with pytest.raises(DatasetError, match="fewer than 2"):
        split(ds, 0.5)


def test_round_trip(tmp_path, seed7):
    save_dataset(seed7, tmp_path / "d")
    back = load_dataset_dir(tmp_path / "d")
    assert back.num_classes == seed7.num_classes
    for v in range(2):
        assert np.array_equal(back.features[v], seed7.features[v])
        assert np.array_equal(back.sample_ids[v], seed7.sample_ids[v])


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_split_is_partition(per_class, frac, seed):
    ds = generate_synthetic(SynthConfig(per_class=per_class, seed=seed % 1000))
    tr, te = split(ds, frac, seed)
    a, b = set(tr.all_ids()), set(te.all_ids())
    assert a | b == set(ds.all_ids()) and not a & b
    for m in range(ds.num_classes):
        assert np.any(tr.labels_of(0) == m) and np.any(te.labels_of(0) == m)
