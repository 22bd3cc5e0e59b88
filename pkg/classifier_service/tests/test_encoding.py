import pytest

from tuple_classifier.encoding import LabelEncoding


def test_first_appearance_order():
    enc = LabelEncoding.from_labels(["b", "a", "b", "c", "a"])
    assert enc.labels == ("b", "a", "c")
    assert enc.index_of("b") == 0
    assert enc.label_of(2) == "c"


def test_bijective():
    enc = LabelEncoding.from_labels(["x", "y", "z"])
    for i, label in enumerate(enc.labels):
        assert enc.index_of(label) == i
        assert enc.label_of(i) == label


def test_duplicate_rejected():
    with pytest.raises(ValueError):
        LabelEncoding(labels=("a", "a"))


def test_unknown_label():
    enc = LabelEncoding.from_labels(["a"])
    with pytest.raises(KeyError):
        enc.index_of("zz")


def test_save_load_stable(tmp_path):
    enc = LabelEncoding.from_labels(["gamma", "alpha", "beta"])
    path = tmp_path / "enc.json"
    enc.save(path)
    assert LabelEncoding.load(path) == enc
