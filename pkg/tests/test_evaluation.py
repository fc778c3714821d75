import json
import logging
import os

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

import oracles
from paramine.evaluation import (StsDataset, StsItem, UndefinedCorrelationError, pearson, read_sts,
                                 spearman, sts_evaluate, write_sts)

FROZEN = json.load(open(os.path.join(os.path.dirname(__file__), "frozen_oracles.json")))
reals = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=20)


def test_pearson_examples():
    x = [1.0, 2.0, 3.0, 4.0]
    assert pearson(x, [2 * v + 1 for v in x]) == pytest.approx(1.0)
    assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    xs, ys, v = FROZEN["spearman_tie"]
    assert spearman(xs, ys) == pytest.approx(v, abs=1e-12)


@given(reals, reals)
def test_symmetry_and_oracle(xs, ys):
    n = min(len(xs), len(ys))
    xs, ys = xs[:n], ys[:n]
    assume(np.ptp(xs) > 1e-6 and np.ptp(ys) > 1e-6)
    assert pearson(xs, ys) == pytest.approx(pearson(ys, xs))
    assert spearman(xs, ys) == pytest.approx(spearman(ys, xs))
    assert spearman(xs, ys) == pytest.approx(oracles.spearman(xs, ys), abs=1e-9)
    assert pearson(xs, ys) == pytest.approx(oracles.pearson(xs, ys), abs=1e-9)


@given(reals, st.floats(-10, 10).filter(lambda a: abs(a) > 1e-3), st.floats(-10, 10))
def test_pearson_affine_sign(xs, a, b):
    assume(np.ptp(xs) > 1e-3)
    assert pearson(xs, [a * x + b for x in xs]) == pytest.approx(np.sign(a), abs=1e-9)


@given(st.lists(st.integers(-50, 50), min_size=3, max_size=20), st.lists(st.integers(-50, 50), min_size=3, max_size=20))
def test_spearman_monotone_invariance(xs, ys):
    n = min(len(xs), len(ys))
    xs, ys = xs[:n], ys[:n]
    assume(len(set(xs)) > 1 and len(set(ys)) > 1)
    assert spearman(xs, ys) == pytest.approx(spearman(np.exp(np.array(xs) / 50), ys), abs=1e-9)


class CosineTable:
    """Model whose similarity is looked up from the first token of each side."""

    def __init__(self, values):
        self.values = values

    def similarity(self, X1, X2):
        return np.array([self.values[(a[0], b[0])] for a, b in zip(X1, X2)])


class VectorModel:
    def __init__(self, vectors, scale=1.0):
        self.vectors, self.scale = vectors, scale

    def similarity(self, X1, X2):
        from paramine.embedder import cosine
        return np.array([cosine(self.scale * self.vectors[a[0]], self.scale * self.vectors[b[0]])
                         for a, b in zip(X1, X2)])


def _file(name, golds):
    return StsDataset(name, [StsItem((f"a{i}",), (f"b{i}",), g) for i, g in enumerate(golds)])


def test_affine_model_gives_perfect_r():
    golds = [0.0, 1.0, 2.5, 4.0, 5.0]
    ds = _file("f", golds)
    model = CosineTable({(f"a{i}", f"b{i}"): g / 5 for i, g in enumerate(golds)})
    report = sts_evaluate(model, [ds])
    assert report.per_file["f"] == pytest.approx(1.0)
    assert report.format().splitlines()[-1] == "AVERAGE\t100.0"


def test_macro_average_and_exclusion(caplog):
    class Fixed:
        def __init__(self):
            self.calls = 0

        def similarity(self, X1, X2):
            return np.array([0.1, 0.2, 0.3, 0.9])

    a = _file("a", [0.0, 1.0, 2.0, 3.0])
    flat = _file("flat", [2.0] * 4)
    with caplog.at_level(logging.WARNING):
        report = sts_evaluate(Fixed(), [a, flat])
    assert report.excluded == ["flat"] and "zero variance" in caplog.text
    r = pearson([0.1, 0.2, 0.3, 0.9], [0, 1, 2, 3])
    assert report.average == pytest.approx(r)
    report.per_file = {"x": 0.6, "y": 0.8}
    assert report.average == pytest.approx(0.7)


def test_random_embeddings_null_distribution():
    rng = np.random.default_rng(0)
    n = 1000
    vectors = {f"a{i}": rng.normal(size=20) for i in range(n)} | {f"b{i}": rng.normal(size=20) for i in range(n)}
    ds = _file("r", list(rng.uniform(0, 5, size=n)))
    assert abs(sts_evaluate(VectorModel(vectors), [ds]).average) < 0.1


def test_rescaling_invariance():
    rng = np.random.default_rng(1)
    vectors = {f"{s}{i}": rng.normal(size=5) for i in range(30) for s in "ab"}
    ds = _file("r", list(rng.uniform(0, 5, size=30)))
    base = sts_evaluate(VectorModel(vectors), [ds]).average
    assert sts_evaluate(VectorModel(vectors, scale=37.5), [ds]).average == pytest.approx(base, abs=1e-12)


def test_sts_file_round_trip(tmp_path):
    items = [StsItem(("a", "b"), ("c",), 3.5), StsItem(("d",), ("e", "f"), 0.0)]
    write_sts(tmp_path / "x.tsv", items)
    ds = read_sts(tmp_path / "x.tsv")
    assert ds.items == items and ds.name == "x.tsv"
    (tmp_path / "bad.tsv").write_text("a\tb\n")
    with pytest.raises(ValueError):
        read_sts(tmp_path / "bad.tsv")
    with pytest.raises(ValueError):
        StsItem(("a",), ("b",), 5.5)


def test_json_report():
    report = sts_evaluate(CosineTable({("a0", "b0"): 0.1, ("a1", "b1"): 0.5}), [_file("f", [1.0, 2.0])])
    data = json.loads(report.format("json"))
    assert data["rows"][-1] == {"file": "AVERAGE", "r100": 100.0}
