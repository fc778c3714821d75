import json
import math
import os

import pytest
from hypothesis import given, strategies as st

import oracles
from paramine.lm import NgramLM, perplexity, train_lm

FROZEN = json.load(open(os.path.join(os.path.dirname(__file__), "frozen_oracles.json")))
sent = st.lists(st.sampled_from(list("abcde")), min_size=1, max_size=6)


def test_held_out_perplexity_matches_frozen_oracle():
    lm = train_lm(FROZEN["lm"]["train"], order=3, discount=0.75)
    for s, v in FROZEN["lm"]["cases"]:
        assert perplexity(lm, s) == pytest.approx(v, abs=1e-9)


@given(st.lists(sent, min_size=1, max_size=8), sent, st.sampled_from([1, 2, 3]), st.sampled_from([0.1, 0.5, 0.75]))
def test_perplexity_matches_recursion_oracle(train, test, order, d):
    lm = NgramLM(order=order, discount=d).fit(train)
    assert lm.perplexity(test) == pytest.approx(oracles.lm_perplexity(test, train, order, d), rel=1e-9)


@given(st.lists(sent, min_size=1, max_size=8))
def test_every_seen_context_normalises(train):
    lm = NgramLM().fit(train)
    for ctx in lm.contexts():
        ctx = ctx if len(ctx) else ()
        assert sum(lm.prob(w, ctx) for w in lm.outcomes()) == pytest.approx(1.0, abs=1e-9)


def test_memorised_sentence():
    s = ["a", "b", "c", "d"]
    assert NgramLM().fit([s] * 10).perplexity(s) < 1.2


def test_more_repetitions_never_hurt():
    s = ["x", "y", "z"]
    others = [["p", "q"], ["q", "p", "p"]] * 2
    ppls = [NgramLM().fit(others + [s] * k).perplexity(s) for k in range(2, 7)]
    assert all(b <= a + 1e-12 for a, b in zip(ppls, ppls[1:]))


def test_training_order_irrelevant():
    corpus = [["a", "b"], ["b", "c", "a"], ["a", "a", "c"], ["c", "b"]]
    a = NgramLM().fit(corpus).perplexity(["a", "c", "b"])
    b = NgramLM().fit(corpus[::-1]).perplexity(["a", "c", "b"])
    assert a == b


def test_uniform_unigram_small_discount():
    # each outcome (two words, </s>, <unk>) observed equally often
    corpus = [["a", "b", f"r{i}"] for i in range(5)]
    lm = NgramLM(order=1, discount=1e-6).fit(corpus)
    for w in ("a", "b", "</s>", "never-seen"):
        assert lm.prob(w) == pytest.approx(1 / 4, abs=1e-9)


@pytest.mark.parametrize("kw", [{"discount": 0.0}, {"discount": 1.0}, {"order": 0}])
def test_bad_parameters(kw):
    with pytest.raises(ValueError):
        NgramLM(**kw).fit([["a"]])


def test_errors():
    with pytest.raises(ValueError):
        NgramLM().fit([])
    lm = NgramLM().fit([["a", "a"]])
    with pytest.raises(ValueError):
        lm.perplexity([])


def test_save_load_round_trip(tmp_path):
    lm = train_lm(FROZEN["lm"]["train"])
    lm.save(tmp_path / "lm.arpa")
    back = NgramLM.load(tmp_path / "lm.arpa")
    assert back.get_params() == lm.get_params()
    for s in (["a", "b", "a"], ["zzz"], ["d", "d", "b", "c"]):
        assert back.perplexity(s) == pytest.approx(lm.perplexity(s), rel=1e-12)
    text = (tmp_path / "lm.arpa").read_text()
    assert "\\1-grams:" in text and "\\3-grams:" in text
