"""Acceptance criteria 1-11. Run ``pytest tests/test_acceptance.py`` for the summary block."""

import json
import math
import random
import time

import numpy as np
import pytest

import oracles
from paramine import cli
from paramine.corpus import PairCorpus, SentencePair, Vocabulary
from paramine.embedder import EmbeddingMatrix, GranEncoder, GranParams, AvgEncoder, embed_avg, embed_gran
from paramine.evaluation import sts_evaluate
from paramine.filters import FilterConfig, apply_filters, score_pairs, survivor_mask
from paramine.lm import NgramLM
from paramine.refclass import ReferenceClassifier, classifier_report, metric_correlations
from paramine.synthgen import gen_mt_like, gen_paraphrase_corpus, labeled_sentences
from paramine.textstats import (IdfTable, avg_idf, build_idf, corpus_diff_report, entropy, ngram_counts,
                                ngram_overlap, repetition_rate, smoothed_bleu)
from paramine.trainer import ParaphraseEmbedder, TrainConfig, grad_check, select_negatives

FROZEN = json.load(open(__file__.replace("test_acceptance.py", "frozen_oracles.json")))


# 1 ---------------------------------------------------------------------------

def _tiny_problem(kind, seed):
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"w{i}" for i in range(40)])
    emb = EmbeddingMatrix(vocab, rng.uniform(-0.5, 0.5, size=(len(vocab), 6)))
    emb.W[...] += rng.normal(scale=0.01, size=emb.W.shape)  # nonzero drift for the lambda_w term
    enc = AvgEncoder(emb) if kind == "avg" else GranEncoder(emb, GranParams.init(6, 6, rng, scale=0.5))
    batch = [(rng.integers(len(vocab), size=int(rng.integers(1, 6))),
              rng.integers(len(vocab), size=int(rng.integers(1, 6)))) for _ in range(3)]
    return enc, batch


@pytest.mark.criterion(1, "gradient check AVG and GRAN, max rel err < 1e-4, 10 seeds, < 30 s")
def test_c01_gradient_check(detail):
    cfg = TrainConfig(model="avg", batch_size=3, margin=0.4, lambda_c=1e-3, lambda_w=1e-3)
    t0 = time.perf_counter()
    worst = {}
    for kind in ("avg", "gran"):
        for seed in range(10):
            enc, batch = _tiny_problem(kind, seed)
            n_params = sum(a.size for a in enc.params().values())
            assert n_params >= 200
            err = grad_check(enc, batch, cfg, eps=1e-5, n_coords=200, seed=seed)
            worst[kind] = max(worst.get(kind, 0.0), err)
    elapsed = time.perf_counter() - t0
    detail(f"avg {worst['avg']:.2e}, gran {worst['gran']:.2e}, {elapsed:.1f}s")
    assert worst["avg"] < 1e-4 and worst["gran"] < 1e-4
    assert elapsed < 30


# 2 ---------------------------------------------------------------------------

@pytest.mark.criterion(2, "GRAN reduces to AVG with open gates")
def test_c02_gran_reduces_to_avg(detail):
    rng = np.random.default_rng(0)
    vocab = Vocabulary([f"w{i}" for i in range(50)])
    emb = EmbeddingMatrix(vocab, rng.normal(size=(len(vocab), 8)))
    p = GranParams.init(8, 8, rng)
    p.W_x[...] = 0.0
    p.W_h[...] = 0.0
    p.b[...] = 20.0
    worst = 0.0
    for _ in range(100):
        toks = [f"w{i}" for i in rng.integers(50, size=int(rng.integers(1, 15)))]
        a, g = embed_avg(emb, toks), embed_gran(p, emb, toks)
        worst = max(worst, np.max(np.abs(g - a)) / np.max(np.abs(a)))
    detail(f"max rel deviation {worst:.1e}")
    assert worst < 1e-6


# 3 ---------------------------------------------------------------------------

@pytest.mark.criterion(3, "metric oracles: hand tables and 1,000 brute-force cases within 1e-9")
def test_c03_metric_oracles(detail):
    for r, t, v in FROZEN["bleu"]:
        assert smoothed_bleu(r, t) == pytest.approx(v, abs=1e-9)
    assert smoothed_bleu(["the", "cat", "sat"], ["the", "cat"]) == pytest.approx(math.exp(-1 / 3), abs=1e-9)
    assert smoothed_bleu(["a", "b"], ["c", "d"]) == pytest.approx((1 / 6) ** 0.25, abs=1e-9)
    for r, t, n, v in FROZEN["overlap"]:
        assert ngram_overlap(r, t, n) == pytest.approx(v, abs=1e-9)
    assert ngram_overlap(list("abcd"), list("abx"), 1) == pytest.approx(2 / 3, abs=1e-9)
    for s, v in FROZEN["entropy"]:
        assert entropy(ngram_counts(s, 1)) == pytest.approx(v, abs=1e-9)
    assert entropy(ngram_counts(["a", "a", "b", "c"], 1)) == pytest.approx(1.5, abs=1e-9)
    for s, n, v in FROZEN["repetition"]:
        assert repetition_rate(s, n) == pytest.approx(v, abs=1e-9)
    staff = FROZEN["repetition"][2][0]
    assert repetition_rate(staff, 1, 3) == pytest.approx(9 / 17, abs=1e-9)
    table = build_idf(FROZEN["idf"]["documents"])
    for s, v in FROZEN["idf"]["cases"]:
        assert avg_idf(s, table) == pytest.approx(v, abs=1e-9)
    assert table["rare"] == pytest.approx(math.log(2), abs=1e-9)
    assert table["unseen"] == pytest.approx(math.log(4), abs=1e-9)

    rng = random.Random(0)
    alphabet = ["a", "b", "c", "dd", "eee", "ffff", "A"]
    worst = 0.0
    for _ in range(1000):
        r = [rng.choice(alphabet) for _ in range(rng.randint(1, 8))]
        t = [rng.choice(alphabet) for _ in range(rng.randint(1, 8))]
        n = rng.randint(1, 3)
        docs = [[rng.choice(alphabet) for _ in range(rng.randint(1, 5))] for _ in range(rng.randint(1, 4))]
        errs = [
            smoothed_bleu(r, t) - oracles.bleu(r, t),
            ngram_overlap(r, t, n) - oracles.overlap(r, t, n),
            entropy(ngram_counts(t, n)) - oracles.entropy_of(oracles.grams(t, n)),
            repetition_rate(t, n) - oracles.repetition(t, n),
            avg_idf(t, build_idf(docs)) - oracles.mean_idf(t, docs),
        ]
        worst = max(worst, max(abs(e) for e in errs))
    detail(f"max random-case deviation {worst:.1e}")
    assert worst < 1e-9


# 4 ---------------------------------------------------------------------------

@pytest.mark.criterion(4, "LM normalisation, memorised-sentence perplexity, uniform perplexity V+1")
def test_c04_lm_soundness(detail):
    rng = random.Random(1)
    words = [f"t{i}" for i in range(12)]
    corpus = [[rng.choice(words) for _ in range(rng.randint(1, 6))] for _ in range(40)]
    lm = NgramLM(order=3).fit(corpus)
    assert len(lm.outcomes()) <= 20
    contexts = set(lm.contexts())
    contexts |= {(a, b) for a in ["<s>"] + words[:4] for b in words[:4]}  # some unseen ones too
    worst = 0.0
    for ctx in contexts:
        total = sum(lm.prob(w, ctx) for w in lm.outcomes())
        worst = max(worst, abs(total - 1.0))
    assert worst < 1e-9

    sentence = ["the", "cat", "sat", "on", "the", "mat"]
    ppl_mem = NgramLM().fit([sentence] * 20).perplexity(sentence)
    assert ppl_mem < 1.2

    # every outcome (3 words, </s> and <unk>) observed equally often: exactly uniform
    uni_corpus = [["a", "b", "c", f"rare{i}"] for i in range(4)]
    uni = NgramLM(order=1).fit(uni_corpus)
    V = len(uni.vocab_)
    ppls = [uni.perplexity(s) for s in (["a"], ["b", "zzz", "c"], ["c"] * 7)]
    detail(f"max |sum-1| {worst:.1e}, memorised ppl {ppl_mem:.3f}, uniform ppl {ppls[0]:.6f} (V+1={V + 1})")
    assert all(abs(p - (V + 1)) < 1e-9 for p in ppls)


# 5 ---------------------------------------------------------------------------

@pytest.mark.criterion(5, "negative selection equals exhaustive argmax, ties to lowest index")
def test_c05_negative_mining(detail):
    rng = np.random.default_rng(5)
    ties = 0
    for trial in range(100):
        B = int(rng.integers(2, 17))
        d = int(rng.integers(1, 6))
        E1, E2 = rng.normal(size=(B, d)), rng.normal(size=(B, d))
        if trial % 2 == 0:  # force exact ties by duplicating rows
            for E in (E1, E2):
                for _ in range(int(rng.integers(1, B + 1))):
                    i, j = rng.integers(B, size=2)
                    E[i] = E[j]
                    ties += 1
        t1, t2 = select_negatives(E1, E2)
        assert list(t1) == oracles.hardest_negatives(E1.tolist())
        assert list(t2) == oracles.hardest_negatives(E2.tolist())
    # an explicit tie: rows 1 and 2 are identical, both equally close to row 0
    E = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [-1.0, 0.0]])
    assert select_negatives(E, E)[0][0] == 1
    detail(f"{ties} forced duplicate rows")


# 6 ---------------------------------------------------------------------------

C6_DIM = 300


@pytest.mark.criterion(6, "AVG 20 epochs gains >= 0.15 dev r; GRAN 3 epochs within 0.05 of AVG")
def test_c06_learning_signal(detail):
    t0 = time.perf_counter()
    data = gen_paraphrase_corpus(20, 50, 500, 0.3, seed=0)
    dev = lambda m: sts_evaluate(m, [data.dev]).average  # noqa: E731
    common = dict(dim=C6_DIM, batch_size=100, margin=0.4, learning_rate=0.001, random_state=0)
    avg = ParaphraseEmbedder(model="avg", epochs=20, **common).fit(data.corpus, dev_eval=dev)
    gran = ParaphraseEmbedder(model="gran", epochs=3, **common).fit(data.corpus, dev_eval=dev)
    base = avg.train_result_.initial_dev_score
    r_avg, r_gran = dev(avg), dev(gran)
    elapsed = time.perf_counter() - t0
    detail(f"baseline {base:.3f}, AVG {r_avg:.3f} (gain {r_avg - base:+.3f}), GRAN {r_gran:.3f}, "
           f"{elapsed:.0f}s")
    assert elapsed < 300
    assert r_avg - base >= 0.15, "AVG learning signal"
    assert r_gran >= r_avg - 0.05, "GRAN after 3 epochs vs AVG after 20"


# 7, 8 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mt_classifiers():
    corpus = gen_mt_like(5000, 0.3, 0.3, seed=0)
    train, val, test = corpus.take(range(4000)), corpus.take(range(4000, 4500)), corpus.take(range(4500, 5000))
    Xtr, ytr = labeled_sentences(train)
    Xva, yva = labeled_sentences(val)
    t0 = time.perf_counter()
    models = {enc: ReferenceClassifier(encoder=enc, random_state=0).fit(Xtr, ytr, Xva, yva)
              for enc in ("avg", "lstm")}
    return {"models": models, "train": train, "test": test, "seconds": time.perf_counter() - t0}


@pytest.mark.criterion(7, "classifier: AVG >= 90% test accuracy, LSTM >= AVG - 2%, < 5 min")
def test_c07_classifier_signal(mt_classifiers, detail):
    Xte, yte = labeled_sentences(mt_classifiers["test"])
    acc = {k: classifier_report(m, Xte, yte).accuracy for k, m in mt_classifiers["models"].items()}
    detail(f"AVG {acc['avg']:.3f}, LSTM {acc['lstm']:.3f}, {mt_classifiers['seconds']:.0f}s")
    assert mt_classifiers["seconds"] < 300
    assert acc["avg"] >= 0.90
    assert acc["lstm"] >= acc["avg"] - 0.02


@pytest.mark.criterion(8, "P(R) correlates negatively with repetition, positively with IDF")
def test_c08_correlation_signs(mt_classifiers, detail):
    idf = build_idf(mt_classifiers["train"].references())
    rows = {c.metric: c for c in metric_correlations(mt_classifiers["models"]["avg"], mt_classifiers["test"], idf)}
    rep, aidf = rows["Unigram repetition rate"], rows["Average IDF"]
    detail(f"rho(rep uni) {100 * rep.rho:+.1f}, rho(avg idf) {100 * aidf.rho:+.1f}")
    assert rep.defined and rep.rho < 0
    assert aidf.defined and aidf.rho > 0


# 9 ---------------------------------------------------------------------------

def _random_config(rng):
    def rng_range(lo, hi):
        a, b = sorted(rng.uniform(lo, hi, size=2))
        return (float(a), float(b))

    kw = {}
    if rng.random() < 0.6:
        kw["length_range"] = tuple(float(x) for x in sorted(rng.integers(0, 50, size=2)))
    if rng.random() < 0.5:
        kw["cost_max"] = float(rng.uniform(0, 2))
    if rng.random() < 0.5:
        kw["ppl_max"] = float(rng.choice([25, 50, 75, 100, 150, 200, math.inf, rng.uniform(10, 400)]))
    if rng.random() < 0.5:
        kw["pr_min"] = float(rng.uniform(0, 1))
    if rng.random() < 0.5:
        kw["overlap"] = (int(rng.integers(1, 4)),) + rng_range(0, 1)
    if rng.random() < 0.5:
        kw["bleu_range"] = rng_range(0, 1)
    return FilterConfig(**kw)


def _tighten(cfg, rng):
    """Shrink every active bound and possibly switch on one more filter."""
    def shrink(lo, hi):
        return lo + rng.uniform(0, 0.5) * (hi - lo), hi - rng.uniform(0, 0.5) * (hi - lo)

    kw = {}
    if cfg.length_range:
        kw["length_range"] = tuple(float(x) for x in shrink(*cfg.length_range))
    if cfg.cost_max is not None:
        kw["cost_max"] = cfg.cost_max * rng.uniform(0.3, 1)
    if cfg.ppl_max is not None:
        kw["ppl_max"] = cfg.ppl_max * rng.uniform(0.3, 1)
    if cfg.pr_min is not None:
        kw["pr_min"] = cfg.pr_min + rng.uniform(0, 1 - cfg.pr_min)
    if cfg.overlap:
        kw["overlap"] = (cfg.overlap[0],) + shrink(*cfg.overlap[1:])
    if cfg.bleu_range:
        kw["bleu_range"] = shrink(*cfg.bleu_range)
    if cfg.ppl_max is None and rng.random() < 0.5:
        kw["ppl_max"] = float(rng.uniform(20, 300))
    out = FilterConfig(**{**{f: getattr(cfg, f) for f in ("length_range", "cost_max", "ppl_max", "pr_min",
                                                              "overlap", "bleu_range")}, **kw})
    return out


def _brute_survivors(scored, cfg):
    """Intersection of per-predicate index sets computed with plain comparisons."""
    m = {k: v.tolist() for k, v in scored.metrics.items()}
    n = len(scored)
    sets = []
    if cfg.length_range:
        lo, hi = cfg.length_range
        sets.append({i for i in range(n) if lo <= m["length"][i] <= hi})
    if cfg.cost_max is not None:
        sets.append({i for i in range(n) if m["cost"][i] <= cfg.cost_max})
    if cfg.ppl_max is not None:
        sets.append({i for i in range(n) if m["ppl"][i] <= cfg.ppl_max})
    if cfg.pr_min is not None:
        sets.append({i for i in range(n) if m["pr"][i] >= cfg.pr_min})
    if cfg.overlap:
        k, lo, hi = cfg.overlap
        sets.append({i for i in range(n) if lo <= m[f"overlap{k}"][i] <= hi})
    if cfg.bleu_range:
        lo, hi = cfg.bleu_range
        sets.append({i for i in range(n) if lo <= m["bleu"][i] <= hi})
    return set(range(n)).intersection(*sets)


@pytest.fixture(scope="module")
def scored_10k():
    base = gen_mt_like(10000, 0.3, 0.3, seed=9, length=(3, 40))
    rng = np.random.default_rng(9)
    corpus = PairCorpus(SentencePair(p.reference, p.translation, cost=float(c), lang_pair=p.lang_pair,
                                     source=p.source) for p, c in zip(base, rng.gamma(2.0, 0.3, size=len(base))))
    lm = NgramLM().fit(gen_mt_like(2000, 0.0, 0.0, seed=10).references())
    X, y = labeled_sentences(gen_mt_like(1000, 0.3, 0.3, seed=11))
    clf = ReferenceClassifier(epochs=2, random_state=0).fit(X, y)
    return score_pairs(corpus, lm=lm, classifier=clf)


@pytest.mark.criterion(9, "filter algebra: monotone, commutative, equal to brute-force sets")
def test_c09_filter_algebra(scored_10k, detail):
    assert len(scored_10k) == 10000
    rng = np.random.default_rng(99)
    sizes = []
    for _ in range(50):
        a, b = _random_config(rng), _random_config(rng)
        for cfg in (a, b):
            got = set(np.flatnonzero(survivor_mask(scored_10k, cfg)).tolist())
            assert got == _brute_survivors(scored_10k, cfg)
            sizes.append(len(got))
        # monotonicity
        tight = _tighten(a, rng)
        assert set(np.flatnonzero(survivor_mask(scored_10k, tight))) <= set(np.flatnonzero(survivor_mask(scored_10k, a)))
        # commutativity: a then b == b then a == intersection
        ma, mb = survivor_mask(scored_10k, a), survivor_mask(scored_10k, b)
        ia = np.flatnonzero(ma)
        ib = np.flatnonzero(mb)
        ab = set(ia[survivor_mask(scored_10k.take(ia), b)].tolist())
        ba = set(ib[survivor_mask(scored_10k.take(ib), a)].tolist())
        assert ab == ba == set(np.flatnonzero(ma & mb).tolist())
        assert [p for p in apply_filters(scored_10k.take(ia), b)] == [scored_10k.corpus[i] for i in sorted(ab)]
    assert list(apply_filters(scored_10k, FilterConfig())) == list(scored_10k.corpus)
    detail(f"survivor counts {min(sizes)}..{max(sizes)}")


# 10 --------------------------------------------------------------------------

def _run_twice(tmp_path, make_argv, outputs):
    blobs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir(parents=True)
        assert cli.main(make_argv(d)) == 0
        blobs.append({name: (d / name).read_bytes() for name in outputs})
    return blobs[0] == blobs[1]


@pytest.mark.criterion(10, "train, tune, clf-train and filter are byte-identical across seeded runs")
def test_c10_determinism(tmp_path, detail):
    src = tmp_path / "src"
    src.mkdir()
    assert cli.main(["synth-para", "--clusters", "5", "--per-cluster", "40", "--vocab", "100",
                     "--out", str(src / "para.jsonl"), "--dev-out", str(src / "dev.tsv")]) == 0
    assert cli.main(["synth-mt", "--pairs", "400", "--kbest", "3", "--out", str(src / "mt.jsonl")]) == 0
    para, dev, mt = str(src / "para.jsonl"), str(src / "dev.tsv"), str(src / "mt.jsonl")
    same = {
        "train": _run_twice(tmp_path / "train", lambda d: [
            "train", "--input", para, "--dev", dev, "--model", "gran", "--epochs", "2", "--dim", "20",
            "--seed", "3", "--checkpoint-every-epoch", "--out", str(d / "m.ckpt")],
            ["m.ckpt", "m.ckpt.epoch1", "m.ckpt.epoch2"]),
        "tune": _run_twice(tmp_path / "tune", lambda d: [
            "tune", "--input", para, "--family", "bleu", "--dev", dev, "--target-size", "100",
            "--epochs", "2", "--seed", "3", "--out", str(d / "t.tsv"), "--best-config", str(d / "best.conf")],
            ["t.tsv", "best.conf"]),
        "clf-train": _run_twice(tmp_path / "clf", lambda d: [
            "clf-train", "--input", mt, "--encoder", "lstm", "--negatives", "hardest", "--epochs", "2",
            "--dim", "16", "--seed", "3", "--out", str(d / "c.ckpt")], ["c.ckpt"]),
        "filter": _run_twice(tmp_path / "filter", lambda d: [
            "filter", "--input", mt, "--length-range", "5", "40", "--overlap", "2", "0.1", "1.0",
            "--target-size", "50", "--seed", "3", "--out", str(d / "f.jsonl")], ["f.jsonl"]),
    }
    detail(", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert all(same.values())


# 11 --------------------------------------------------------------------------

@pytest.mark.criterion(11, "diff report: zero deltas at rate 0; repetition/entropy signs at rate 0.5")
def test_c11_corpus_statistics(detail):
    zero = corpus_diff_report(gen_mt_like(1000, 0.0, 0.0, seed=0))
    for row in zero:
        assert (row.ent_uni, row.ent_tri, row.rep_uni, row.rep_tri) == (0.0, 0.0, 0.0, 0.0)
    rep = corpus_diff_report(gen_mt_like(1000, 0.5, 0.0, seed=0))[-1]
    detail(f"rate 0.5: d_rep_uni {rep.rep_uni:+.4f}, d_ent_uni {rep.ent_uni:+.4f}")
    assert rep.rep_uni < 0
    assert rep.ent_uni > 0
