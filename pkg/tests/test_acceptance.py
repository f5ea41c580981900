"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
with its measured quantities (run `pytest -s tests/test_acceptance.py` to see
them). Tolerances and runtime budgets are asserted, not just reported.
"""

import math
import os
import time

import numpy as np
import pytest

from attnsent import lm
from attnsent.attention import (
    SentenceEmbedder,
    att_sur,
    att_tag,
    att_tfidf,
    att_uniform,
    build_tfidf_index,
)
from attnsent.core import (
    EmbeddingTable,
    ModelBundle,
    TaggedSentence,
    TaggedToken,
    init_tag_table,
    load_bundle,
)
from attnsent.evaluation import (
    StsExample,
    eval_reading_time,
    eval_sts,
    pearson,
    pearson_pvalue,
    spearman,
)
from attnsent.evaluation import ReadingTimeRecord
from attnsent.training import TrainConfig, mine_negatives, train_scbow

import synthdata
from conftest import random_tagged_sentence
from gradcheck import check_gradients, random_instance, random_pp_batch
from kn_reference import ReferenceKN
from test_evaluation import brute_force_pearson, brute_force_spearman, pvalue_by_quadrature


def report(num, name, ok, detail):
    print(f"\nACCEPTANCE {num:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


# --- 1: attention normalization ------------------------------------------------


def test_criterion_01_attention_normalization():
    t0 = time.time()
    words = [f"w{i}" for i in range(60)]
    tags = ["NN", "VB", "JJ", "DT", "IN"]
    emb = EmbeddingTable.random(words, dim=12, seed=1, scale=0.4)
    pos = init_tag_table(tags, 12, seed=2)
    ccg = init_tag_table([t + "c" for t in tags], 12, seed=3, kind="ccg")
    rng = np.random.default_rng(4)
    sentences = []
    for _ in range(1000):
        n = int(rng.integers(1, 41))
        toks = [
            TaggedToken(
                words[int(rng.integers(len(words)))],
                tags[int(rng.integers(len(tags)))],
                ccg=tags[int(rng.integers(len(tags)))] + "c",
                surprisal=float(rng.uniform(0, 10)),
            )
            for _ in range(n)
        ]
        sentences.append(TaggedSentence(toks))
    index = build_tfidf_index(sentences)
    worst = 0.0
    min_weight = 1.0
    for s in sentences:
        for w in (
            att_uniform(s),
            att_sur(s.surprisals),
            att_tag(s, emb, pos, kind="pos"),
            att_tag(s, emb, ccg, kind="ccg"),
            att_tfidf(s, index),
        ):
            worst = max(worst, abs(float(w.sum()) - 1.0))
            min_weight = min(min_weight, float(w.min()))
    elapsed = time.time() - t0
    ok = worst <= 1e-9 and min_weight > 0.0 and elapsed < 5.0
    report(1, "attention normalization", ok,
           f"worst |sum-1|={worst:.2e}, min weight={min_weight:.2e}, {elapsed:.1f}s")


# --- 2: gradient checks ----------------------------------------------------------


def test_criterion_02_gradient_checks():
    t0 = time.time()
    failures = []
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        for kind in ("uniform", "sur", "pos"):
            bundle, inst = random_instance(rng, kind)
            if not check_gradients("scbow", inst, bundle):
                failures.append(("scbow", kind, seed))
            bundle, pairs, negs, initial = random_pp_batch(
                rng, kind=kind, n_pairs=int(rng.integers(2, 4)))
            if not check_gradients("pp", (pairs, negs), bundle,
                                   lam=0.05, initial_matrix=initial):
                failures.append(("pp", kind, seed))
    elapsed = time.time() - t0
    ok = not failures and elapsed < 30.0
    report(2, "finite-difference gradient checks", ok,
           f"{60 - len(failures)}/60 loss/attention/seed combinations, {elapsed:.1f}s")


# --- 3: Kneser-Ney oracle ---------------------------------------------------------


def _kn_fixture_corpus(rng, n_tokens, vocab_size):
    words = [f"v{i}" for i in range(vocab_size)]
    # Zipf-ish draws so the count-of-count profile is realistic
    p = np.array([1.0 / (i + 1) for i in range(vocab_size)])
    p /= p.sum()
    corpus, used = [], 0
    while used < n_tokens:
        n = min(int(rng.integers(3, 9)), n_tokens - used)
        if n == 0:
            break
        corpus.append([words[int(i)] for i in rng.choice(vocab_size, size=n, p=p)])
        used += n
    return corpus


def test_criterion_03_kneser_ney_matches_oracle():
    t0 = time.time()
    rng = np.random.default_rng(7)
    specs = [(2, 200, 18), (3, 150, 25), (5, 100, 12)]
    worst_norm = 0.0
    worst_diff = 0.0
    for order, n_tokens, vocab_size in specs:
        corpus = _kn_fixture_corpus(rng, n_tokens, vocab_size)
        assert sum(len(s) for s in corpus) <= 200
        model = lm.build(corpus, order=order)
        ref = ReferenceKN(corpus, order)
        assert len(ref.vocab) <= 30 + 3
        for k in range(1, order + 1):
            for ctx in model.observed_contexts(k):
                ctx_words = [model.vocab.word(i) for i in ctx]
                dist = ref.distribution(ctx_words)
                total = 0.0
                for w, p_ref in dist.items():
                    p = model.prob(w, ctx_words)
                    worst_diff = max(worst_diff, abs(p - p_ref))
                    total += p
                worst_norm = max(worst_norm, abs(total - 1.0))
    elapsed = time.time() - t0
    ok = worst_norm <= 1e-6 and worst_diff <= 1e-10 and elapsed < 10.0
    report(3, "Kneser-Ney normalization and oracle", ok,
           f"worst |sum-1|={worst_norm:.2e}, worst |p-oracle|={worst_diff:.2e}, {elapsed:.1f}s")


# --- 4: surprisal clip -------------------------------------------------------------


def test_criterion_04_surprisal_clip():
    t0 = time.time()
    rng = np.random.default_rng(11)
    xs = np.sort(rng.uniform(-100.0, 100.0, size=10000))
    ys = np.array([lm.clip_surprisal(x) for x in xs])
    in_range = bool(np.all((ys >= 0.0) & (ys <= 10.0)))
    interior = xs[(xs > 0.0) & (xs < 10.0)]
    unchanged = bool(np.all([lm.clip_surprisal(x) == x for x in interior]))
    monotone = bool(np.all(np.diff(ys) >= 0.0))
    elapsed = time.time() - t0
    ok = in_range and unchanged and monotone and elapsed < 1.0
    report(4, "surprisal clipping", ok,
           f"range={in_range}, interior identity={unchanged}, monotone={monotone}, {elapsed:.2f}s")


# --- 5: composition scale irrelevance ------------------------------------------------


def test_criterion_05_length_factor_never_moves_pearson():
    pairs = synthdata.make_sts_pairs(50, seed=77)
    words = sorted({w for _, s1, s2 in pairs for s in (s1, s2) for w in s.words})
    emb = EmbeddingTable.random(words, dim=16, seed=8, scale=0.4)
    tags = init_tag_table(["NN", "VB", "JJ", "DT", "IN"], 16, seed=9)
    bundle = ModelBundle(embeddings=emb, pos_tags=tags, attention_kind="pos")
    examples = [StsExample(g, s1, s2) for g, s1, s2 in pairs]
    r_with = eval_sts(examples, SentenceEmbedder(bundle, length_factor=True)).pearson
    r_without = eval_sts(examples, SentenceEmbedder(bundle, length_factor=False)).pearson
    diff = abs(r_with - r_without)
    ok = diff <= 1e-12
    report(5, "1/n factor cannot move Pearson", ok,
           f"|r_with - r_without|={diff:.2e}")


# --- 6: correlation oracles -----------------------------------------------------------


def test_criterion_06_correlation_oracles():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(50):
        xs = rng.normal(size=10)
        ys = rng.normal(size=10)
        worst = max(worst, abs(pearson(xs, ys) - brute_force_pearson(xs, ys)))
        worst = max(worst, abs(spearman(xs, ys) - brute_force_spearman(xs, ys)))
    xs = rng.normal(size=25)
    mono = spearman(xs, np.exp(3.0 * xs))
    p = pearson_pvalue(0.5, 20)
    p_quad = pvalue_by_quadrature(0.5, 20)
    ok = (
        worst <= 1e-12
        and mono == pytest.approx(1.0, abs=1e-12)
        and abs(p - 0.02479) <= 1e-4
        and abs(p - p_quad) <= 1e-8
    )
    report(6, "correlation oracles", ok,
           f"worst brute-force gap={worst:.2e}, monotone spearman={mono:.12f}, "
           f"p(0.5,20)={p:.6f} vs quadrature {p_quad:.6f}")


# --- 7 & 8: direction-of-effect training ------------------------------------------------


@pytest.fixture(scope="module")
def effect_run():
    t0 = time.time()
    docs = synthdata.make_corpus(2000, seed=42)
    config = TrainConfig(attention="pos", dim=25, epochs=3, batch_size=25,
                         optimizer="adagrad", lr=0.2, seed=42, init_scale=0.1)
    bundle = train_scbow(docs, config)
    return bundle, time.time() - t0


def test_criterion_07_content_tags_win(effect_run):
    bundle, train_time = effect_run
    pairs = synthdata.make_sts_pairs(200, seed=202)
    examples = [StsExample(g, s1, s2) for g, s1, s2 in pairs]
    att = SentenceEmbedder(bundle, kind="pos")
    uni = SentenceEmbedder(bundle, kind="uniform")
    r_att = eval_sts(examples, att).pearson
    r_uni = eval_sts(examples, uni).pearson
    content_sum = content_n = function_sum = function_n = 0.0
    for ex in examples:
        for s in (ex.s1, ex.s2):
            for tok, w in zip(s.tokens, att.weights(s)):
                if tok.pos in synthdata.CONTENT_TAGS:
                    content_sum += w
                    content_n += 1
                else:
                    function_sum += w
                    function_n += 1
    margin = content_sum / content_n - function_sum / function_n
    ok = margin >= 0.02 and r_att >= r_uni + 0.03 and train_time < 180.0
    report(7, "attention finds content tags", ok,
           f"attention margin={margin:+.4f} (needs >= 0.02), "
           f"pearson att={r_att:.3f} vs uniform={r_uni:.3f} (needs +0.03), "
           f"train {train_time:.0f}s")


def test_criterion_08_demo_sentence_weight_order(effect_run):
    bundle, _ = effect_run
    att = SentenceEmbedder(bundle, kind="pos")
    demo = synthdata.demo_sentence()
    weights = att.weights(demo)
    content_min = min(w for w, t in zip(weights, demo.tokens)
                      if t.pos in synthdata.CONTENT_TAGS)
    function_max = max(w for w, t in zip(weights, demo.tokens)
                       if t.pos in synthdata.FUNCTION_TAGS)
    ok = content_min > function_max
    report(8, "demo sentence content words outweigh function words", ok,
           f"min content weight={content_min:.4f} > max function weight={function_max:.4f}")


# --- 9: reading-time harness -----------------------------------------------------------


def test_criterion_09_reading_time_harness(effect_run):
    t0 = time.time()
    bundle, _ = effect_run
    att = SentenceEmbedder(bundle, kind="pos")
    rng = np.random.default_rng(99)
    sentences = []
    total = 0
    while total < 2000:
        s = synthdata.make_sentence(rng, int(rng.integers(3)))
        sentences.append(s)
        total += len(s)
    exact_records = []
    noisy_records = []
    all_w = np.concatenate([att.weights(s) for s in sentences])
    sigma = 0.2 * float(all_w.std())
    for s in sentences:
        w = np.asarray(att.weights(s), dtype=float)
        exact = w + 1.0  # positive shift; correlations unaffected
        noisy = exact + rng.normal(0.0, sigma, size=w.shape)
        noisy = np.maximum(noisy, 0.0)
        exact_records.append(ReadingTimeRecord(s, exact, exact.copy(), exact.copy()))
        noisy_records.append(ReadingTimeRecord(s, noisy, noisy.copy(), noisy.copy()))
    exact_rep = eval_reading_time(exact_records, att)["fpass"]
    noisy_rep = eval_reading_time(noisy_records, att)["fpass"]
    elapsed = time.time() - t0
    ok = (
        abs(exact_rep.pearson - 1.0) <= 1e-12
        and abs(exact_rep.spearman - 1.0) <= 1e-12
        and noisy_rep.pearson > 0.9
        and noisy_rep.pvalue < 1e-4
        and noisy_rep.star == "*"
        and elapsed < 10.0
    )
    report(9, "reading-time harness", ok,
           f"exact r={exact_rep.pearson:.15f}/{exact_rep.spearman:.15f}, "
           f"noisy r={noisy_rep.pearson:.3f} (n={noisy_rep.n}), "
           f"p={noisy_rep.pvalue:.2e} starred={noisy_rep.star!r}, {elapsed:.1f}s")


# --- 10: determinism ---------------------------------------------------------------------


def test_criterion_10_byte_identical_runs(tmp_path, monkeypatch, capsys):
    from attnsent import cli

    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ATTNSENT_SEED", raising=False)
    corpus_lines = []
    for d, doc in enumerate(synthdata.make_corpus(60, seed=5)):
        corpus_lines += [s.text() for s in doc] + [""]
    (tmp_path / "c.txt").write_text("\n".join(corpus_lines), encoding="utf-8")
    sts_lines = [
        f"{g}\t{s1.text()}\t{s2.text()}" for g, s1, s2 in synthdata.make_sts_pairs(20, seed=6)
    ]
    (tmp_path / "d.tsv").write_text("\n".join(sts_lines) + "\n", encoding="utf-8")

    train_args = ["train", "scbow", "--corpus", "c.txt", "--attention", "pos",
                  "--dim", "8", "--epochs", "2", "--batch", "5", "--seed", "42",
                  "--optimizer", "adagrad", "-o", "bundle"]
    eval_args = ["eval", "sts", "d.tsv", "--bundle", "bundle",
                 "--attention", "pos", "--report", "report.tsv"]
    snapshots = []
    for _ in range(2):
        assert cli.main(train_args) == 0
        assert cli.main(eval_args) == 0
        snapshots.append({
            name: (tmp_path / "bundle" / name).read_bytes()
            for name in ("meta.txt", "words.vec", "pos.vec")
        } | {"report": (tmp_path / "report.tsv").read_bytes()})
    ok = snapshots[0] == snapshots[1]
    report(10, "byte-identical repeated runs", ok,
           f"{len(snapshots[0])} artifacts compared")


# --- 11: negative mining -------------------------------------------------------------------


def test_criterion_11_mining_equals_exhaustive():
    rng = np.random.default_rng(17)
    checked = 0
    mismatches = 0
    for _ in range(100):
        n_pairs = int(rng.integers(2, 9))
        dim = int(rng.integers(2, 6))
        words = {f"p{j}": rng.normal(size=dim) for j in range(2 * n_pairs)}
        emb = EmbeddingTable.random(sorted(words), dim=dim, seed=0, scale=0.0)
        for w, v in words.items():
            emb.matrix[emb.vocab.index[w]] = v
        bundle = ModelBundle(embeddings=emb, attention_kind="uniform")
        pairs = [
            (TaggedSentence([TaggedToken(f"p{2 * i}", "X")]),
             TaggedSentence([TaggedToken(f"p{2 * i + 1}", "X")]))
            for i in range(n_pairs)
        ]
        got = mine_negatives(pairs, bundle)
        vecs = [words[f"p{j}"] for j in range(2 * n_pairs)]
        for i, (t1, t2) in enumerate(got):
            for slot, t in ((2 * i, t1), (2 * i + 1, t2)):
                best, best_dot = None, -np.inf
                for j, v in enumerate(vecs):
                    if j in (2 * i, 2 * i + 1):
                        continue
                    d = float(np.dot(vecs[slot], v))
                    if d > best_dot:  # ties keep the lowest index
                        best, best_dot = j, d
                checked += 1
                if t != best:
                    mismatches += 1
    ok = mismatches == 0
    report(11, "hard-negative mining equals exhaustive argmax", ok,
           f"{checked} selections over 100 batches, {mismatches} mismatches")
