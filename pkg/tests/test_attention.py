import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsent import attention
from attnsent.attention import (
    SentenceEmbedder,
    att_sur,
    att_tag,
    att_tfidf,
    att_uniform,
    build_tfidf_index,
    compose,
    tfidf_scores,
)
from attnsent.core import (
    DataError,
    DimensionError,
    EmbeddingTable,
    ModelBundle,
    TagTable,
    TaggedSentence,
    TaggedToken,
    cosine,
    init_tag_table,
)

from conftest import make_sentence, random_tagged_sentence


class TestUniform:
    def test_four_tokens(self):
        s = make_sentence("a/DT b/NN c/VB d/NN")
        assert np.allclose(att_uniform(s), [0.25] * 4)

    def test_single_token(self):
        assert np.allclose(att_uniform(make_sentence("a/DT")), [1.0])

    def test_matches_plain_average_cosine(self, tiny_table):
        s = make_sentence("alpha/N beta/V gamma/N")
        g = compose(s, att_uniform(s), tiny_table)
        plain = np.mean([tiny_table.vector(w) for w in s.words], axis=0)
        assert cosine(g, plain) == pytest.approx(1.0, abs=1e-12)


class TestSurprisalAttention:
    def test_constant_surprisal_is_uniform(self):
        for const in (0.0, 3.7, 10.0):
            w = att_sur([const] * 5)
            assert np.allclose(w, 0.2, atol=1e-12)

    def test_two_value_softmax(self):
        w = att_sur([2.0, 0.0])
        e2 = math.exp(2.0)
        assert w[0] == pytest.approx(e2 / (e2 + 1.0), abs=1e-12)
        assert w[0] == pytest.approx(0.880797, abs=1e-6)
        assert w[1] == pytest.approx(0.119203, abs=1e-6)

    def test_clip_ceiling_case(self):
        w = att_sur([10.0, 0.0, 0.0])
        e10 = math.exp(10.0)
        assert w[0] == pytest.approx(e10 / (e10 + 2.0), abs=1e-12)
        assert w[0] == pytest.approx(0.999909, abs=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            att_sur([])


class TestTagAttention:
    def test_zero_tag_vectors_give_uniform(self, tiny_table):
        tags = TagTable(["N", "V", "<unk>"], np.zeros((3, 2)), kind="pos")
        s = make_sentence("alpha/N beta/V gamma/N")
        assert np.allclose(att_tag(s, tiny_table, tags), 1.0 / 3.0, atol=1e-12)

    def test_weight_order_follows_tag_dots(self):
        # identical word vector everywhere: ordering decided by tag vectors
        vocab_words = ["w"]
        table = EmbeddingTable.random(vocab_words, dim=3, seed=0)
        table.matrix[table.vocab.index["w"]] = (1.0, 1.0, 1.0)
        tags = TagTable(
            ["A", "B", "C", "<unk>"],
            np.array([[3.0, 0, 0], [2.0, 0, 0], [1.0, 0, 0], [0, 0, 0]]),
            kind="pos",
        )
        s = make_sentence("w/C w/A w/B")
        w = att_tag(s, table, tags)
        assert w[1] > w[2] > w[0]

    def test_hand_computed_two_token_case(self, tiny_table, tiny_tag_table):
        # words (1,0) and (0,1); tags (2,0) and (0,1) -> logits (2, 1)
        s = make_sentence("alpha/N beta/V")
        w = att_tag(s, tiny_table, tiny_tag_table)
        assert w[0] == pytest.approx(0.731059, abs=1e-6)
        assert w[1] == pytest.approx(0.268941, abs=1e-6)

    def test_dim_mismatch_rejected(self, tiny_table):
        tags = TagTable(["N", "<unk>"], np.zeros((2, 5)), kind="pos")
        with pytest.raises(DimensionError):
            att_tag(make_sentence("alpha/N"), tiny_table, tags)

    def test_unknown_tag_uses_unk_row(self, tiny_table):
        tags = TagTable(["N", "<unk>"], np.array([[2.0, 0.0], [0.5, 0.5]]), kind="pos")
        s1 = make_sentence("alpha/WEIRD beta/N")
        s2 = make_sentence("alpha/<unk> beta/N")
        assert np.allclose(att_tag(s1, tiny_table, tags), att_tag(s2, tiny_table, tags))

    def test_ccg_kind_reads_ccg_tags(self, tiny_table):
        tags = TagTable(["X", "Y", "<unk>"], np.array([[1.0, 0], [0, 1.0], [0, 0]]),
                        kind="ccg")
        s = TaggedSentence([
            TaggedToken("alpha", "N", ccg="X"),
            TaggedToken("beta", "N", ccg="Y"),
        ])
        w = att_tag(s, tiny_table, tags, kind="ccg")
        # logits: alpha.(1,0)=1, beta.(0,1)=1 -> uniform
        assert np.allclose(w, 0.5, atol=1e-12)


class TestTfIdf:
    def test_document_frequency_counts_sentences(self):
        sents = [
            make_sentence("cat/NN sat/VB cat/NN"),
            make_sentence("cat/NN ran/VB"),
            make_sentence("dog/NN sat/VB"),
        ]
        index = build_tfidf_index(sents)
        assert index.doc_count == 3
        assert index.df["cat"] == 2  # once per sentence despite repetition
        assert index.df["sat"] == 2
        assert index.df["dog"] == 1

    def test_word_in_every_sentence_has_zero_idf(self):
        sents = [make_sentence("cat/NN sat/VB"), make_sentence("cat/NN ran/VB")]
        index = build_tfidf_index(sents)
        assert index.df["cat"] == index.doc_count
        assert index.idf("cat") == 0.0
        s = make_sentence("cat/NN sat/VB")
        assert tfidf_scores(s, index)[0] == 0.0

    def test_df_table_matches_hand_count(self):
        sents = [
            make_sentence("a/DT b/NN"),
            make_sentence("a/DT c/NN"),
            make_sentence("b/NN c/NN"),
            make_sentence("a/DT a/DT d/NN"),
            make_sentence("e/NN"),
        ]
        index = build_tfidf_index(sents)
        assert index.df == {"a": 3, "b": 2, "c": 2, "d": 1, "e": 1}

    def test_equal_scores_give_uniform(self):
        sents = [make_sentence("x/N y/N"), make_sentence("x/N y/N z/N")]
        index = build_tfidf_index(sents)
        w = att_tfidf(make_sentence("x/N y/N"), index)
        assert np.allclose(w, 0.5, atol=1e-12)

    def test_hand_computed_softmax(self):
        # scores (ln 3, 0) under N=3, df=(1, 3)
        sents = [
            make_sentence("rare/N common/N"),
            make_sentence("common/N other/N"),
            make_sentence("common/N more/N"),
        ]
        index = build_tfidf_index(sents)
        w = att_tfidf(make_sentence("rare/N common/N"), index)
        assert w[0] == pytest.approx(0.75, abs=1e-12)
        assert w[1] == pytest.approx(0.25, abs=1e-12)

    def test_unindexed_word_df_one(self):
        sents = [make_sentence("a/N b/N"), make_sentence("a/N c/N")]
        index = build_tfidf_index(sents)
        s = make_sentence("unseen/N a/N")
        scores = tfidf_scores(s, index)
        assert scores[0] == pytest.approx(math.log(2.0))


class TestCompose:
    def test_single_token_is_word_vector(self, tiny_table):
        s = make_sentence("gamma/N")
        assert np.allclose(compose(s, [1.0], tiny_table), tiny_table.vector("gamma"))

    def test_hand_arithmetic(self, tiny_table):
        # vecs (2,0), (0,4); weights (0.75, 0.25) -> 0.5 * (1.5, 1.0)
        s = make_sentence("gamma/N delta/V")
        g = compose(s, [0.75, 0.25], tiny_table)
        assert np.allclose(g, [0.75, 0.5], atol=1e-12)

    def test_length_factor_toggle_scales_only(self, tiny_table):
        s = make_sentence("gamma/N delta/V alpha/N")
        w = np.array([0.5, 0.3, 0.2])
        with_f = compose(s, w, tiny_table, length_factor=True)
        without = compose(s, w, tiny_table, length_factor=False)
        assert np.allclose(without, 3.0 * with_f, atol=1e-12)

    def test_weight_length_mismatch(self, tiny_table):
        with pytest.raises(DimensionError):
            compose(make_sentence("alpha/N"), [0.5, 0.5], tiny_table)

    def test_linear_in_embedding_table(self, tiny_table):
        rng = np.random.default_rng(4)
        a = EmbeddingTable(tiny_table.vocab, rng.normal(size=tiny_table.matrix.shape))
        b = EmbeddingTable(tiny_table.vocab, rng.normal(size=tiny_table.matrix.shape))
        ab = EmbeddingTable(tiny_table.vocab, a.matrix + b.matrix)
        s = make_sentence("alpha/N beta/V gamma/N")
        w = np.array([0.2, 0.5, 0.3])
        assert np.allclose(
            compose(s, w, ab),
            compose(s, w, a) + compose(s, w, b),
            atol=1e-12,
        )


WORDS = [f"w{i}" for i in range(30)]
TAGS = ["NN", "VB", "JJ", "DT", "IN"]


@st.composite
def sentences(draw):
    n = draw(st.integers(min_value=1, max_value=40))
    rng = np.random.default_rng(draw(st.integers(min_value=0, max_value=2**31)))
    return random_tagged_sentence(rng, WORDS, TAGS, n)


@pytest.fixture(scope="module")
def prop_bundle():
    emb = EmbeddingTable.random(WORDS, dim=10, seed=5, scale=0.5)
    tags = init_tag_table(TAGS, 10, seed=6)
    tags.matrix[:] = np.random.default_rng(7).normal(0, 0.5, tags.matrix.shape)
    return ModelBundle(embeddings=emb, pos_tags=tags, attention_kind="pos")


class TestDistributionProperties:
    @settings(max_examples=60, deadline=None)
    @given(sentence=sentences())
    def test_all_schemes_sum_to_one_and_positive(self, sentence, prop_bundle_cached):
        bundle, index = prop_bundle_cached
        for weights in self._all_weights(sentence, bundle, index):
            assert weights.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(weights > 0.0)

    @staticmethod
    def _all_weights(sentence, bundle, index):
        yield att_uniform(sentence)
        yield att_sur(sentence.surprisals)
        yield att_tag(sentence, bundle.embeddings, bundle.pos_tags)
        yield att_tfidf(sentence, index)

    @settings(max_examples=40, deadline=None)
    @given(sentence=sentences(), shift=st.floats(min_value=-20, max_value=20))
    def test_softmax_shift_invariance(self, sentence, shift):
        base = np.asarray(sentence.surprisals)
        w0 = att_sur(base)
        w1 = attention.kernels.softmax(base + shift)
        assert np.allclose(w0, w1, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(sentence=sentences())
    def test_argmax_preserved(self, sentence, prop_bundle_cached):
        bundle, _ = prop_bundle_cached
        scores = np.asarray(sentence.surprisals)
        weights = att_sur(scores)
        assert np.argmax(weights) == np.argmax(scores)


@pytest.fixture(scope="module")
def prop_bundle_cached(prop_bundle):
    rng = np.random.default_rng(11)
    corpus = [random_tagged_sentence(rng, WORDS, TAGS, int(rng.integers(1, 12)))
              for _ in range(40)]
    return prop_bundle, build_tfidf_index(corpus)


class TestCosineScaleInvariance:
    def test_length_factor_never_changes_cosines(self, prop_bundle):
        rng = np.random.default_rng(12)
        for _ in range(30):
            s1 = random_tagged_sentence(rng, WORDS, TAGS, int(rng.integers(1, 15)))
            s2 = random_tagged_sentence(rng, WORDS, TAGS, int(rng.integers(1, 15)))
            w1 = att_tag(s1, prop_bundle.embeddings, prop_bundle.pos_tags)
            w2 = att_tag(s2, prop_bundle.embeddings, prop_bundle.pos_tags)
            a = cosine(compose(s1, w1, prop_bundle.embeddings, True),
                       compose(s2, w2, prop_bundle.embeddings, True))
            b = cosine(compose(s1, w1, prop_bundle.embeddings, False),
                       compose(s2, w2, prop_bundle.embeddings, False))
            assert a == pytest.approx(b, abs=1e-12)

    def test_uniform_weight_rescaling_never_changes_cosines(self, prop_bundle):
        rng = np.random.default_rng(13)
        for scale in (0.1, 3.0, 250.0):
            s1 = random_tagged_sentence(rng, WORDS, TAGS, 9)
            s2 = random_tagged_sentence(rng, WORDS, TAGS, 4)
            w1 = att_sur(s1.surprisals)
            w2 = att_sur(s2.surprisals)
            a = cosine(compose(s1, w1, prop_bundle.embeddings),
                       compose(s2, w2, prop_bundle.embeddings))
            b = cosine(compose(s1, scale * w1, prop_bundle.embeddings),
                       compose(s2, scale * w2, prop_bundle.embeddings))
            assert a == pytest.approx(b, abs=1e-12)


class TestSentenceEmbedder:
    def test_dispatch_matches_direct_calls(self, prop_bundle, prop_bundle_cached):
        _, index = prop_bundle_cached
        rng = np.random.default_rng(14)
        s = random_tagged_sentence(rng, WORDS, TAGS, 6)
        for kind, direct in [
            ("uniform", att_uniform(s)),
            ("sur", att_sur(s.surprisals)),
            ("pos", att_tag(s, prop_bundle.embeddings, prop_bundle.pos_tags)),
            ("tfidf", att_tfidf(s, index)),
        ]:
            emb = SentenceEmbedder(prop_bundle, kind=kind, tfidf_index=index)
            assert np.allclose(emb.weights(s), direct, atol=1e-15)

    def test_sur_without_lm_or_surprisal_fails(self, prop_bundle):
        s = make_sentence("w0/NN w1/VB")
        emb = SentenceEmbedder(prop_bundle, kind="sur")
        with pytest.raises(Exception):
            emb.weights(s)

    def test_all_oov_detection(self, prop_bundle):
        emb = SentenceEmbedder(prop_bundle, kind="uniform")
        assert emb.all_oov(make_sentence("zzz/NN qqq/VB"))
        assert not emb.all_oov(make_sentence("zzz/NN w0/VB"))
