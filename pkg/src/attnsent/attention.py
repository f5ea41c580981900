"""Per-token attention weights and weighted sentence composition.

Four weighting schemes produce a strictly positive distribution over the
sentence positions:

- uniform: every position 1/n (plain word averaging);
- sur: softmax over clipped per-token surprisal values;
- pos/ccg: softmax over dot products of each word vector with its tag
  vector (the denominator runs over the sentence positions, each scored
  with its own word/tag pair);
- tfidf: softmax over tf * ln(N/df) scores, each sentence treated as one
  document.

Composition is g(x) = (1/n) * sum_t weight_t * vec(x_t). The 1/n factor is
kept by default; it rescales the vector uniformly, so any cosine-based
comparison is provably unaffected (`length_factor=False` drops it for
ablation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from attnsent import kernels
from attnsent.core import (
    ConfigError,
    DataError,
    DimensionError,
    EmbeddingTable,
    ModelBundle,
    TagTable,
    TaggedSentence,
)


def att_uniform(sentence) -> np.ndarray:
    n = len(sentence)
    return np.full(n, 1.0 / n)


def att_sur(surprisals) -> np.ndarray:
    """Softmax over surprisal values (callers clip to [0, 10] first)."""
    s = np.ascontiguousarray(surprisals, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] == 0:
        raise DataError("need at least one surprisal value")
    return kernels.softmax(s)


def tag_logits(sentence, embeddings: EmbeddingTable, tags: TagTable, kind="pos") -> np.ndarray:
    """Per-position word-vector . tag-vector scores."""
    if embeddings.dim != tags.dim:
        raise DimensionError(
            f"embedding dim {embeddings.dim} != tag-vector dim {tags.dim}"
        )
    word_ids = embeddings.word_ids(sentence.words)
    tag_ids = tags.tag_ids(sentence.pos_tags if kind == "pos" else sentence.ccg_tags)
    return kernels.pair_dots(embeddings.matrix, word_ids, tags.matrix, tag_ids)


def att_tag(sentence, embeddings: EmbeddingTable, tags: TagTable, kind="pos") -> np.ndarray:
    return kernels.softmax(tag_logits(sentence, embeddings, tags, kind=kind))


@dataclass
class TfIdfIndex:
    """Sentence-level document frequencies: each sentence is one document."""

    doc_count: int
    df: dict

    def idf(self, word: str) -> float:
        # a word missing from the index counts as occurring in one document
        return math.log(self.doc_count / self.df.get(word, 1))


def build_tfidf_index(sentences) -> TfIdfIndex:
    sentences = list(sentences)
    if not sentences:
        raise DataError("cannot build a tf-idf index from no sentences")
    df: dict[str, int] = {}
    for sent in sentences:
        words = sent.words if isinstance(sent, TaggedSentence) else sent
        for w in set(words):
            df[w] = df.get(w, 0) + 1
    return TfIdfIndex(doc_count=len(sentences), df=df)


def tfidf_scores(sentence, index: TfIdfIndex) -> np.ndarray:
    words = sentence.words
    tf: dict[str, int] = {}
    for w in words:
        tf[w] = tf.get(w, 0) + 1
    return np.array([tf[w] * index.idf(w) for w in words], dtype=np.float64)


def att_tfidf(sentence, index: TfIdfIndex) -> np.ndarray:
    return kernels.softmax(tfidf_scores(sentence, index))


def compose(sentence, weights, embeddings: EmbeddingTable, length_factor=True) -> np.ndarray:
    """Weighted sum of word vectors, scaled by 1/n unless disabled."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n = len(sentence)
    if weights.shape != (n,):
        raise DimensionError(
            f"got {weights.shape[0] if weights.ndim == 1 else weights.shape} weights "
            f"for a {n}-token sentence"
        )
    ids = embeddings.word_ids(sentence.words)
    scale = 1.0 / n if length_factor else 1.0
    return kernels.weighted_rowsum(embeddings.matrix, ids, weights, scale)


class SentenceEmbedder:
    """Single composition path shared by evaluation, analysis and the CLI.

    Resolves the attention scheme against a bundle, attaches surprisals on
    demand (via a language model's `sentence_surprisals`), and exposes both
    the per-token weights and the composed vector.
    """

    def __init__(self, bundle: ModelBundle, kind=None, lm_model=None,
                 tfidf_index=None, length_factor=True):
        self.bundle = bundle
        self.kind = kind or bundle.attention_kind
        self.lm_model = lm_model
        self.tfidf_index = tfidf_index
        self.length_factor = length_factor
        if self.kind not in ("uniform", "sur", "pos", "ccg", "tfidf"):
            raise ConfigError(f"unknown attention kind {self.kind!r}")
        if self.kind in ("pos", "ccg"):
            self.tags = bundle.tag_table(self.kind)
        else:
            self.tags = None
        if self.kind == "tfidf" and tfidf_index is None:
            raise ConfigError("tfidf attention needs a tf-idf index")

    def weights(self, sentence) -> np.ndarray:
        if self.kind == "uniform":
            return att_uniform(sentence)
        if self.kind == "sur":
            return att_sur(self._surprisals(sentence))
        if self.kind == "tfidf":
            return att_tfidf(sentence, self.tfidf_index)
        return att_tag(sentence, self.bundle.embeddings, self.tags, kind=self.kind)

    def vector(self, sentence) -> np.ndarray:
        return compose(sentence, self.weights(sentence), self.bundle.embeddings,
                       length_factor=self.length_factor)

    def _surprisals(self, sentence):
        if sentence.has_surprisals:
            return sentence.surprisals
        if self.lm_model is None:
            raise ConfigError(
                "surprisal attention needs a language model or pre-attached surprisals"
            )
        from attnsent.lm import clip_surprisal

        return [clip_surprisal(s) for s in self.lm_model.sentence_surprisals(sentence)]

    def all_oov(self, sentence) -> bool:
        vocab = self.bundle.embeddings.vocab
        return all(w not in vocab for w in sentence.words)
