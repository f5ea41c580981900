import numpy as np
import pytest

from attnsent.core import (
    EmbeddingTable,
    ModelBundle,
    TagTable,
    TaggedSentence,
    TaggedToken,
    Vocabulary,
)


def make_sentence(spec):
    """'word/TAG word/TAG' or list of (word, pos[, ccg[, surprisal]])."""
    if isinstance(spec, str):
        toks = []
        for part in spec.split():
            word, tag = part.split("/")
            toks.append(TaggedToken(word, tag))
        return TaggedSentence(toks)
    return TaggedSentence([TaggedToken(*t) for t in spec])


@pytest.fixture
def tiny_table():
    """Four real words with hand-set 2-d vectors."""
    vocab = Vocabulary(["alpha", "beta", "gamma", "delta"])
    matrix = np.zeros((len(vocab), 2))
    matrix[vocab.index["alpha"]] = (1.0, 0.0)
    matrix[vocab.index["beta"]] = (0.0, 1.0)
    matrix[vocab.index["gamma"]] = (2.0, 0.0)
    matrix[vocab.index["delta"]] = (0.0, 4.0)
    return EmbeddingTable(vocab, matrix)


@pytest.fixture
def tiny_tag_table():
    matrix = np.zeros((3, 2))
    matrix[0] = (2.0, 0.0)  # N
    matrix[1] = (0.0, 1.0)  # V
    return TagTable(["N", "V", "<unk>"], matrix, kind="pos")


@pytest.fixture
def tiny_bundle(tiny_table, tiny_tag_table):
    return ModelBundle(
        embeddings=tiny_table, pos_tags=tiny_tag_table, attention_kind="pos"
    )


def random_tagged_sentence(rng, words, tags, n, with_surprisal=True):
    toks = []
    for _ in range(n):
        toks.append(
            TaggedToken(
                words[int(rng.integers(len(words)))],
                tags[int(rng.integers(len(tags)))],
                surprisal=float(rng.uniform(0.0, 10.0)) if with_surprisal else None,
            )
        )
    return TaggedSentence(toks)
