"""Order-n language model with interpolated modified Kneser-Ney smoothing.

Per-token surprisal is the negative natural log of the model probability of
the token given its left context.

Smoothing conventions, fixed here and mirrored by the brute-force reference
model in the test suite:

- each sentence is padded with (order-1) begin markers and one end marker;
- the begin marker appears only in contexts, never as a predicted event;
- the top-order distribution uses raw window counts, lower orders use
  continuation counts (distinct preceding word types);
- the unigram level interpolates with a uniform floor over predictable
  words (the vocabulary minus the begin marker), so every in-vocabulary
  word has strictly positive probability under every context;
- per-order discounts: Y = n1/(n1 + 2 n2), D1 = 1 - 2 Y n2/n1,
  D2 = 2 - 3 Y n3/n2, D3+ = 3 - 4 Y n4/n3, where nk is the number of
  k-count grams at that order. If any nk needed is zero, or a discount
  comes out non-positive, fall back to the single discount
  D = n1/(n1 + 2 n2); if that is also degenerate, D = 0.5.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from attnsent.core import (
    DataError,
    ParseError,
    TaggedSentence,
    Vocabulary,
    atomic_write_text,
    fmt_float,
)

SURPRISAL_CAP = 10.0


def clip_surprisal(s: float) -> float:
    """Clamp a surprisal value into [0, 10]."""
    return min(max(0.0, s), SURPRISAL_CAP)


@dataclass
class Discounts:
    """Count-dependent discounts for one n-gram order."""

    d1: float
    d2: float
    d3: float

    def for_count(self, c: int) -> float:
        if c == 0:
            return 0.0
        if c == 1:
            return self.d1
        if c == 2:
            return self.d2
        return self.d3

    def as_tuple(self):
        return (self.d1, self.d2, self.d3)


def estimate_discounts(count_of_counts: Counter) -> Discounts:
    n1, n2, n3, n4 = (count_of_counts[k] for k in (1, 2, 3, 4))
    if n1 > 0 and n2 > 0 and n3 > 0 and n4 > 0:
        y = n1 / (n1 + 2.0 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
        if d1 > 0.0 and d2 > 0.0 and d3 > 0.0:
            return Discounts(d1, d2, d3)
    if n1 > 0:
        d = n1 / (n1 + 2.0 * n2)
        return Discounts(d, d, d)
    return Discounts(0.5, 0.5, 0.5)


class NGramCounts:
    """Raw window counts of every k-gram, k = 1..order, over padded id
    sequences. All windows are counted, so every prefix of a counted gram is
    itself counted."""

    def __init__(self, order: int):
        if order < 1:
            raise DataError(f"order must be >= 1, got {order}")
        self.order = order
        self.tables: list[Counter] = [Counter() for _ in range(order)]

    def add_sequence(self, ids) -> None:
        for k in range(1, self.order + 1):
            table = self.tables[k - 1]
            for i in range(len(ids) - k + 1):
                table[tuple(ids[i : i + k])] += 1

    def table(self, k: int) -> Counter:
        return self.tables[k - 1]


class KNModel:
    """Immutable modified-KN model; `prob` and surprisal are pure."""

    def __init__(self, vocab: Vocabulary, counts: NGramCounts, discounts=None, meta=None):
        self.vocab = vocab
        self.counts = counts
        self.order = counts.order
        self.meta = dict(meta) if meta else {}
        # every id except the begin marker can be predicted
        self.n_predictable = len(vocab) - 1
        self._build_tables()
        if discounts is None:
            self.discounts = [
                estimate_discounts(Counter(self._adjusted_values(k)))
                for k in range(1, self.order + 1)
            ]
        else:
            self.discounts = list(discounts)
            if len(self.discounts) != self.order:
                raise DataError("need one discount triple per order")
        self._finalize()

    def _build_tables(self):
        bos = self.vocab.bos_id
        order = self.order
        # events[k-1]: context tuple -> {word id -> adjusted count}
        self.events: list[dict] = [dict() for _ in range(order)]
        top = self.events[order - 1]
        for gram, c in self.counts.table(order).items():
            w = gram[-1]
            if w == bos:
                continue
            top.setdefault(gram[:-1], {})[w] = c
        for k in range(1, order):
            ev = self.events[k - 1]
            # continuation counts: distinct first words of (k+1)-gram windows
            seen: dict = {}
            for gram in self.counts.table(k + 1):
                if gram[-1] == bos:
                    continue
                seen.setdefault(gram[1:], set()).add(gram[0])
            for gram, preceders in seen.items():
                ev.setdefault(gram[:-1], {})[gram[-1]] = len(preceders)
        self.totals: list[dict] = [
            {ctx: sum(words.values()) for ctx, words in ev.items()} for ev in self.events
        ]

    def _adjusted_values(self, k: int):
        for words in self.events[k - 1].values():
            yield from words.values()

    def _finalize(self):
        # gamma numerators (total discounted mass) per observed context
        self.gamma_mass: list[dict] = []
        for k in range(1, self.order + 1):
            ds = self.discounts[k - 1]
            self.gamma_mass.append(
                {
                    ctx: sum(ds.for_count(c) for c in words.values())
                    for ctx, words in self.events[k - 1].items()
                }
            )

    def observed_contexts(self, k: int):
        """Contexts (length k-1 id tuples) observed at order k."""
        return list(self.events[k - 1].keys())

    def prob_ids(self, wid: int, ctx_ids) -> float:
        ctx = tuple(ctx_ids)
        if self.order > 1:
            ctx = ctx[-(self.order - 1) :]
        else:
            ctx = ()
        k = len(ctx) + 1
        uniform = 1.0 / self.n_predictable
        p = uniform
        # unwind the recursion bottom-up: p_k = disc_k + gamma_k * p_{k-1}
        for level in range(1, k + 1):
            c_tuple = ctx[len(ctx) - (level - 1) :] if level > 1 else ()
            total = self.totals[level - 1].get(c_tuple)
            if not total:
                continue
            ds = self.discounts[level - 1]
            c = self.events[level - 1][c_tuple].get(wid, 0)
            gamma = self.gamma_mass[level - 1][c_tuple] / total
            p = max(c - ds.for_count(c), 0.0) / total + gamma * p
        return p

    def prob(self, word: str, context) -> float:
        """P(word | context); unknown words map to the unknown token, long
        contexts are truncated to the rightmost order-1 words."""
        wid = self.vocab.id(word)
        ctx_ids = [self.vocab.id(w) for w in context]
        return self.prob_ids(wid, ctx_ids)

    def sentence_surprisals(self, sentence) -> list[float]:
        """Unclipped surprisal -ln P(x_t | x_1..x_{t-1}) per real token.

        `sentence` is a TaggedSentence or a list of word strings. The end
        marker is not scored; begin markers pad the left context.
        """
        words = sentence.words if isinstance(sentence, TaggedSentence) else list(sentence)
        ids = [self.vocab.bos_id] * (self.order - 1) + [self.vocab.id(w) for w in words]
        out = []
        for t in range(self.order - 1, len(ids)):
            p = self.prob_ids(ids[t], ids[max(0, t - (self.order - 1)) : t])
            out.append(-math.log(p))
        return out


def build(corpus, order=5, vocab_min_count=1) -> KNModel:
    """Count a tagged (or plain word-list) corpus and fit the smoothing.

    Words occurring fewer than `vocab_min_count` times are replaced by the
    unknown token before counting.
    """
    sentences = [s.words if isinstance(s, TaggedSentence) else list(s) for s in corpus]
    if not sentences:
        raise DataError("cannot build a language model from an empty corpus")
    if order < 1:
        raise DataError(f"order must be >= 1, got {order}")
    freq = Counter(w for s in sentences for w in s)
    kept = sorted(w for w, c in freq.items() if c >= vocab_min_count)
    vocab = Vocabulary(kept)
    counts = NGramCounts(order)
    keep_set = set(kept)
    for s in sentences:
        ids = [vocab.bos_id] * (order - 1)
        ids += [vocab.index[w] if w in keep_set else vocab.unk_id for w in s]
        ids.append(vocab.eos_id)
        counts.add_sequence(ids)
    return KNModel(vocab, counts)


def attach_surprisals(sentences, model: KNModel) -> None:
    """Set each token's surprisal to its clipped model surprisal."""
    for sent in sentences:
        for tok, s in zip(sent.tokens, model.sentence_surprisals(sent)):
            tok.surprisal = clip_surprisal(s)


# --- serialization -----------------------------------------------------------
#
# Text format, one record per line:
#   order <TAB> n
#   meta <TAB> key <TAB> value    (free-form provenance, sorted by key)
#   discounts <TAB> k <TAB> D1 <TAB> D2 <TAB> D3
#   vocab <TAB> word              (in id order)
#   ngram <TAB> k <TAB> w1 .. wk <TAB> count   (sorted within each order)


def save_lm(model: KNModel, path) -> None:
    lines = [f"order\t{model.order}"]
    for k in sorted(model.meta):
        lines.append(f"meta\t{k}\t{model.meta[k]}")
    for k, ds in enumerate(model.discounts, start=1):
        lines.append(
            "discounts\t%d\t%s\t%s\t%s"
            % (k, fmt_float(ds.d1), fmt_float(ds.d2), fmt_float(ds.d3))
        )
    for w in model.vocab.words:
        lines.append(f"vocab\t{w}")
    for k in range(1, model.order + 1):
        entries = [
            (" ".join(model.vocab.word(i) for i in gram), c)
            for gram, c in model.counts.table(k).items()
        ]
        for text, c in sorted(entries):
            lines.append(f"ngram\t{k}\t{text}\t{c}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_lm(path) -> KNModel:
    order = None
    discount_rows: dict[int, Discounts] = {}
    words: list[str] = []
    grams: list[tuple[int, list[str], int]] = []
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            fields = raw.split("\t")
            kind = fields[0]
            try:
                if kind == "order":
                    order = int(fields[1])
                elif kind == "meta":
                    meta[fields[1]] = fields[2]
                elif kind == "discounts":
                    discount_rows[int(fields[1])] = Discounts(
                        float(fields[2]), float(fields[3]), float(fields[4])
                    )
                elif kind == "vocab":
                    words.append(fields[1])
                elif kind == "ngram":
                    grams.append((int(fields[1]), fields[2].split(" "), int(fields[3])))
                else:
                    raise ParseError(f"unknown record type {kind!r}", path=path, line=lineno)
            except (IndexError, ValueError) as exc:
                raise ParseError(f"malformed {kind!r} record", path=path, line=lineno) from exc
    if order is None or not words:
        raise ParseError("missing order or vocab records", path=path)
    # the constructor keeps the given order and the file always carries the
    # special tokens, so ids survive the round trip
    vocab = Vocabulary(words)
    if vocab.words != words:
        raise ParseError("special tokens missing from vocab records", path=path)
    counts = NGramCounts(order)
    for k, gram_words, c in grams:
        if k < 1 or k > order:
            raise ParseError(f"ngram order {k} outside 1..{order}", path=path)
        try:
            gram = tuple(vocab.index[w] for w in gram_words)
        except KeyError as exc:
            raise ParseError(f"ngram word {exc.args[0]!r} not in vocab", path=path)
        if len(gram) != k:
            raise ParseError("ngram length does not match its order", path=path)
        counts.table(k)[gram] = c
    discounts = [discount_rows.get(k) for k in range(1, order + 1)]
    if any(d is None for d in discounts):
        raise ParseError("missing discounts record", path=path)
    return KNModel(vocab, counts, discounts=discounts, meta=meta)
