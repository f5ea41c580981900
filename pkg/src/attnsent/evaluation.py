"""Evaluation harness: STS scoring, reading-time correlation, and
attention/tag-vector analysis reports.

Correlation machinery is self-contained: sample Pearson, Spearman with
average-rank tie handling, and two-sided Pearson p-values through the
Student-t / regularized-incomplete-beta identity (continued-fraction
evaluation, absolute error below 1e-8).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from attnsent.core import (
    DataError,
    ParseError,
    TaggedSentence,
    cosine,
    parse_tagged_sentence,
    parse_tagged_token,
)

SIGNIFICANCE_LEVEL = 1e-4  # asterisk convention for reported p-values


# --- correlation primitives ---------------------------------------------------


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("correlation needs two equal-length vectors")
    if x.shape[0] < 3:
        raise DataError("correlation needs at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(np.dot(xc, xc)))
    sy = math.sqrt(float(np.dot(yc, yc)))
    if sx == 0.0 or sy == 0.0:
        raise DataError("correlation undefined for constant input")
    return float(np.dot(xc, yc) / (sx * sy))


def ranks(xs) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    x = np.asarray(xs, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    out = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        out[order[i : j + 1]] = avg
        i = j + 1
    return out


def spearman(xs, ys) -> float:
    return pearson(ranks(xs), ranks(ys))


def _betacf(a, b, x):
    # Lentz continued fraction for the regularized incomplete beta function
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise DataError("incomplete beta continued fraction failed to converge")


def incomplete_beta(a, b, x) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def pearson_pvalue(r, n) -> float:
    """Two-sided p-value for a sample Pearson r under the null, via the
    Student-t transform t = r sqrt((n-2)/(1-r^2))."""
    if n < 3:
        raise DataError("p-value needs n >= 3")
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    return incomplete_beta(0.5 * df, 0.5, df / (df + t2))


@dataclass
class CorrelationReport:
    pearson: float
    spearman: float
    pvalue: float
    n: int
    skipped: int = 0

    @property
    def significant(self) -> bool:
        return self.pvalue < SIGNIFICANCE_LEVEL

    @property
    def star(self) -> str:
        return "*" if self.significant else ""


# --- semantic textual similarity ----------------------------------------------


@dataclass
class StsExample:
    gold: float
    s1: TaggedSentence
    s2: TaggedSentence

    def __post_init__(self):
        if not np.isfinite(self.gold):
            raise DataError("gold similarity score must be finite")


def load_sts_file(path) -> list[StsExample]:
    """TSV: gold score, tagged sentence 1, tagged sentence 2."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                continue
            fields = stripped.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"expected 3 tab-separated fields, found {len(fields)}",
                    path=path,
                    line=lineno,
                )
            try:
                gold = float(fields[0])
            except ValueError:
                raise ParseError(f"bad gold score {fields[0]!r}", path=path, line=lineno)
            s1 = parse_tagged_sentence(fields[1], path=path, line=lineno)
            s2 = parse_tagged_sentence(fields[2], path=path, line=lineno)
            try:
                out.append(StsExample(gold, s1, s2))
            except DataError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
    if not out:
        raise ParseError("no examples found", path=path)
    return out


def score_pair(example, embedder):
    """(cosine of the two composed vectors, all-OOV warning flag). A pair
    whose sentences are both entirely out of vocabulary scores 0."""
    if embedder.all_oov(example.s1) and embedder.all_oov(example.s2):
        return 0.0, True
    return cosine(embedder.vector(example.s1), embedder.vector(example.s2)), False


@dataclass
class StsResult:
    pearson: float
    spearman: float
    n: int
    oov_pairs: int


def eval_sts(examples, embedder) -> StsResult:
    if len(examples) < 3:
        raise DataError("need at least 3 scorable pairs")
    golds = []
    preds = []
    oov = 0
    for ex in examples:
        score, flagged = score_pair(ex, embedder)
        oov += int(flagged)
        golds.append(ex.gold)
        preds.append(score)
    return StsResult(
        pearson=pearson(golds, preds),
        spearman=spearman(golds, preds),
        n=len(examples),
        oov_pairs=oov,
    )


def eval_sts_files(named_datasets, embedder):
    """Per-dataset results plus an unweighted average row.

    `named_datasets` is a list of (name, examples). Returns a list of
    (name, StsResult-or-None) with the average appended under the name
    'Average' (averaging Pearson/Spearman over the datasets).
    """
    rows = []
    for name, examples in named_datasets:
        rows.append((name, eval_sts(examples, embedder)))
    avg = StsResult(
        pearson=float(np.mean([r.pearson for _, r in rows])),
        spearman=float(np.mean([r.spearman for _, r in rows])),
        n=sum(r.n for _, r in rows),
        oov_pairs=sum(r.oov_pairs for _, r in rows),
    )
    rows.append(("Average", avg))
    return rows


# --- reading-time correlation ---------------------------------------------------

RT_MEASURES = ("fpass", "gopast", "rb")


@dataclass
class ReadingTimeRecord:
    """One sentence with per-token reading times in milliseconds (NaN where
    a measurement is missing)."""

    sentence: TaggedSentence
    fpass: np.ndarray
    gopast: np.ndarray
    rb: np.ndarray

    def __post_init__(self):
        n = len(self.sentence)
        for name in RT_MEASURES:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise DataError(f"{name} length {arr.shape} != sentence length {n}")
            setattr(self, name, arr)
        # go-past and right-bounded times include first-pass time
        for name in ("gopast", "rb"):
            other = getattr(self, name)
            bad = np.where(~np.isnan(other) & ~np.isnan(self.fpass) & (other < self.fpass))[0]
            if bad.size:
                raise DataError(
                    f"{name} < fpass at token {int(bad[0])} ({self.sentence.words[int(bad[0])]!r})"
                )


def _parse_rt(field, path, lineno):
    field = field.strip()
    if field in ("", "-", "NA"):
        return math.nan
    try:
        v = float(field)
    except ValueError:
        raise ParseError(f"bad reading time {field!r}", path=path, line=lineno)
    if v < 0:
        raise ParseError(f"negative reading time {field!r}", path=path, line=lineno)
    return v


def load_rt_file(path) -> list[ReadingTimeRecord]:
    """Per token: `word#POS[#CCG] TAB fpass TAB gopast TAB rb`, blank line
    between sentences."""
    records = []
    tokens, times, start_line = [], [], None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                if tokens:
                    records.append(_finish_rt(tokens, times, path, start_line))
                    tokens, times = [], []
                continue
            fields = stripped.split("\t")
            if len(fields) != 4:
                raise ParseError(
                    f"expected 4 tab-separated fields, found {len(fields)}",
                    path=path,
                    line=lineno,
                )
            if not tokens:
                start_line = lineno
            tokens.append(parse_tagged_token(fields[0], path=path, line=lineno))
            times.append([_parse_rt(f, path, lineno) for f in fields[1:]])
    if tokens:
        records.append(_finish_rt(tokens, times, path, start_line))
    if not records:
        raise ParseError("no reading-time records found", path=path)
    return records


def _finish_rt(tokens, times, path, line):
    arr = np.asarray(times, dtype=np.float64)
    try:
        return ReadingTimeRecord(TaggedSentence(tokens), arr[:, 0], arr[:, 1], arr[:, 2])
    except DataError as exc:
        raise ParseError(str(exc), path=path, line=line) from exc


def eval_reading_time(records, embedder) -> dict:
    """Pool all tokens, correlate attention weight against each reading-time
    measure. Tokens with a missing measurement are skipped for that measure
    (the count lands in the report)."""
    weights = [embedder.weights(r.sentence) for r in records]
    out = {}
    for name in RT_MEASURES:
        att, rt = [], []
        skipped = 0
        for r, w in zip(records, weights):
            vals = getattr(r, name)
            for a, v in zip(w, vals):
                if math.isnan(v):
                    skipped += 1
                else:
                    att.append(float(a))
                    rt.append(float(v))
        r_p = pearson(att, rt)
        out[name] = CorrelationReport(
            pearson=r_p,
            spearman=spearman(att, rt),
            pvalue=pearson_pvalue(r_p, len(att)),
            n=len(att),
            skipped=skipped,
        )
    return out


# --- attention and tag-vector analysis -------------------------------------------


def tag_attention_profile(sentences, embedder, tag_kind="pos", top=20):
    """Mean attention weight per tag over all tokens carrying it, for the
    `top` most frequent tags. Rows: (tag, token_count, mean_attention),
    sorted by frequency (ties alphabetical)."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for sent in sentences:
        tags = sent.pos_tags if tag_kind == "pos" else sent.ccg_tags
        for tag, w in zip(tags, embedder.weights(sent)):
            sums[tag] = sums.get(tag, 0.0) + float(w)
            counts[tag] = counts.get(tag, 0) + 1
    rows = [(tag, counts[tag], sums[tag] / counts[tag]) for tag in counts]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows if top is None else rows[:top]


def extreme_attention_words(sentences, embedder, k=5, min_occurrences=2):
    """Words with the lowest and highest mean attention over all their
    occurrences. Words seen fewer than `min_occurrences` times are dropped;
    ties break alphabetically. Returns (lowest, highest, note) where the
    note is set when fewer than k words qualify."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for sent in sentences:
        for word, w in zip(sent.words, embedder.weights(sent)):
            sums[word] = sums.get(word, 0.0) + float(w)
            counts[word] = counts.get(word, 0) + 1
    stats = [
        (word, counts[word], sums[word] / counts[word])
        for word in counts
        if counts[word] >= min_occurrences
    ]
    lowest = sorted(stats, key=lambda r: (r[2], r[0]))[:k]
    highest = sorted(stats, key=lambda r: (-r[2], r[0]))[:k]
    note = None
    if len(stats) < k:
        note = f"only {len(stats)} words meet min_occurrences={min_occurrences}"
    return lowest, highest, note


def nearest_words_to_tag(tag, bundle, tag_kind, k):
    """Top-k vocabulary words by cosine similarity to a tag vector."""
    table = bundle.tag_table(tag_kind)
    if tag not in table.index:
        raise DataError(f"unknown tag {tag!r}")
    if k <= 0:
        return []
    tvec = table.matrix[table.index[tag]]
    emb = bundle.embeddings
    scored = [
        (w, cosine(emb.vector(w), tvec)) for w in emb.vocab.content_words()
    ]
    scored.sort(key=lambda r: (-r[1], r[0]))
    return scored[:k]


def tag_norms(bundle, tag_kind):
    """Tags ranked by the L2 norm of their vectors, descending."""
    table = bundle.tag_table(tag_kind)
    rows = [
        (tag, float(np.linalg.norm(table.matrix[table.index[tag]])))
        for tag in table.content_tags()
    ]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows
