"""Shared domain types: vocabularies, embedding/tag tables, tagged sentences.

All vector data is float64. Serialization is plain UTF-8 text with 17
significant digits, which round-trips IEEE doubles bit-exactly.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from attnsent import kernels

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIAL_TOKENS = (BOS, EOS, UNK)

ATTENTION_KINDS = ("uniform", "sur", "pos", "ccg", "tfidf")

DEFAULT_DIM = 300
TAG_INIT_SIGMA = 0.01


class AttnsentError(Exception):
    """Base error; `category` feeds the CLI's machine-greppable prefix."""

    category = "runtime"


class DimensionError(AttnsentError):
    category = "dim"


class ConfigError(AttnsentError):
    category = "config"


class DataError(AttnsentError):
    category = "data"


class ParseError(AttnsentError):
    category = "parse"

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        if where:
            message = f"{where} {message}"
        super().__init__(message)


def fmt_float(x: float) -> str:
    """Render a double with 17 significant digits (lossless round-trip)."""
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    """Write `text` to `path` via a temp file + rename, never leaving a
    partial file behind."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=os.path.basename(path) + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class Vocabulary:
    """Bijective word <-> contiguous-id map.

    The three special tokens (begin/end of sentence, unknown word) are always
    present; they are appended after the supplied words when missing so that
    ids of words loaded from a file stay stable.
    """

    def __init__(self, words=()):
        self.words: list[str] = []
        self.index: dict[str, int] = {}
        for w in words:
            if w in self.index:
                raise DataError(f"duplicate word in vocabulary: {w!r}")
            self.index[w] = len(self.words)
            self.words.append(w)
        for s in SPECIAL_TOKENS:
            if s not in self.index:
                self.index[s] = len(self.words)
                self.words.append(s)
        self.bos_id = self.index[BOS]
        self.eos_id = self.index[EOS]
        self.unk_id = self.index[UNK]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def id(self, word: str) -> int:
        """Id of `word`, falling back to the unknown-word id."""
        return self.index.get(word, self.unk_id)

    def word(self, wid: int) -> str:
        return self.words[wid]

    def content_words(self):
        """Words excluding the special tokens."""
        return [w for w in self.words if w not in SPECIAL_TOKENS]


class EmbeddingTable:
    """Dense word-vector matrix indexed by a Vocabulary."""

    def __init__(self, vocab: Vocabulary, matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(vocab):
            raise DimensionError(
                f"embedding matrix shape {matrix.shape} does not match "
                f"vocabulary size {len(vocab)}"
            )
        if matrix.shape[1] < 1:
            raise ConfigError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(matrix)):
            raise DataError("embedding matrix contains non-finite values")
        self.vocab = vocab
        self.matrix = matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def random(cls, words, dim=DEFAULT_DIM, seed=42, scale=0.1):
        """Gaussian-initialized table over `words` plus the special tokens."""
        vocab = Vocabulary(words)
        rng = np.random.default_rng(seed)
        matrix = rng.normal(0.0, scale, size=(len(vocab), dim))
        matrix[vocab.bos_id] = 0.0
        matrix[vocab.eos_id] = 0.0
        return cls(vocab, matrix)

    def vector(self, word: str) -> np.ndarray:
        return self.matrix[self.vocab.id(word)]

    def word_ids(self, words) -> np.ndarray:
        return np.array([self.vocab.id(w) for w in words], dtype=np.intp)

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingTable)
            and self.vocab == other.vocab
            and self.matrix.shape == other.matrix.shape
            and bool(np.all(self.matrix == other.matrix))
        )


class TagTable:
    """Dense tag-vector matrix over a POS or CCG tag set.

    An unknown-tag row (named like the unknown word token) is always present
    so that tags unseen at training time still resolve.
    """

    def __init__(self, tags, matrix: np.ndarray, kind="pos"):
        if kind not in ("pos", "ccg"):
            raise ConfigError(f"tag table kind must be 'pos' or 'ccg', got {kind!r}")
        tags = list(tags)
        if len(set(tags)) != len(tags):
            raise DataError("duplicate tag in tag set")
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(tags):
            raise DimensionError(
                f"tag matrix shape {matrix.shape} does not match tag set size {len(tags)}"
            )
        if not np.all(np.isfinite(matrix)):
            raise DataError("tag matrix contains non-finite values")
        if UNK not in tags:
            raise DataError("tag set must contain the unknown-tag row")
        self.tags = tags
        self.index = {t: i for i, t in enumerate(tags)}
        self.matrix = matrix
        self.kind = kind
        self.unk_id = self.index[UNK]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def id(self, tag: str) -> int:
        return self.index.get(tag, self.unk_id)

    def vector(self, tag: str) -> np.ndarray:
        return self.matrix[self.id(tag)]

    def tag_ids(self, tags) -> np.ndarray:
        return np.array([self.id(t) for t in tags], dtype=np.intp)

    def content_tags(self):
        return [t for t in self.tags if t != UNK]

    def __eq__(self, other):
        return (
            isinstance(other, TagTable)
            and self.tags == other.tags
            and self.kind == other.kind
            and self.matrix.shape == other.matrix.shape
            and bool(np.all(self.matrix == other.matrix))
        )


def init_tag_table(tagset, dim, seed, kind="pos") -> TagTable:
    """Fresh TagTable with entries drawn i.i.d. from N(0, 0.01^2).

    Pure function of (tagset, dim, seed): the same arguments always produce a
    bit-identical table. The unknown-tag row is appended (and drawn from the
    same stream) when absent from `tagset`.
    """
    tags = list(tagset)
    if not tags:
        raise ConfigError("tag set must be non-empty")
    if dim < 1:
        raise ConfigError("tag vector dimension must be >= 1")
    if UNK not in tags:
        tags.append(UNK)
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, TAG_INIT_SIGMA, size=(len(tags), dim))
    return TagTable(tags, matrix, kind=kind)


def cosine(a, b) -> float:
    """Cosine similarity in [-1, 1]; 0 when either vector has zero norm."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] != b.shape[0] or a.shape[0] < 1:
        raise DimensionError(f"cosine needs two equal-length vectors, got {a.shape} and {b.shape}")
    return kernels.cosine(a, b)


@dataclass
class TaggedToken:
    """One token: word form, POS tag, optional CCG supertag and surprisal.

    A stored surprisal is the clipped value, so it lies in [0, 10].
    """

    word: str
    pos: str
    ccg: str | None = None
    surprisal: float | None = None

    def __post_init__(self):
        if not self.word:
            raise DataError("token word must be non-empty")
        if not self.pos:
            raise DataError(f"token {self.word!r} has an empty POS tag")
        if self.surprisal is not None:
            s = float(self.surprisal)
            if not np.isfinite(s) or s < 0.0 or s > 10.0:
                raise DataError(
                    f"surprisal for {self.word!r} must lie in [0, 10], got {self.surprisal!r}"
                )
            self.surprisal = s


class TaggedSentence:
    """Non-empty token sequence; CCG tags are present on all tokens or none."""

    __slots__ = ("tokens",)

    def __init__(self, tokens):
        tokens = list(tokens)
        if not tokens:
            raise DataError("sentence must contain at least one token")
        n_ccg = sum(1 for t in tokens if t.ccg is not None)
        if n_ccg not in (0, len(tokens)):
            raise DataError("either all tokens carry a CCG tag or none do")
        self.tokens = tokens

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def words(self) -> list[str]:
        return [t.word for t in self.tokens]

    @property
    def pos_tags(self) -> list[str]:
        return [t.pos for t in self.tokens]

    @property
    def ccg_tags(self) -> list[str]:
        if not self.has_ccg:
            raise DataError("sentence has no CCG tags")
        return [t.ccg for t in self.tokens]

    @property
    def has_ccg(self) -> bool:
        return self.tokens[0].ccg is not None

    @property
    def has_surprisals(self) -> bool:
        return all(t.surprisal is not None for t in self.tokens)

    @property
    def surprisals(self) -> list[float]:
        if not self.has_surprisals:
            raise DataError("sentence has no attached surprisals")
        return [t.surprisal for t in self.tokens]

    def text(self) -> str:
        """Back to the `word#POS[#CCG]` wire format."""
        parts = []
        for t in self.tokens:
            s = f"{t.word}#{t.pos}"
            if t.ccg is not None:
                s += f"#{t.ccg}"
            parts.append(s)
        return " ".join(parts)

    def __eq__(self, other):
        return isinstance(other, TaggedSentence) and [
            (t.word, t.pos, t.ccg) for t in self.tokens
        ] == [(t.word, t.pos, t.ccg) for t in other.tokens]


def parse_tagged_token(text: str, path=None, line=None) -> TaggedToken:
    parts = text.split("#")
    if len(parts) == 2:
        word, pos = parts
        ccg = None
    elif len(parts) == 3:
        word, pos, ccg = parts
    else:
        raise ParseError(
            f"token {text!r} is not of the form word#POS or word#POS#CCG",
            path=path,
            line=line,
        )
    if not word or not pos or ccg == "":
        raise ParseError(f"token {text!r} has an empty field", path=path, line=line)
    try:
        return TaggedToken(word, pos, ccg)
    except DataError as exc:
        raise ParseError(str(exc), path=path, line=line) from exc


def parse_tagged_sentence(text: str, path=None, line=None) -> TaggedSentence:
    toks = text.split()
    if not toks:
        raise ParseError("empty sentence", path=path, line=line)
    try:
        return TaggedSentence([parse_tagged_token(t, path=path, line=line) for t in toks])
    except DataError as exc:
        raise ParseError(str(exc), path=path, line=line) from exc


def read_tagged_documents(path) -> list[list[TaggedSentence]]:
    """Tagged corpus as documents: one sentence per line, blank lines
    separate documents."""
    docs: list[list[TaggedSentence]] = []
    current: list[TaggedSentence] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                if current:
                    docs.append(current)
                    current = []
                continue
            current.append(parse_tagged_sentence(stripped, path=path, line=lineno))
    if current:
        docs.append(current)
    if not docs:
        raise ParseError("no sentences found", path=path)
    return docs


def read_tagged_sentences(path) -> list[TaggedSentence]:
    return [s for doc in read_tagged_documents(path) for s in doc]


# --- text serialization -----------------------------------------------------
#
# Embedding/tag vector file: first line "<count> <dim>", then one row per
# line: "<word> <v1> ... <vdim>", space separated, UTF-8.


def _format_vec_file(words, matrix) -> str:
    lines = [f"{len(words)} {matrix.shape[1]}"]
    for w, row in zip(words, matrix):
        lines.append(w + " " + " ".join(fmt_float(v) for v in row))
    return "\n".join(lines) + "\n"


def _parse_vec_file(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ParseError("header must be '<count> <dim>'", path=path, line=1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError("header must be '<count> <dim>'", path=path, line=1)
        if count < 1 or dim < 1:
            raise ParseError("count and dim must be positive", path=path, line=1)
        words: list[str] = []
        seen: set[str] = set()
        matrix = np.empty((count, dim), dtype=np.float64)
        row = 0
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            fields = raw.split()
            if len(fields) != dim + 1:
                raise ParseError(
                    f"expected {dim + 1} fields, found {len(fields)}",
                    path=path,
                    line=lineno,
                )
            if row >= count:
                raise ParseError(f"more than {count} rows", path=path, line=lineno)
            word = fields[0]
            if word in seen:
                raise ParseError(f"duplicate word {word!r}", path=path, line=lineno)
            seen.add(word)
            try:
                matrix[row] = [float(v) for v in fields[1:]]
            except ValueError:
                raise ParseError("non-numeric vector entry", path=path, line=lineno)
            words.append(word)
            row += 1
        if row != count:
            raise ParseError(f"header said {count} rows, found {row}", path=path)
    if not np.all(np.isfinite(matrix)):
        raise ParseError("non-finite vector entry", path=path)
    return words, matrix


def save_embeddings(table: EmbeddingTable, path) -> None:
    atomic_write_text(path, _format_vec_file(table.vocab.words, table.matrix))


def load_embeddings(path) -> EmbeddingTable:
    """Load a text embedding file.

    Missing special tokens are appended: zero rows for the sentence markers,
    and the mean of all loaded vectors for the unknown word (computed once
    here, so the unknown-word vector is a neutral point of the space).
    """
    words, matrix = _parse_vec_file(path)
    loaded_mean = matrix.mean(axis=0)
    vocab = Vocabulary(words)
    if len(vocab) != len(words):
        extra = np.zeros((len(vocab) - len(words), matrix.shape[1]))
        matrix = np.vstack([matrix, extra])
        if UNK not in words:
            matrix[vocab.unk_id] = loaded_mean
    return EmbeddingTable(vocab, matrix)


def save_tag_table(table: TagTable, path) -> None:
    atomic_write_text(path, _format_vec_file(table.tags, table.matrix))


def load_tag_table(path, kind) -> TagTable:
    tags, matrix = _parse_vec_file(path)
    if UNK not in tags:
        tags = tags + [UNK]
        matrix = np.vstack([matrix, np.zeros((1, matrix.shape[1]))])
    return TagTable(tags, matrix, kind=kind)


@dataclass
class ModelBundle:
    """A trained (or initial) model: word vectors, optional tag vectors, the
    attention scheme they were trained for, and reproducibility metadata."""

    embeddings: EmbeddingTable
    pos_tags: TagTable | None = None
    ccg_tags: TagTable | None = None
    attention_kind: str = "uniform"
    lm_ref: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.attention_kind not in ATTENTION_KINDS:
            raise ConfigError(f"unknown attention kind {self.attention_kind!r}")
        if self.attention_kind == "pos" and self.pos_tags is None:
            raise ConfigError("attention kind 'pos' requires a POS tag table")
        if self.attention_kind == "ccg" and self.ccg_tags is None:
            raise ConfigError("attention kind 'ccg' requires a CCG tag table")
        for tags in (self.pos_tags, self.ccg_tags):
            if tags is not None and tags.dim != self.embeddings.dim:
                raise DimensionError(
                    f"tag table dim {tags.dim} != embedding dim {self.embeddings.dim}"
                )

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    def tag_table(self, kind: str) -> TagTable:
        table = self.pos_tags if kind == "pos" else self.ccg_tags if kind == "ccg" else None
        if table is None:
            raise ConfigError(f"bundle has no {kind!r} tag table")
        return table

    def __eq__(self, other):
        return (
            isinstance(other, ModelBundle)
            and self.embeddings == other.embeddings
            and self.pos_tags == other.pos_tags
            and self.ccg_tags == other.ccg_tags
            and self.attention_kind == other.attention_kind
            and self.lm_ref == other.lm_ref
            and self.metadata == other.metadata
        )


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write a bundle directory: meta.txt + words.vec (+ pos.vec, ccg.vec)."""
    os.makedirs(path, exist_ok=True)
    meta = dict(bundle.metadata)
    meta["dim"] = str(bundle.dim)
    meta["attention_kind"] = bundle.attention_kind
    if bundle.lm_ref is not None:
        meta["lm"] = bundle.lm_ref
    lines = [f"{k}={meta[k]}" for k in sorted(meta)]
    atomic_write_text(os.path.join(path, "meta.txt"), "\n".join(lines) + "\n")
    save_embeddings(bundle.embeddings, os.path.join(path, "words.vec"))
    if bundle.pos_tags is not None:
        save_tag_table(bundle.pos_tags, os.path.join(path, "pos.vec"))
    if bundle.ccg_tags is not None:
        save_tag_table(bundle.ccg_tags, os.path.join(path, "ccg.vec"))


def load_bundle(path) -> ModelBundle:
    meta_path = os.path.join(path, "meta.txt")
    if not os.path.isfile(meta_path):
        raise ParseError("not a bundle directory (meta.txt missing)", path=path)
    meta: dict[str, str] = {}
    with open(meta_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            if "=" not in raw:
                raise ParseError("meta line is not key=value", path=meta_path, line=lineno)
            k, v = raw.split("=", 1)
            meta[k] = v
    embeddings = load_embeddings(os.path.join(path, "words.vec"))
    pos_path = os.path.join(path, "pos.vec")
    ccg_path = os.path.join(path, "ccg.vec")
    pos_tags = load_tag_table(pos_path, "pos") if os.path.isfile(pos_path) else None
    ccg_tags = load_tag_table(ccg_path, "ccg") if os.path.isfile(ccg_path) else None
    kind = meta.pop("attention_kind", "uniform")
    lm_ref = meta.pop("lm", None)
    meta.pop("dim", None)
    return ModelBundle(
        embeddings=embeddings,
        pos_tags=pos_tags,
        ccg_tags=ccg_tags,
        attention_kind=kind,
        lm_ref=lm_ref,
        metadata=meta,
    )
