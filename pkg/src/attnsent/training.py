"""Host objectives and trainers.

Two objectives share the attention-weighted composition:

- adjacent-sentence cross-entropy ("scbow"): the probability that two
  sentences are adjacent is a softmax over cosine similarities of their
  composed vectors; the loss is cross-entropy against a target that puts
  1/|S+| on each adjacent sentence and 0 on sampled non-adjacent ones;

- paraphrase max-margin ("pp"): for each phrase pair, hinge losses push the
  dot product of the true pair above the dot products with the hardest
  in-batch negatives by a margin of 1, plus a Frobenius penalty anchoring
  the word matrix to its initial value. Dot products, not cosines.

Gradients are exact (including the softmax and cosine normalizations) and
are validated against central finite differences in the test suite. The
hinge subgradient at exactly zero is taken as inactive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from attnsent import kernels
from attnsent.core import (
    ConfigError,
    DataError,
    EmbeddingTable,
    ModelBundle,
    TaggedSentence,
    fmt_float,
    init_tag_table,
)
from attnsent.attention import att_uniform, build_tfidf_index, tfidf_scores
from attnsent.lm import attach_surprisals

TRAINABLE_ATTENTION = ("pos", "ccg")


# --- per-sentence forward / backward -----------------------------------------


@dataclass
class SentenceCache:
    word_ids: np.ndarray
    tag_ids: np.ndarray | None
    weights: np.ndarray
    scale: float


def sentence_forward(sentence, embeddings, tags, kind, length_factor=True,
                     tfidf_index=None):
    """Composed sentence vector plus everything backward needs."""
    n = len(sentence)
    word_ids = embeddings.word_ids(sentence.words)
    tag_ids = None
    if kind == "uniform":
        weights = att_uniform(sentence)
    elif kind == "sur":
        weights = kernels.softmax(np.asarray(sentence.surprisals, dtype=np.float64))
    elif kind == "tfidf":
        weights = kernels.softmax(tfidf_scores(sentence, tfidf_index))
    elif kind in TRAINABLE_ATTENTION:
        tag_strs = sentence.pos_tags if kind == "pos" else sentence.ccg_tags
        tag_ids = tags.tag_ids(tag_strs)
        logits = kernels.pair_dots(embeddings.matrix, word_ids, tags.matrix, tag_ids)
        weights = kernels.softmax(logits)
    else:
        raise ConfigError(f"unknown attention kind {kind!r}")
    scale = 1.0 / n if length_factor else 1.0
    vec = kernels.weighted_rowsum(embeddings.matrix, word_ids, weights, scale)
    return vec, SentenceCache(word_ids, tag_ids, weights, scale)


def sentence_backward(cache, upstream, embeddings, tags, grad_w, grad_c):
    """Accumulate d(loss)/d(tables) for one sentence given d(loss)/d(vector)."""
    coefs = cache.scale * cache.weights
    kernels.scatter_add_rows(grad_w, cache.word_ids, coefs, upstream)
    if cache.tag_ids is None:
        return
    # attention weights depend on the parameters through the logits
    d_alpha = cache.scale * (embeddings.matrix[cache.word_ids] @ upstream)
    inner = float(np.dot(cache.weights, d_alpha))
    d_logits = cache.weights * (d_alpha - inner)
    kernels.scatter_add_gathered(grad_w, cache.word_ids, d_logits,
                                 tags.matrix, cache.tag_ids)
    kernels.scatter_add_gathered(grad_c, cache.tag_ids, d_logits,
                                 embeddings.matrix, cache.word_ids)


def cosine_with_grads(u, v):
    """(cos, d cos/du, d cos/dv); all zeros when either norm is zero."""
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        z = np.zeros_like(u)
        return 0.0, z, z.copy()
    dot = float(np.dot(u, v))
    c = dot / (nu * nv)
    du = v / (nu * nv) - (c / (nu * nu)) * u
    dv = u / (nu * nv) - (c / (nv * nv)) * v
    return c, du, dv


# --- objective: adjacent-sentence cross-entropy -------------------------------


@dataclass
class ScbowInstance:
    """One training example: a center sentence, the sentences adjacent to it,
    and sampled non-adjacent sentences."""

    center: TaggedSentence
    positives: list
    negatives: list

    def __post_init__(self):
        if not self.positives or not self.negatives:
            raise DataError("an instance needs at least one positive and one negative")

    @property
    def candidates(self):
        return list(self.positives) + list(self.negatives)


def scbow_prob(center_vec, candidate_vecs) -> np.ndarray:
    """Softmax over cosine similarities with the center vector."""
    if len(candidate_vecs) == 0:
        raise DataError("need at least one candidate sentence")
    cos = np.array([kernels.cosine(np.ascontiguousarray(center_vec, dtype=np.float64),
                                   np.ascontiguousarray(c, dtype=np.float64))
                    for c in candidate_vecs])
    return kernels.softmax(cos)


def _active_tags(bundle, kind):
    return bundle.tag_table(kind) if kind in TRAINABLE_ATTENTION else None


def scbow_loss(instance, bundle, length_factor=True, tfidf_index=None) -> float:
    kind = bundle.attention_kind
    tags = _active_tags(bundle, kind)
    center_vec, _ = sentence_forward(instance.center, bundle.embeddings, tags, kind,
                                     length_factor, tfidf_index)
    cand_vecs = [
        sentence_forward(s, bundle.embeddings, tags, kind, length_factor, tfidf_index)[0]
        for s in instance.candidates
    ]
    probs = scbow_prob(center_vec, cand_vecs)
    k = len(instance.positives)
    return float(-np.log(probs[:k]).sum() / k)


def scbow_gradients(instance, bundle, grad_w, grad_c, length_factor=True,
                    tfidf_index=None) -> float:
    """Accumulate gradients for one instance into the buffers; returns the loss."""
    kind = bundle.attention_kind
    tags = _active_tags(bundle, kind)
    emb = bundle.embeddings
    center_vec, center_cache = sentence_forward(instance.center, emb, tags, kind,
                                                length_factor, tfidf_index)
    cands = [sentence_forward(s, emb, tags, kind, length_factor, tfidf_index)
             for s in instance.candidates]
    m = len(cands)
    k = len(instance.positives)
    cos = np.empty(m)
    dcenter = []
    dcand = []
    for j, (vec, _) in enumerate(cands):
        c, du, dv = cosine_with_grads(center_vec, vec)
        cos[j] = c
        dcenter.append(du)
        dcand.append(dv)
    probs = kernels.softmax(cos)
    targets = np.zeros(m)
    targets[:k] = 1.0 / k
    loss = float(-np.log(probs[:k]).sum() / k)
    dcos = probs - targets
    up_center = np.zeros_like(center_vec)
    for j in range(m):
        up_center += dcos[j] * dcenter[j]
        sentence_backward(cands[j][1], dcos[j] * dcand[j], emb, tags, grad_w, grad_c)
    sentence_backward(center_cache, up_center, emb, tags, grad_w, grad_c)
    return loss


# --- objective: paraphrase max-margin -----------------------------------------


def mine_negatives(pairs, bundle, length_factor=True, tfidf_index=None,
                   vectors=None):
    """Hardest in-batch negatives per pair.

    Phrases are indexed 2i (left) and 2i+1 (right) in batch order. For pair
    i, t1 maximizes g(x1).g(p) over phrases p outside the pair itself, and
    t2 does the same for x2; ties go to the lowest index. Returns a list of
    (t1_index, t2_index) into that flat phrase order.
    """
    if len(pairs) < 2:
        raise DataError("cannot mine negatives in a batch of fewer than two pairs")
    if vectors is None:
        kind = bundle.attention_kind
        tags = _active_tags(bundle, kind)
        vectors = [
            sentence_forward(s, bundle.embeddings, tags, kind, length_factor, tfidf_index)[0]
            for pair in pairs
            for s in pair
        ]
    g = np.asarray(vectors)
    dots = g @ g.T
    out = []
    for i in range(len(pairs)):
        sel = []
        for slot in (2 * i, 2 * i + 1):
            row = dots[slot].copy()
            row[2 * i] = -np.inf
            row[2 * i + 1] = -np.inf
            sel.append(int(np.argmax(row)))
        out.append((sel[0], sel[1]))
    return out


def pp_loss(pairs, negatives, bundle, lam=0.0, initial_matrix=None,
            length_factor=True, tfidf_index=None) -> float:
    loss, _, _ = _pp_forward(pairs, negatives, bundle, lam, initial_matrix,
                             length_factor, tfidf_index, with_grads=False)
    return loss


def pp_gradients(pairs, negatives, bundle, grad_w, grad_c, lam=0.0,
                 initial_matrix=None, length_factor=True, tfidf_index=None) -> float:
    loss, gw, gc = _pp_forward(pairs, negatives, bundle, lam, initial_matrix,
                               length_factor, tfidf_index, with_grads=True)
    grad_w += gw
    if gc is not None and grad_c is not None:
        grad_c += gc
    return loss


def _pp_forward(pairs, negatives, bundle, lam, initial_matrix, length_factor,
                tfidf_index, with_grads):
    if len(negatives) != len(pairs):
        raise DataError("need one (t1, t2) selection per pair")
    kind = bundle.attention_kind
    tags = _active_tags(bundle, kind)
    emb = bundle.embeddings
    flat = [s for pair in pairs for s in pair]
    fwd = [sentence_forward(s, emb, tags, kind, length_factor, tfidf_index) for s in flat]
    vecs = [v for v, _ in fwd]
    n_pairs = len(pairs)
    loss = 0.0
    ups = [np.zeros_like(vecs[0]) for _ in vecs] if with_grads else None
    inv = 1.0 / n_pairs
    for i, (t1, t2) in enumerate(negatives):
        a, b = 2 * i, 2 * i + 1
        g1, g2 = vecs[a], vecs[b]
        gt1, gt2 = vecs[t1], vecs[t2]
        pos_dot = float(np.dot(g1, g2))
        h1 = 1.0 - pos_dot + float(np.dot(g1, gt1))
        h2 = 1.0 - pos_dot + float(np.dot(g2, gt2))
        if h1 > 0.0:
            loss += inv * h1
            if with_grads:
                ups[a] += inv * (gt1 - g2)
                ups[b] += -inv * g1
                ups[t1] += inv * g1
        if h2 > 0.0:
            loss += inv * h2
            if with_grads:
                ups[b] += inv * (gt2 - g1)
                ups[a] += -inv * g2
                ups[t2] += inv * g2
    if lam != 0.0:
        if initial_matrix is None:
            raise ConfigError("regularized loss needs the initial word matrix")
        diff = emb.matrix - initial_matrix
        loss += lam * float(np.sum(diff * diff))
    if not with_grads:
        return loss, None, None
    grad_w = np.zeros_like(emb.matrix)
    grad_c = np.zeros_like(tags.matrix) if tags is not None else None
    for (vec, cache), up in zip(fwd, ups):
        sentence_backward(cache, up, emb, tags, grad_w, grad_c)
    if lam != 0.0:
        grad_w += 2.0 * lam * (emb.matrix - initial_matrix)
    return loss, grad_w, grad_c


def gradients(loss_kind, data, bundle, grad_w, grad_c, **kw) -> float:
    """Dispatch: 'scbow' takes an ScbowInstance, 'pp' takes (pairs, negatives)."""
    if loss_kind == "scbow":
        return scbow_gradients(data, bundle, grad_w, grad_c, **kw)
    if loss_kind == "pp":
        pairs, negatives = data
        return pp_gradients(pairs, negatives, bundle, grad_w, grad_c, **kw)
    raise ConfigError(f"unknown loss kind {loss_kind!r}")


# --- optimizers ----------------------------------------------------------------


class AdaGrad:
    """Accumulated squared gradients; step = lr * g / (sqrt(acc) + eps)."""

    def __init__(self, params_like, lr=0.05, eps=1e-8):
        self.lr = lr
        self.eps = eps
        self.acc = [np.zeros_like(p) for p in params_like]

    def step(self, params, grads):
        for p, g, a in zip(params, grads, self.acc):
            a += g * g
            p -= self.lr * g / (np.sqrt(a) + self.eps)


class AdaDelta:
    """Zeiler's update with decaying squared-gradient and squared-update
    averages; `lr` is a global multiplier on the computed update (the rule
    itself has no learning rate)."""

    def __init__(self, params_like, lr=0.001, rho=0.95, eps=1e-6):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.eg2 = [np.zeros_like(p) for p in params_like]
        self.ed2 = [np.zeros_like(p) for p in params_like]

    def step(self, params, grads):
        rho, eps = self.rho, self.eps
        for p, g, eg2, ed2 in zip(params, grads, self.eg2, self.ed2):
            eg2 *= rho
            eg2 += (1.0 - rho) * g * g
            delta = np.sqrt(ed2 + eps) / np.sqrt(eg2 + eps) * g
            p -= self.lr * delta
            ed2 *= rho
            ed2 += (1.0 - rho) * delta * delta


def make_optimizer(name, params_like, lr):
    if name == "adagrad":
        return AdaGrad(params_like, lr=lr)
    if name == "adadelta":
        return AdaDelta(params_like, lr=lr)
    raise ConfigError(f"unknown optimizer {name!r}")


# --- trainers -------------------------------------------------------------------


@dataclass
class TrainConfig:
    attention: str = "uniform"
    dim: int = 300
    epochs: int = 1
    batch_size: int = 100
    negatives: int = 2
    optimizer: str | None = None  # scbow -> adadelta, pp -> adagrad
    lr: float | None = None  # adadelta -> 0.001, adagrad -> 0.05
    lam: float = 1e-5
    seed: int = 42
    init_scale: float = 0.1
    length_factor: bool = True
    freeze_words: bool = True  # pp attention phase
    attn_epochs: int | None = None

    def resolve(self, host):
        opt = self.optimizer or ("adadelta" if host == "scbow" else "adagrad")
        lr = self.lr if self.lr is not None else (0.001 if opt == "adadelta" else 0.05)
        return opt, lr

    def metadata(self, host):
        opt, lr = self.resolve(host)
        md = {
            "host": host,
            "optimizer": opt,
            "lr": repr(lr),
            "dim": str(self.dim),
            "epochs": str(self.epochs),
            "batch_size": str(self.batch_size),
            "negatives": str(self.negatives),
            "lambda": repr(self.lam),
            "seed": str(self.seed),
            "init_scale": repr(self.init_scale),
            "length_factor": str(self.length_factor).lower(),
            "freeze_words": str(self.freeze_words).lower(),
        }
        if self.attn_epochs is not None:
            md["attn_epochs"] = str(self.attn_epochs)
        return md


def _seeds(seed, n):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _corpus_vocab_words(sentences):
    return sorted({w for s in sentences for w in s.words})


def _corpus_tagset(sentences, kind):
    if kind == "pos":
        return sorted({t for s in sentences for t in s.pos_tags})
    untagged = [s for s in sentences if not s.has_ccg]
    if untagged:
        raise ConfigError(
            "ccg attention needs a fully CCG-tagged corpus "
            f"({len(untagged)} sentences lack supertags)"
        )
    return sorted({t for s in sentences for t in s.ccg_tags})


def _init_tables(sentences, config, init_embeddings, host):
    emb_seed, tag_seed = _seeds(config.seed, 2)
    if init_embeddings is not None:
        emb = init_embeddings
        dim = emb.dim
    else:
        emb = EmbeddingTable.random(
            _corpus_vocab_words(sentences), dim=config.dim, seed=emb_seed,
            scale=config.init_scale,
        )
        dim = config.dim
    pos_tags = ccg_tags = None
    if config.attention in TRAINABLE_ATTENTION:
        tagset = _corpus_tagset(sentences, config.attention)
        table = init_tag_table(tagset, dim, tag_seed, kind=config.attention)
        if config.attention == "pos":
            pos_tags = table
        else:
            ccg_tags = table
    return ModelBundle(
        embeddings=emb,
        pos_tags=pos_tags,
        ccg_tags=ccg_tags,
        attention_kind=config.attention,
    )


def _prepare_surprisals(sentences, config, lm_model):
    if config.attention != "sur":
        return
    missing = [s for s in sentences if not s.has_surprisals]
    if missing:
        if lm_model is None:
            raise ConfigError(
                "surprisal attention needs a language model or pre-attached surprisals"
            )
        attach_surprisals(missing, lm_model)


def _log_epoch(log, epoch, mean_loss):
    if log is not None:
        print(f"{epoch}\t{fmt_float(mean_loss)}", file=log)


def train_scbow(documents, config: TrainConfig, init_embeddings=None,
                lm_model=None, log=None) -> ModelBundle:
    """Adjacent-sentence training over a list of documents (each a list of
    TaggedSentence). Positives are the in-document neighbors; negatives are
    sampled without replacement from all other corpus positions."""
    if documents and isinstance(documents[0], TaggedSentence):
        documents = [documents]
    sentences = [s for doc in documents for s in doc]
    if not sentences:
        raise ConfigError("empty training corpus")
    _prepare_surprisals(sentences, config, lm_model)
    tfidf_index = build_tfidf_index(sentences) if config.attention == "tfidf" else None
    bundle = _init_tables(sentences, config, init_embeddings, "scbow")
    tags = _active_tags(bundle, config.attention)

    # centers with their in-document neighbors, as global sentence indices
    offsets = []
    pos = 0
    for doc in documents:
        offsets.append(pos)
        pos += len(doc)
    instances = []
    for d, doc in enumerate(documents):
        for i in range(len(doc)):
            neighbors = [offsets[d] + j for j in (i - 1, i + 1) if 0 <= j < len(doc)]
            if neighbors:
                instances.append((offsets[d] + i, neighbors))
    if not instances:
        raise ConfigError("no sentence has an adjacent neighbor; need documents of >= 2 sentences")
    n_total = len(sentences)
    max_excluded = 3  # the center plus up to two neighbors
    if n_total - max_excluded < config.negatives:
        raise ConfigError(
            f"corpus of {n_total} sentences is too small to sample "
            f"{config.negatives} negatives per instance"
        )

    opt_name, lr = config.resolve("scbow")
    params = [bundle.embeddings.matrix] + ([tags.matrix] if tags is not None else [])
    opt = make_optimizer(opt_name, params, lr)
    grad_w = np.zeros_like(bundle.embeddings.matrix)
    grad_c = np.zeros_like(tags.matrix) if tags is not None else None
    rng = np.random.default_rng(_seeds(config.seed, 3)[2])

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(instances))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_w.fill(0.0)
            if grad_c is not None:
                grad_c.fill(0.0)
            for idx in batch:
                center, neighbors = instances[idx]
                excluded = {center, *neighbors}
                cands = [j for j in range(n_total) if j not in excluded]
                picks = rng.choice(len(cands), size=config.negatives, replace=False)
                inst = ScbowInstance(
                    center=sentences[center],
                    positives=[sentences[j] for j in neighbors],
                    negatives=[sentences[cands[j]] for j in picks],
                )
                epoch_losses.append(
                    scbow_gradients(inst, bundle, grad_w, grad_c,
                                    length_factor=config.length_factor,
                                    tfidf_index=tfidf_index)
                )
            grad_w /= len(batch)
            grads = [grad_w]
            if grad_c is not None:
                grad_c /= len(batch)
                grads.append(grad_c)
            opt.step(params, grads)
        _log_epoch(log, epoch, float(np.mean(epoch_losses)))

    bundle.metadata = config.metadata("scbow")
    return bundle


def train_pp(pairs, config: TrainConfig, init_embeddings=None, attn_pairs=None,
             lm_model=None, log=None) -> ModelBundle:
    """Paraphrase max-margin training.

    Phase one trains word vectors on `pairs` with uniform composition. When
    the attention scheme has tag vectors (pos/ccg) or word co-training is
    requested, a second phase trains them on `attn_pairs` (falling back to
    `pairs`) with words frozen by default.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ConfigError("paraphrase training needs at least two pairs")
    attn_pairs = list(attn_pairs) if attn_pairs is not None else pairs
    all_sentences = [s for p in pairs for s in p] + [s for p in attn_pairs for s in p]
    _prepare_surprisals(all_sentences, config, lm_model)
    tfidf_index = build_tfidf_index(all_sentences) if config.attention == "tfidf" else None
    bundle = _init_tables(all_sentences, config, init_embeddings, "pp")
    tags = _active_tags(bundle, config.attention)
    opt_name, lr = config.resolve("pp")
    rng = np.random.default_rng(_seeds(config.seed, 3)[2])

    def run_phase(phase_pairs, epochs, kind, train_words, train_tags, epoch_base):
        if epochs <= 0 or not (train_words or train_tags):
            return epoch_base
        if len(phase_pairs) < 2:
            raise ConfigError("a training phase needs at least two pairs to mine negatives")
        phase_bundle = ModelBundle(
            embeddings=bundle.embeddings,
            pos_tags=bundle.pos_tags,
            ccg_tags=bundle.ccg_tags,
            attention_kind=kind,
        )
        params = []
        if train_words:
            params.append(bundle.embeddings.matrix)
        if train_tags and tags is not None:
            params.append(tags.matrix)
        opt = make_optimizer(opt_name, params, lr)
        initial = bundle.embeddings.matrix.copy()
        grad_w = np.zeros_like(bundle.embeddings.matrix)
        grad_c = np.zeros_like(tags.matrix) if tags is not None else None
        epoch = epoch_base
        for _ in range(epochs):
            epoch += 1
            order = rng.permutation(len(phase_pairs))
            batch_losses = []
            for start in range(0, len(order), config.batch_size):
                chunk = [phase_pairs[i] for i in order[start : start + config.batch_size]]
                if len(chunk) < 2:
                    continue  # a single-pair remainder has no negatives
                negs = mine_negatives(chunk, phase_bundle,
                                      length_factor=config.length_factor,
                                      tfidf_index=tfidf_index)
                grad_w.fill(0.0)
                if grad_c is not None:
                    grad_c.fill(0.0)
                loss = pp_gradients(chunk, negs, phase_bundle, grad_w, grad_c,
                                    lam=config.lam if train_words else 0.0,
                                    initial_matrix=initial,
                                    length_factor=config.length_factor,
                                    tfidf_index=tfidf_index)
                batch_losses.append(loss)
                grads = []
                if train_words:
                    grads.append(grad_w)
                if train_tags and tags is not None:
                    grads.append(grad_c)
                opt.step(params, grads)
            _log_epoch(log, epoch, float(np.mean(batch_losses)))
        return epoch

    epoch = run_phase(pairs, config.epochs, "uniform", True, False, 0)
    attn_phase_needed = config.attention in TRAINABLE_ATTENTION or not config.freeze_words
    if attn_phase_needed:
        attn_epochs = config.attn_epochs if config.attn_epochs is not None else 10
        run_phase(attn_pairs, attn_epochs, config.attention,
                  not config.freeze_words, True, epoch)

    bundle.metadata = config.metadata("pp")
    return bundle
