"""attnsent command line: lm / train / embed / eval / analyze subcommands.

Conventions shared by every subcommand:

- exit code 0 on success, 1 on runtime/data errors (stderr line prefixed
  `ERROR:<category>:`), 2 on usage errors;
- file outputs are written atomically (temp file + rename) and start with
  `# key=value` lines echoing the fully resolved configuration, so a run
  can be reproduced from its own output;
- the random seed comes from --seed, else the ATTNSENT_SEED environment
  variable, else 42, and is always recorded.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from attnsent import __version__, evaluation, lm
from attnsent.attention import SentenceEmbedder, build_tfidf_index, compose
from attnsent.core import (
    ATTENTION_KINDS,
    AttnsentError,
    ConfigError,
    ParseError,
    atomic_write_text,
    fmt_float,
    load_bundle,
    load_embeddings,
    parse_tagged_sentence,
    read_tagged_documents,
    read_tagged_sentences,
    save_bundle,
)
from attnsent.training import TrainConfig, train_pp, train_scbow


def resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("ATTNSENT_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ATTNSENT_SEED must be an integer, got {env!r}")
    return 42


def config_echo(args, seed) -> str:
    skip = {"func", "validate"}
    pairs = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    pairs["seed"] = seed
    lines = []
    for k, v in sorted(pairs.items()):
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"# {k}={v}")
    return "\n".join(lines) + "\n"


def write_output(path, args, seed, body) -> None:
    """Report writer: config echo then the body; '-' or None streams the
    bare body to stdout."""
    if path in (None, "-"):
        sys.stdout.write(body)
        return
    atomic_write_text(path, config_echo(args, seed) + body)


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def nonneg_float(text):
    v = float(text)
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return v


# --- shared option groups -----------------------------------------------------


def add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: ATTNSENT_SEED or 42)")


def add_attention(p):
    p.add_argument("--attention", choices=ATTENTION_KINDS, default=None,
                   help="attention scheme (default: the bundle's)")
    p.add_argument("--lm", default=None, help="language model file for surprisal attention")
    p.add_argument("--tfidf-corpus", default=None,
                   help="tagged corpus defining tf-idf document frequencies "
                        "(default: the evaluated sentences themselves)")
    p.add_argument("--no-length-factor", action="store_true",
                   help="drop the 1/n factor from composition (cosine results are unaffected)")


def check_sur_needs_lm(args, parser):
    if getattr(args, "attention", None) == "sur" and not args.lm:
        parser.error("--attention sur requires --lm (or sentences with pre-attached surprisals)")


def make_embedder(args, bundle, tfidf_sentences=None):
    kind = getattr(args, "attention", None) or bundle.attention_kind
    lm_model = None
    if kind == "sur":
        lm_path = args.lm or bundle.lm_ref
        if lm_path is None:
            raise ConfigError("surprisal attention needs --lm or a bundle with an lm reference")
        lm_model = lm.load_lm(lm_path)
    tfidf_index = None
    if kind == "tfidf":
        if args.tfidf_corpus:
            tfidf_index = build_tfidf_index(read_tagged_sentences(args.tfidf_corpus))
        elif tfidf_sentences:
            tfidf_index = build_tfidf_index(tfidf_sentences)
        else:
            raise ConfigError("tfidf attention needs --tfidf-corpus or input sentences")
    return SentenceEmbedder(
        bundle, kind=kind, lm_model=lm_model, tfidf_index=tfidf_index,
        length_factor=not args.no_length_factor,
    )


# --- lm ------------------------------------------------------------------------


def cmd_lm_build(args):
    seed = resolve_seed(args)
    corpus = read_tagged_sentences(args.corpus)
    model = lm.build(corpus, order=args.order, vocab_min_count=args.min_count)
    for line in config_echo(args, seed).strip().splitlines():
        k, _, v = line[2:].partition("=")
        model.meta[k] = v
    lm.save_lm(model, args.output)
    return 0


def cmd_lm_surprisal(args):
    seed = resolve_seed(args)
    model = lm.load_lm(args.lm)
    sentences = read_tagged_sentences(args.input)
    blocks = []
    for sent in sentences:
        values = model.sentence_surprisals(sent)
        if not args.no_clip:
            values = [lm.clip_surprisal(v) for v in values]
        blocks.append(
            "\n".join(f"{w}\t{fmt_float(v)}" for w, v in zip(sent.words, values))
        )
    write_output(args.output, args, seed, "\n\n".join(blocks) + "\n")
    return 0


# --- train ----------------------------------------------------------------------


def _train_config(args, host) -> TrainConfig:
    return TrainConfig(
        attention=args.attention,
        dim=args.dim,
        epochs=args.epochs,
        batch_size=args.batch,
        negatives=getattr(args, "neg", 2),
        optimizer=args.optimizer,
        lr=args.lr,
        lam=getattr(args, "lam", 1e-5),
        seed=resolve_seed(args),
        init_scale=args.init_scale,
        length_factor=not args.no_length_factor,
        freeze_words=getattr(args, "freeze_words", True),
        attn_epochs=getattr(args, "attn_epochs", None),
    )


def _load_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                continue
            fields = stripped.split("\t")
            if len(fields) not in (2, 3):  # optional gold column is ignored
                raise ParseError(
                    f"expected 2 or 3 tab-separated fields, found {len(fields)}",
                    path=path, line=lineno,
                )
            pairs.append(
                (
                    parse_tagged_sentence(fields[0], path=path, line=lineno),
                    parse_tagged_sentence(fields[1], path=path, line=lineno),
                )
            )
    if not pairs:
        raise ParseError("no phrase pairs found", path=path)
    return pairs


def cmd_train_scbow(args):
    config = _train_config(args, "scbow")
    documents = read_tagged_documents(args.corpus)
    init = load_embeddings(args.init) if args.init else None
    lm_model = lm.load_lm(args.lm) if args.lm else None
    bundle = train_scbow(documents, config, init_embeddings=init,
                         lm_model=lm_model, log=sys.stdout)
    _finish_bundle(bundle, args, config)
    return 0


def cmd_train_pp(args):
    config = _train_config(args, "pp")
    pairs = _load_pairs(args.pairs)
    attn_pairs = _load_pairs(args.attn_pairs) if args.attn_pairs else None
    init = load_embeddings(args.init) if args.init else None
    lm_model = lm.load_lm(args.lm) if args.lm else None
    bundle = train_pp(pairs, config, init_embeddings=init, attn_pairs=attn_pairs,
                      lm_model=lm_model, log=sys.stdout)
    _finish_bundle(bundle, args, config)
    return 0


def _finish_bundle(bundle, args, config):
    if args.lm:
        bundle.lm_ref = args.lm
    echo = config_echo(args, config.seed)
    for line in echo.strip().splitlines():
        k, _, v = line[2:].partition("=")
        bundle.metadata.setdefault(f"cli_{k}", v)
    save_bundle(bundle, args.output)


# --- embed -----------------------------------------------------------------------


def cmd_embed(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    sentences = read_tagged_sentences(args.input)
    embedder = make_embedder(args, bundle, tfidf_sentences=sentences)
    vec_lines = []
    weight_lines = ["sentence\ttoken\tweight"]
    for i, sent in enumerate(sentences):
        weights = embedder.weights(sent)
        vec = compose(sent, weights, bundle.embeddings,
                      length_factor=not args.no_length_factor)
        vec_lines.append("\t".join(fmt_float(v) for v in vec))
        for w, wt in zip(sent.words, weights):
            weight_lines.append(f"{i}\t{w}\t{fmt_float(wt)}")
    write_output(args.output, args, seed, "\n".join(vec_lines) + "\n")
    if args.weights_out:
        atomic_write_text(
            args.weights_out,
            config_echo(args, seed) + "\n".join(weight_lines) + "\n",
        )
    return 0


# --- eval ------------------------------------------------------------------------


def cmd_eval_sts(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    datasets = [(os.path.basename(p), evaluation.load_sts_file(p)) for p in args.datasets]
    all_sentences = [s for _, exs in datasets for ex in exs for s in (ex.s1, ex.s2)]
    embedder = make_embedder(args, bundle, tfidf_sentences=all_sentences)
    rows = evaluation.eval_sts_files(datasets, embedder)
    body = ["dataset\tpearson\tspearman\tn\toov_pairs"]
    for name, res in rows:
        body.append(
            f"{name}\t{fmt_float(res.pearson)}\t{fmt_float(res.spearman)}"
            f"\t{res.n}\t{res.oov_pairs}"
        )
    write_output(args.report, args, seed, "\n".join(body) + "\n")
    return 0


def cmd_eval_rt(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    records = evaluation.load_rt_file(args.input)
    embedder = make_embedder(
        args, bundle, tfidf_sentences=[r.sentence for r in records]
    )
    reports = evaluation.eval_reading_time(records, embedder)
    body = ["measure\tpearson\tspearman\tpvalue\tsignificant\tn\tskipped"]
    for name in evaluation.RT_MEASURES:
        rep = reports[name]
        body.append(
            f"{name}\t{fmt_float(rep.pearson)}\t{fmt_float(rep.spearman)}"
            f"\t{fmt_float(rep.pvalue)}\t{rep.star}\t{rep.n}\t{rep.skipped}"
        )
    write_output(args.output, args, seed, "\n".join(body) + "\n")
    return 0


# --- analyze -----------------------------------------------------------------------


def _analysis_embedder(args, bundle, sentences):
    return make_embedder(args, bundle, tfidf_sentences=sentences)


def cmd_analyze_tags(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    sentences = read_tagged_sentences(args.corpus)
    embedder = _analysis_embedder(args, bundle, sentences)
    rows = evaluation.tag_attention_profile(
        sentences, embedder, tag_kind=args.kind, top=args.top
    )
    body = ["tag,token_count,mean_attention"]
    body += [f"{tag},{count},{fmt_float(mean)}" for tag, count, mean in rows]
    write_output(args.output, args, seed, "\n".join(body) + "\n")
    return 0


def cmd_analyze_extremes(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    sentences = read_tagged_sentences(args.corpus)
    embedder = _analysis_embedder(args, bundle, sentences)
    lowest, highest, note = evaluation.extreme_attention_words(
        sentences, embedder, k=args.k, min_occurrences=args.min_occurrences
    )
    body = ["group\tword\toccurrences\tmean_attention"]
    for group, rows in (("low", lowest), ("high", highest)):
        for word, count, mean in rows:
            body.append(f"{group}\t{word}\t{count}\t{fmt_float(mean)}")
    if note:
        body.append(f"# note: {note}")
    write_output(args.output, args, seed, "\n".join(body) + "\n")
    return 0


def cmd_analyze_nearest(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    rows = evaluation.nearest_words_to_tag(args.tag, bundle, args.kind, args.k)
    body = ["word\tcosine"]
    body += [f"{w}\t{fmt_float(c)}" for w, c in rows]
    write_output(args.output, args, seed, "\n".join(body) + "\n")
    return 0


def cmd_analyze_norms(args):
    seed = resolve_seed(args)
    bundle = load_bundle(args.bundle)
    rows = evaluation.tag_norms(bundle, args.kind)
    body = ["tag\tl2_norm"]
    body += [f"{t}\t{fmt_float(v)}" for t, v in rows]
    write_output(args.output, args, seed, "\n".join(body) + "\n")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnsent",
        description="Attention-weighted sentence embeddings: language-model "
                    "surprisal, tag-vector, and tf-idf weighting over word "
                    "vector averages.",
    )
    parser.add_argument("--version", action="version", version=f"attnsent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(group, name, **kw):
        # defaults surface in every subcommand's --help
        return group.add_parser(
            name, formatter_class=argparse.ArgumentDefaultsHelpFormatter, **kw
        )

    # lm
    p_lm = sub.add_parser("lm", help="n-gram language model with modified Kneser-Ney smoothing")
    lm_sub = p_lm.add_subparsers(dest="lm_command", required=True)
    p = add_parser(lm_sub, "build", help="count a corpus and fit the model")
    p.add_argument("corpus", help="tagged corpus, one sentence per line")
    p.add_argument("--order", type=positive_int, default=5, help="n-gram order")
    p.add_argument("--min-count", type=positive_int, default=1,
                   help="words rarer than this become the unknown token")
    p.add_argument("-o", "--output", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_lm_build)

    p = add_parser(lm_sub, "surprisal", help="per-token surprisal as TSV")
    p.add_argument("input", help="tagged sentences, one per line")
    p.add_argument("--lm", required=True)
    p.add_argument("--no-clip", action="store_true",
                   help="emit raw values instead of clipping into [0, 10]")
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_lm_surprisal)

    # train
    p_train = sub.add_parser("train", help="train word (and tag) vectors")
    train_sub = p_train.add_subparsers(dest="train_command", required=True)

    p = add_parser(train_sub, "scbow", help="adjacent-sentence cross-entropy objective")
    p.add_argument("--corpus", required=True,
                   help="tagged corpus; blank lines separate documents")
    p.add_argument("--init", default=None, help="initial word vectors (.vec)")
    p.add_argument("--attention", choices=ATTENTION_KINDS, default="uniform",
                   help="attention scheme to train")
    p.add_argument("--lm", default=None, help="language model for surprisal attention")
    p.add_argument("--dim", type=positive_int, default=300, help="vector dimension")
    p.add_argument("--epochs", type=nonneg_int, default=1, help="training epochs")
    p.add_argument("--batch", type=positive_int, default=100, help="instances per update")
    p.add_argument("--neg", type=positive_int, default=2,
                   help="random non-adjacent sentences per instance")
    p.add_argument("--optimizer", choices=("adadelta", "adagrad"), default=None,
                   help="default: adadelta")
    p.add_argument("--lr", type=nonneg_float, default=None,
                   help="default: 0.001 for adadelta, 0.05 for adagrad")
    p.add_argument("--init-scale", type=nonneg_float, default=0.1,
                   help="stddev of random word-vector init when --init is absent")
    p.add_argument("--no-length-factor", action="store_true")
    p.add_argument("-o", "--output", required=True, help="bundle directory")
    add_seed(p)
    p.set_defaults(func=cmd_train_scbow, validate=check_sur_needs_lm)

    p = add_parser(train_sub, "pp", help="paraphrase max-margin objective")
    p.add_argument("--pairs", required=True, help="TSV phrase pairs in tagged format")
    p.add_argument("--attn-pairs", default=None,
                   help="sentence pairs for the attention phase (default: --pairs)")
    p.add_argument("--init", default=None)
    p.add_argument("--attention", choices=ATTENTION_KINDS, default="uniform",
                   help="attention scheme to train")
    p.add_argument("--lm", default=None, help="language model for surprisal attention")
    p.add_argument("--dim", type=positive_int, default=300, help="vector dimension")
    p.add_argument("--epochs", type=nonneg_int, default=10, help="word-vector training epochs")
    p.add_argument("--attn-epochs", type=nonneg_int, default=None,
                   help="epochs for the attention phase (default 10)")
    p.add_argument("--batch", type=positive_int, default=100, help="pairs per update")
    p.add_argument("--lambda", dest="lam", type=nonneg_float, default=1e-5,
                   help="word-matrix anchoring weight")
    freeze = p.add_mutually_exclusive_group()
    freeze.add_argument("--freeze-words", dest="freeze_words", action="store_true",
                        default=True, help="keep word vectors fixed in the attention phase")
    freeze.add_argument("--no-freeze-words", dest="freeze_words", action="store_false")
    p.add_argument("--optimizer", choices=("adadelta", "adagrad"), default=None,
                   help="default: adagrad")
    p.add_argument("--lr", type=nonneg_float, default=None,
                   help="default: 0.05 for adagrad, 0.001 for adadelta")
    p.add_argument("--init-scale", type=nonneg_float, default=0.1,
                   help="stddev of random word-vector init when --init is absent")
    p.add_argument("--no-length-factor", action="store_true")
    p.add_argument("-o", "--output", required=True, help="bundle directory")
    add_seed(p)
    p.set_defaults(func=cmd_train_pp, validate=check_sur_needs_lm)

    # embed
    p = add_parser(sub, "embed", help="compose sentence vectors")
    p.add_argument("input", help="tagged sentences, one per line")
    p.add_argument("--bundle", required=True)
    add_attention(p)
    p.add_argument("--weights-out", default=None, help="also write per-token weights")
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_embed, validate=check_sur_needs_lm)

    # eval
    p_eval = sub.add_parser("eval", help="evaluation harnesses")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p = add_parser(eval_sub, "sts", help="semantic textual similarity")
    p.add_argument("datasets", nargs="+", help="TSV files: gold, sentence1, sentence2")
    p.add_argument("--bundle", required=True)
    add_attention(p)
    p.add_argument("--report", default=None, help="report file (default stdout)")
    add_seed(p)
    p.set_defaults(func=cmd_eval_sts, validate=check_sur_needs_lm)

    p = add_parser(eval_sub, "rt", help="reading-time correlation")
    p.add_argument("input", help="TSV: token, fpass, gopast, rb; blank line between sentences")
    p.add_argument("--bundle", required=True)
    add_attention(p)
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_eval_rt, validate=check_sur_needs_lm)

    # analyze
    p_an = sub.add_parser("analyze", help="attention and tag-vector analysis")
    an_sub = p_an.add_subparsers(dest="analyze_command", required=True)

    p = add_parser(an_sub, "tags", help="mean attention per tag")
    p.add_argument("--bundle", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", choices=("pos", "ccg"), default="pos",
                   help="which tag layer to profile")
    p.add_argument("--top", type=positive_int, default=20)
    add_attention(p)
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_analyze_tags, validate=check_sur_needs_lm)

    p = add_parser(an_sub, "extremes", help="lowest/highest mean-attention words")
    p.add_argument("--bundle", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("-k", type=positive_int, default=5)
    p.add_argument("--min-occurrences", type=positive_int, default=2)
    add_attention(p)
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_analyze_extremes, validate=check_sur_needs_lm)

    p = add_parser(an_sub, "nearest", help="words closest to a tag vector")
    p.add_argument("--bundle", required=True)
    p.add_argument("--tag", required=True)
    p.add_argument("-k", type=nonneg_int, default=3)
    p.add_argument("--kind", choices=("pos", "ccg"), default="pos")
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_analyze_nearest)

    p = add_parser(an_sub, "norms", help="tags ranked by vector L2 norm")
    p.add_argument("--bundle", required=True)
    p.add_argument("--kind", choices=("pos", "ccg"), default="pos")
    p.add_argument("-o", "--output", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_analyze_norms)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    validate = getattr(args, "validate", None)
    if validate is not None:
        validate(args, parser)  # exits 2 on bad flag combinations
    try:
        return args.func(args)
    except AttnsentError as exc:
        print(f"ERROR:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR:io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
