"""Command-line entry point: ``marginmine <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

import numpy as np

from marginmine import embed_io, evalsuite, prefilter, synthgen
from marginmine.margin import MarginFunction, ScoringConfig, score_all
from marginmine.records import GoldAlignment, MiningError
from marginmine.retrieval import FilterConfig, RetrievalStrategy, filter_candidates, forward_candidates, mine
from marginmine.simcore import DEFAULT_BLOCK_SIZE, DuplicateRule, default_threads

log = logging.getLogger("marginmine")

EXIT_USAGE = 1
EXIT_DATA = 2

RETRIEVAL_FLAGS = {
    "fwd": RetrievalStrategy.FORWARD,
    "bwd": RetrievalStrategy.BACKWARD,
    "intersect": RetrievalStrategy.INTERSECTION,
    "max": RetrievalStrategy.MAX_SCORE,
}
DUP_FLAGS = {"auto": None, "none": DuplicateRule.NONE, "text": DuplicateRule.BY_TEXT,
             "vector": DuplicateRule.BY_VECTOR}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _add_embedding_args(p):
    p.add_argument("--src-emb", required=True, help="raw little-endian float32 source embeddings")
    p.add_argument("--tgt-emb", required=True, help="raw little-endian float32 target embeddings")
    p.add_argument("--dim", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, default=4, help="neighborhood size (default 4)")
    p.add_argument("--dup", choices=sorted(DUP_FLAGS), default="auto",
                   help="duplicate rule for neighbor search (auto: text if sentence files given, else vector)")
    p.add_argument("--permissive", action="store_true",
                   help="exclude all-zero embedding rows instead of failing")
    p.add_argument("--src-text", help="source sentences, line i <-> embedding row i")
    p.add_argument("--tgt-text", help="target sentences, line i <-> embedding row i")
    p.add_argument("--ids", action="store_true", help="sentence files are 'id<TAB>text'")
    p.add_argument("--block-size", type=_positive_int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $MARGINMINE_THREADS or all cores)")


def _add_margin_arg(p, default="ratio"):
    p.add_argument("--margin", choices=[m.value for m in MarginFunction], default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marginmine", description="Margin-based bitext mining and filtering.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", help="mine candidate pairs from two embedding files")
    _add_embedding_args(p)
    _add_margin_arg(p)
    p.add_argument("--retrieval", choices=sorted(RETRIEVAL_FLAGS), default="max")
    p.add_argument("--threshold", type=float)
    p.add_argument("--top-n", type=int)
    p.add_argument("--full-rerank", action="store_true",
                   help="re-rank every target instead of only the k cosine-nearest")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("score", help="margin-score given pairs or an aligned bitext")
    _add_embedding_args(p)
    _add_margin_arg(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pairs", help="TSV of 'src_index<TAB>tgt_index' lines")
    src.add_argument("--aligned", action="store_true", help="score row i against row i")
    p.add_argument("--batch-size", type=_positive_int, default=None)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("filter", help="threshold or truncate a candidate file")
    p.add_argument("--candidates", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--top-n", type=int)
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("prefilter", help="dedup and rule-filter a sentence-pair corpus")
    p.add_argument("--src-text")
    p.add_argument("--tgt-text")
    p.add_argument("--tsv", help="single 'src<TAB>tgt' file instead of two aligned files")
    p.add_argument("--lang-tags", help="sidecar with one 'srclang<TAB>tgtlang' line per pair")
    p.add_argument("--src-lang")
    p.add_argument("--tgt-lang")
    p.add_argument("--min-tokens", type=int, default=3)
    p.add_argument("--max-tokens", type=int, default=80)
    p.add_argument("--max-overlap", type=float, default=0.5)
    p.add_argument("--max-len-ratio", type=float, default=2.0)
    p.add_argument("--out-src")
    p.add_argument("--out-tgt")
    p.add_argument("--out-tsv")
    p.add_argument("--stats", required=True, help="write 'reason<TAB>count' lines here")

    p = sub.add_parser("eval", help="P/R/F1 of a candidate file against gold")
    p.add_argument("--candidates")
    p.add_argument("--gold", required=True)
    p.add_argument("--gold-mode", choices=["index", "id"], default="index")
    p.add_argument("--src-text")
    p.add_argument("--tgt-text")
    p.add_argument("--optimize-threshold", action="store_true")
    p.add_argument("--grid", action="store_true",
                   help="mine with every margin and retrieval strategy and print best-threshold P/R/F1")
    p.add_argument("--src-emb")
    p.add_argument("--tgt-emb")
    p.add_argument("--dim", type=_positive_int)
    p.add_argument("--k", type=_positive_int, default=4)
    p.add_argument("--threads", type=_positive_int, default=None)

    p = sub.add_parser("reconstruct", help="forward retrieval P@1 against an identity or given gold")
    _add_embedding_args(p)
    _add_margin_arg(p)
    p.add_argument("--gold", help="index TSV; identity alignment when omitted")

    p = sub.add_parser("synth", help="write a seeded synthetic bitext")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-pairs", type=int, default=1000)
    p.add_argument("--n-distractors", type=int, default=1000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.8)
    p.add_argument("--n-hubs", type=int, default=20)
    p.add_argument("--hub-strength", type=float, default=0.9)
    p.add_argument("--anisotropy", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)
    return parser


# helpers ---------------------------------------------------------------------

def _filter_config(args) -> Optional[FilterConfig]:
    if args.top_n is not None and args.top_n < 0:
        raise UsageError("--top-n must be >= 0")
    if args.threshold is None and args.top_n is None:
        return None
    return FilterConfig(args.threshold, args.top_n)


def _load_side(args):
    if bool(args.src_text) != bool(args.tgt_text):
        raise UsageError("--src-text and --tgt-text go together")
    src = embed_io.normalize_rows(embed_io.load_embeddings(args.src_emb, args.dim, args.permissive))
    tgt = embed_io.normalize_rows(embed_io.load_embeddings(args.tgt_emb, args.dim, args.permissive))
    src_c = tgt_c = None
    if args.src_text:
        src_c = embed_io.load_corpus(args.src_text, args.ids)
        tgt_c = embed_io.load_corpus(args.tgt_text, args.ids)
        for c, m, side in ((src_c, src, "source"), (tgt_c, tgt, "target")):
            if len(c) != m.rows:
                raise MiningError(f"{side} sentence file has {len(c)} lines but {m.rows} embedding rows")
    return src, tgt, src_c, tgt_c


def _scoring(args) -> ScoringConfig:
    return ScoringConfig(k=args.k, margin=MarginFunction(args.margin), dup=DUP_FLAGS[args.dup])


def _search_kw(args) -> dict:
    return dict(block_size=args.block_size, threads=args.threads or default_threads())


# subcommands -----------------------------------------------------------------

def cmd_mine(args) -> int:
    fcfg = _filter_config(args)
    src, tgt, src_c, tgt_c = _load_side(args)
    pairs = mine(src, tgt, _scoring(args), RETRIEVAL_FLAGS[args.retrieval], full_rerank=args.full_rerank,
                 src_corpus=src_c, tgt_corpus=tgt_c, **_search_kw(args))
    if fcfg is not None:
        pairs = filter_candidates(pairs, fcfg)
    embed_io.write_candidates(pairs, args.output, (src_c, tgt_c) if src_c is not None else None)
    if pairs:
        print(f"kept {len(pairs)} pairs, score min {pairs[-1].score:.6f} max {pairs[0].score:.6f}",
              file=sys.stderr)
    else:
        print("kept 0 pairs", file=sys.stderr)
    return 0


def _read_index_pairs(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) < 2:
                raise MiningError(f"{path}:{lineno}: expected 'src_index<TAB>tgt_index'")
            try:
                out.append((int(fields[0]), int(fields[1])))
            except ValueError:
                raise MiningError(f"{path}:{lineno}: non-integer index") from None
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def cmd_score(args) -> int:
    src, tgt, src_c, tgt_c = _load_side(args)
    if args.aligned:
        if src.rows != tgt.rows:
            raise MiningError(f"--aligned needs equal row counts, got {src.rows} and {tgt.rows}")
        pairs = np.repeat(np.arange(src.rows, dtype=np.int64)[:, None], 2, axis=1)
    else:
        pairs = _read_index_pairs(args.pairs)
    scores = score_all(src, tgt, pairs, _scoring(args), batch_size=args.batch_size,
                       src_corpus=src_c, tgt_corpus=tgt_c, **_search_kw(args))
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        for (s, t), sc in zip(pairs.tolist(), scores.tolist()):
            if src_c is not None and args.aligned:
                a, b = src_c.sentences[s], tgt_c.sentences[t]
            elif src_c is not None and src_c.ids is not None:
                a, b = src_c.ids[s], tgt_c.ids[t]
            else:
                a, b = s, t
            fh.write(f"{embed_io.format_score(sc)}\t{a}\t{b}\n")
    print(f"scored {len(scores)} pairs", file=sys.stderr)
    return 0


def cmd_filter(args) -> int:
    fcfg = _filter_config(args)
    if fcfg is None:
        raise UsageError("filter needs --threshold and/or --top-n")
    pairs = filter_candidates(embed_io.read_candidates(args.candidates), fcfg)
    embed_io.write_candidates(pairs, args.output)
    print(f"kept {len(pairs)} pairs", file=sys.stderr)
    return 0


def _read_pairs(args):
    if args.tsv:
        with open(args.tsv, encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, 1):
                src, sep, tgt = line.rstrip("\n").partition("\t")
                if not sep:
                    raise MiningError(f"{args.tsv}:{lineno}: expected 'src<TAB>tgt'")
                yield src, tgt
    else:
        with open(args.src_text, encoding="utf-8", newline="\n") as fs, \
                open(args.tgt_text, encoding="utf-8", newline="\n") as ft:
            n = 0
            for n, (a, b) in enumerate(zip(fs, ft), 1):
                yield a.rstrip("\n"), b.rstrip("\n")
            if fs.readline() or ft.readline():
                raise MiningError(f"source and target files differ in length after line {n}")


def _read_tags(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 2:
                raise MiningError(f"{path}:{lineno}: expected 'srclang<TAB>tgtlang'")
            yield fields[0], fields[1]


def cmd_prefilter(args) -> int:
    if bool(args.tsv) == bool(args.src_text or args.tgt_text):
        raise UsageError("give either --tsv or both --src-text and --tgt-text")
    if not args.tsv and not (args.src_text and args.tgt_text):
        raise UsageError("--src-text and --tgt-text go together")
    if bool(args.out_tsv) == bool(args.out_src or args.out_tgt) or (
            not args.out_tsv and not (args.out_src and args.out_tgt)):
        raise UsageError("give either --out-tsv or both --out-src and --out-tgt")
    if bool(args.src_lang) != bool(args.tgt_lang):
        raise UsageError("--src-lang and --tgt-lang go together")
    if args.lang_tags and not args.src_lang:
        raise UsageError("--lang-tags needs --src-lang and --tgt-lang")
    try:
        cfg = prefilter.FilterRuleConfig(args.min_tokens, args.max_tokens, args.max_overlap, args.max_len_ratio,
                                         (args.src_lang, args.tgt_lang) if args.src_lang else None)
    except MiningError as e:
        raise UsageError(str(e)) from None

    stats = prefilter.empty_stats()
    tags = _read_tags(args.lang_tags) if args.lang_tags else None
    kept_stream = prefilter.iter_prefilter(_read_pairs(args), cfg, tags, stats)
    kept = 0
    if args.out_tsv:
        with open(args.out_tsv, "w", encoding="utf-8", newline="\n") as fo:
            for src, tgt in kept_stream:
                fo.write(f"{src}\t{tgt}\n")
                kept += 1
    else:
        with open(args.out_src, "w", encoding="utf-8", newline="\n") as fs, \
                open(args.out_tgt, "w", encoding="utf-8", newline="\n") as ft:
            for src, tgt in kept_stream:
                fs.write(src + "\n")
                ft.write(tgt + "\n")
                kept += 1
    prefilter.write_stats(stats, args.stats)
    print(f"kept {kept} pairs, rejected {sum(stats.values())}", file=sys.stderr)
    return 0


def _eval_corpora(args):
    if args.gold_mode == "id":
        if not (args.src_text and args.tgt_text):
            raise UsageError("--gold-mode id needs --src-text and --tgt-text in 'id<TAB>text' form")
        return (embed_io.load_corpus(args.src_text, with_ids=True),
                embed_io.load_corpus(args.tgt_text, with_ids=True))
    return None


def cmd_eval(args) -> int:
    if args.grid:
        if not (args.src_emb and args.tgt_emb and args.dim):
            raise UsageError("--grid needs --src-emb, --tgt-emb and --dim")
    elif not args.candidates:
        raise UsageError("eval needs --candidates (or --grid with embeddings)")
    corpora = _eval_corpora(args)
    gold = embed_io.load_gold(args.gold, "id-tsv" if corpora else "index-tsv",
                              *(corpora or (None, None)))
    if not len(gold):
        raise MiningError(f"{args.gold}: empty gold alignment")

    if args.grid:
        src = embed_io.normalize_rows(embed_io.load_embeddings(args.src_emb, args.dim))
        tgt = embed_io.normalize_rows(embed_io.load_embeddings(args.tgt_emb, args.dim))
        rows = evalsuite.strategy_grid(src, tgt, gold, k=args.k, threads=args.threads or default_threads())
        print(evalsuite.format_grid(rows))
        return 0

    cands = embed_io.read_candidates(args.candidates, corpora)
    if args.optimize_threshold:
        _, rep = evalsuite.optimize_threshold(cands, gold)
    else:
        rep = evalsuite.prf1((c.key for c in cands), gold)
    print(rep.as_text())
    print(rep.as_record())
    return 0


def cmd_reconstruct(args) -> int:
    src, tgt, src_c, tgt_c = _load_side(args)
    if src.rows != tgt.rows:
        log.warning("source has %d rows and target %d; reconstruction expects equal sizes", src.rows, tgt.rows)
    if args.gold:
        gold = embed_io.load_gold(args.gold, "index-tsv")
    else:
        gold = GoldAlignment(frozenset((i, i) for i in range(min(src.rows, tgt.rows))))
    cands = forward_candidates(src, tgt, _scoring(args), src_corpus=src_c, tgt_corpus=tgt_c, **_search_kw(args))
    p1 = evalsuite.precision_at_1(cands, gold, n_sources=src.rows - len(src.excluded))
    print(f"P@1\t{p1:.6f}")
    return 0


def cmd_synth(args) -> int:
    cfg = synthgen.SynthConfig(args.n_pairs, args.n_distractors, args.dim, args.noise, args.n_hubs,
                               args.hub_strength, args.seed, args.anisotropy)
    try:
        cfg.validate()
    except MiningError as e:
        raise UsageError(str(e)) from None
    paths = synthgen.write_synthetic(synthgen.generate(cfg), args.out_dir)
    print(f"wrote {', '.join(sorted(paths))} to {args.out_dir}", file=sys.stderr)
    return 0


COMMANDS = {
    "mine": cmd_mine,
    "score": cmd_score,
    "filter": cmd_filter,
    "prefilter": cmd_prefilter,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"marginmine {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MiningError, OSError) as e:
        print(f"marginmine {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
