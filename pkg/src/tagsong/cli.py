"""Command-line interface: factorize, train, evaluate, query, nearest-words, synth.

Exit codes are a stable scripting contract: 0 on success, 1 on runtime
errors (bad files, numerical failures, unresolvable tags), 2 on usage
errors (missing or invalid flags).

Flag defaults marked "reference" reproduce the published training recipe
(k=200, epochs=200, 10,000 triplets/epoch, lr=1e-4, wd=1e-4); the rest are
tool defaults chosen for this artifact.
"""

import argparse
import sys
from pathlib import Path

from . import backend
from .core import make_rng
from .dataset import (
    artist_level_split,
    attach_categories,
    attach_tag_vectors,
    bind_inputs,
    load_annotations,
    load_categories,
    topk_tag_filter,
)
from .errors import ParseError, TagsongError
from .net import load_checkpoint
from .retrieval import build_song_index, evaluate, export_report, retrieve
from .synth import generate, write_files
from .trainer import TrainConfig, train
from .triplet import SamplerConfig
from .wmf import als_factorize, interactions_from_plays, save_factors, wmf_objective
from .wordvec import load_word_vectors, nearest_words
from .dataset import load_plays


def _parse_ratios(text: str, parser: argparse.ArgumentParser):
    parts = text.split(",")
    if len(parts) != 3:
        parser.error(f"--ratios needs 3 comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        parser.error(f"--ratios values must be numeric, got {text!r}")


def _add_dataset_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--annotations", required=True, help="annotations.tsv path")
    sub.add_argument("--vectors", required=True, help="word-vector file path")
    sub.add_argument(
        "--source",
        required=True,
        choices=["cultural", "acoustic", "concat"],
        help="song input source: cultural factors, acoustic features, or both concatenated",
    )
    sub.add_argument("--factors", help="factor file (required for cultural/concat)")
    sub.add_argument("--features", help="features.tsv (required for acoustic/concat)")
    sub.add_argument(
        "--top-tags",
        type=int,
        default=0,
        help="keep only the K most frequent tags; 0 keeps all (tool default: 0)",
    )
    sub.add_argument(
        "--ratios",
        default="0.8,0.1,0.1",
        help="train,valid,test split ratios (tool default: 0.8,0.1,0.1)",
    )
    sub.add_argument("--categories", help="optional categories.tsv for per-category metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagsong",
        description="Tag/song embedding space: factorize plays, train branches, retrieve songs by tag.",
    )
    parser.add_argument("--threads", type=int, help="cap compiled-kernel worker threads")
    commands = parser.add_subparsers(dest="command", required=True)

    fac = commands.add_parser("factorize", help="factorize play counts into song vectors")
    fac.add_argument("--plays", required=True, help="plays.tsv path")
    fac.add_argument("--k", type=int, default=200, help="latent dimension (reference default: 200)")
    fac.add_argument("--reg", type=float, default=0.01, help="L2 regularizer (tool default: 0.01)")
    fac.add_argument("--alpha", type=float, default=40.0, help="confidence weight (tool default: 40)")
    fac.add_argument("--sweeps", type=int, default=15, help="ALS sweeps (tool default: 15)")
    fac.add_argument("--seed", type=int, default=0)
    fac.add_argument("--out", required=True, help="output factor file")

    tr = commands.add_parser("train", help="train the tag and song branches")
    _add_dataset_flags(tr)
    tr.add_argument(
        "--sampler",
        choices=["random", "balanced", "balanced_weighted"],
        default="balanced_weighted",
        help="triplet sampling strategy (tool default: balanced_weighted)",
    )
    tr.add_argument("--margin", type=float, default=0.2, help="triplet margin (tool default: 0.2)")
    tr.add_argument("--epochs", type=int, default=200, help="training epochs (reference default: 200)")
    tr.add_argument(
        "--triplets-per-epoch",
        type=int,
        default=10000,
        help="triplets per epoch (reference default: 10000)",
    )
    tr.add_argument("--batch", type=int, default=128, help="batch size (tool default: 128)")
    tr.add_argument("--lr", type=float, default=1e-4, help="learning rate (reference default: 1e-4)")
    tr.add_argument("--wd", type=float, default=1e-4, help="weight decay (reference default: 1e-4)")
    tr.add_argument(
        "--lambda-clip",
        type=float,
        default=1e6,
        help="weight cap for distance-weighted sampling (tool default: 1e6)",
    )
    tr.add_argument(
        "--cutoff",
        type=float,
        default=0.5,
        help="lower distance clip for distance-weighted sampling (tool default: 0.5)",
    )
    tr.add_argument("--validation-every", type=int, default=10, help="epochs between validation reports")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out-dir", required=True, help="directory for checkpoints and the report")

    ev = commands.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    _add_dataset_flags(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument(
        "--split",
        choices=["train", "valid", "test", "all"],
        default="test",
        help="which split to evaluate (tool default: test)",
    )
    ev.add_argument("--seed", type=int, default=0, help="split seed; must match the training run")
    ev.add_argument("--out", help="optional report TSV path")

    qu = commands.add_parser("query", help="rank songs for one tag")
    qu.add_argument("--checkpoint", required=True)
    qu.add_argument("--vectors", required=True, help="word-vector file path")
    qu.add_argument(
        "--index-from",
        required=True,
        help="directory holding annotations.tsv plus features.tsv and/or factors.txt",
    )
    qu.add_argument("--source", choices=["cultural", "acoustic", "concat"], default="acoustic")
    qu.add_argument("--tag", required=True)
    qu.add_argument("--k", type=int, default=10)

    nw = commands.add_parser("nearest-words", help="nearest vocabulary tokens to a query token")
    nw.add_argument("--vectors", required=True)
    nw.add_argument("--token", required=True)
    nw.add_argument("--k", type=int, default=10)

    sy = commands.add_parser("synth", help="generate a synthetic planted-structure dataset")
    sy.add_argument("--songs", type=int, default=2000)
    sy.add_argument("--tags", type=int, default=50)
    sy.add_argument("--latent-dim", type=int, default=16)
    sy.add_argument("--noise", type=float, default=0.3, help="feature noise sigma")
    sy.add_argument("--wordvec-noise", type=float, default=0.1)
    sy.add_argument("--feature-dim", type=int, default=64)
    sy.add_argument("--users", type=int, default=400)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out-dir", required=True)
    return parser


def _validate_source_flags(parser, args) -> None:
    if args.source in ("cultural", "concat") and not args.factors:
        parser.error(f"--source {args.source} requires --factors")
    if args.source in ("acoustic", "concat") and not args.features:
        parser.error(f"--source {args.source} requires --features")


def _build_dataset(args):
    records = load_annotations(args.annotations)
    n_distinct = len({t for rec in records for t in rec.tags})
    k = args.top_tags if args.top_tags > 0 else n_distinct
    filtered, vocab = topk_tag_filter(records, k)
    ds = bind_inputs(filtered, vocab, args.source, factors=args.factors, features=args.features)
    table = load_word_vectors(args.vectors)
    attach_tag_vectors(ds, table)
    if args.categories:
        attach_categories(ds, load_categories(args.categories))
    return filtered, ds, table


def cmd_factorize(parser, args) -> int:
    if args.k < 1:
        parser.error(f"--k must be >= 1, got {args.k}")
    if args.sweeps < 1:
        parser.error(f"--sweeps must be >= 1, got {args.sweeps}")
    if args.reg < 0:
        parser.error(f"--reg must be >= 0, got {args.reg}")
    if args.alpha <= 0:
        parser.error(f"--alpha must be > 0, got {args.alpha}")
    plays = load_plays(args.plays)
    user_ids, song_ids, R = interactions_from_plays(plays)
    model = als_factorize(
        R, k=args.k, reg=args.reg, alpha=args.alpha, n_sweeps=args.sweeps, rng=make_rng(args.seed)
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_factors(args.out, song_ids, model)
    obj = wmf_objective(R, model)
    print(
        f"factorized {len(user_ids)} users x {len(song_ids)} songs "
        f"({R.n_obs} plays) at k={args.k}; objective {obj:.6g}; wrote {args.out}"
    )
    return 0


def cmd_train(parser, args) -> int:
    _validate_source_flags(parser, args)
    if args.epochs < 1:
        parser.error(f"--epochs must be >= 1, got {args.epochs}")
    ratios = _parse_ratios(args.ratios, parser)
    filtered, ds, _ = _build_dataset(args)
    split = artist_level_split(filtered, ratios=ratios, seed=args.seed)
    config = TrainConfig(
        epochs=args.epochs,
        triplets_per_epoch=args.triplets_per_epoch,
        batch_size=args.batch,
        lr=args.lr,
        weight_decay=args.wd,
        margin=args.margin,
        sampler=SamplerConfig(
            strategy=args.sampler, lambda_clip=args.lambda_clip, cutoff_d_min=args.cutoff
        ),
        seed=args.seed,
        validation_every=args.validation_every,
    )
    out_dir = Path(args.out_dir)
    _, _, report = train(ds, split, config, out_dir=out_dir)
    report.write_tsv(out_dir / "report.tsv")
    last = report.rows[-1]
    print(
        f"trained {args.epochs} epochs ({args.sampler}); "
        f"validation map {last.map:.4f} p10 {last.p_at_10:.4f}; "
        f"checkpoints in {out_dir}"
    )
    return 0


def _load_branch_pair(path):
    branches, _ = load_checkpoint(path)
    if "tag" not in branches or "song" not in branches:
        raise ParseError(f"{path}: checkpoint must hold 'tag' and 'song' branches")
    return branches["tag"], branches["song"]


def cmd_evaluate(parser, args) -> int:
    _validate_source_flags(parser, args)
    ratios = _parse_ratios(args.ratios, parser)
    filtered, ds, table = _build_dataset(args)
    tag_branch, song_branch = _load_branch_pair(args.checkpoint)
    subset = None
    if args.split != "all":
        split = artist_level_split(filtered, ratios=ratios, seed=args.seed)
        subset = split.subset(args.split)
    report = evaluate(tag_branch, song_branch, ds, subset, table)
    print(f"map\t{report.map:.6f}")
    print(f"p10\t{report.p_at_10:.6f}")
    if report.per_category:
        for cat, ap in report.per_category:
            print(f"category\t{cat}\t{ap:.6f}")
    if args.out:
        export_report(args.out, report)
    return 0


def cmd_query(parser, args) -> int:
    if args.k < 1:
        parser.error(f"--k must be >= 1, got {args.k}")
    base = Path(args.index_from)
    annotations = base / "annotations.tsv"
    features = base / "features.tsv"
    factors = base / "factors.txt"
    records = load_annotations(annotations)
    n_distinct = len({t for rec in records for t in rec.tags})
    filtered, vocab = topk_tag_filter(records, n_distinct)
    ds = bind_inputs(
        filtered,
        vocab,
        args.source,
        factors=str(factors) if args.source in ("cultural", "concat") else None,
        features=str(features) if args.source in ("acoustic", "concat") else None,
    )
    table = load_word_vectors(args.vectors)
    tag_branch, song_branch = _load_branch_pair(args.checkpoint)
    index = build_song_index(song_branch, ds)
    results = retrieve(args.tag, tag_branch, table, index, args.k)
    for rank, (song_id, distance) in enumerate(results, start=1):
        print(f"{rank}\t{song_id}\t{distance:.6f}")
    return 0


def cmd_nearest_words(parser, args) -> int:
    if args.k < 1:
        parser.error(f"--k must be >= 1, got {args.k}")
    table = load_word_vectors(args.vectors)
    for rank, (token, sim) in enumerate(nearest_words(args.token, table, args.k), start=1):
        print(f"{rank}\t{token}\t{sim:.6f}")
    return 0


def cmd_synth(parser, args) -> int:
    if args.tags < 2:
        parser.error(f"--tags must be >= 2 (retrieval needs at least 2 tags), got {args.tags}")
    if args.songs < 2:
        parser.error(f"--songs must be >= 2, got {args.songs}")
    sd = generate(
        n_songs=args.songs,
        n_tags=args.tags,
        latent_dim=args.latent_dim,
        feature_dim=args.feature_dim,
        feature_noise=args.noise,
        wordvec_noise=args.wordvec_noise,
        n_users=args.users,
        seed=args.seed,
    )
    paths = write_files(sd, args.out_dir)
    print(
        f"wrote {len(sd.records)} songs, {len(sd.tag_names)} tags, "
        f"{len(sd.plays)} plays to {args.out_dir}"
    )
    for name in ("annotations", "features", "plays", "vectors"):
        print(f"  {paths[name]}")
    return 0


_DISPATCH = {
    "factorize": cmd_factorize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "query": cmd_query,
    "nearest-words": cmd_nearest_words,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error(f"--threads must be >= 1, got {args.threads}")
        if backend.active_backend() == "numba":
            import numba

            # requests above the pool size cap instead of erroring
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return _DISPATCH[args.command](parser, args)
    except (TagsongError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
