"""Command-line entry points.

Every option can also be set in a ``key = value`` config file passed with
``--config``; flags on the command line take precedence over the file.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime or
endpoint failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .anonymize import normalize_strategy
from .evaluate import DigitChunkOracle, VocabularyOracle, multi_token_stats
from .history import DEFAULT_L, DEFAULT_SCOPE
from .kgstore import DatasetError, TemporalKG, load_dataset, reference_stats, validate_statistics
from .pipeline import (
    PredictionMismatchError,
    evaluate_predictions,
    read_predictions,
    run_frequency,
    run_scorer,
    write_predictions,
)
from .samples import DEFAULT_CHARS_PER_TOKEN, DEFAULT_CONTEXT_TOKENS, ContextBudget, build_corpus, export_jsonl
from .scorers import CompletionScorer, EndpointConfig, EndpointError, ReplayScorer

logger = logging.getLogger("tkgforge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve_dataset(ref: str, data_root: str | None) -> Path:
    path = Path(ref)
    if path.is_dir():
        return path
    root = Path(data_root or os.environ.get("TKG_DATA_ROOT", "data"))
    for cand in (root / ref, root / ref.upper(), root / ref.lower()):
        if cand.is_dir():
            return cand
    raise DatasetError(f"dataset {ref!r} not found (looked in {path} and {root})")


def _load(ref: str, args) -> TemporalKG:
    path = _resolve_dataset(ref, args.data_root)
    name = ref if not Path(ref).is_dir() else path.name
    ts = args.time_step if args.time_step == "auto" else int(args.time_step)
    return load_dataset(path, name.lower(), time_step=ts)


def _parse_dataset_specs(args) -> list[tuple[str, int | None]]:
    specs = []
    for chunk in args.datasets or []:
        for item in chunk.split(","):
            item = item.strip()
            if not item:
                continue
            ref, sep, count = item.rpartition(":")
            if sep and count.isdigit():
                specs.append((ref, int(count)))
            else:
                specs.append((item, args.count))
    for ref in args.dataset or []:
        specs.append((ref, args.count))
    if not specs:
        raise ConfigError("no dataset given (use --dataset or --datasets)")
    return specs


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config") and not callable(v)}


def _budget(args) -> ContextBudget:
    return ContextBudget(args.context_tokens, args.chars_per_token)


def cmd_ingest(args) -> int:
    tkg = _load(args.dir, args)
    s = tkg.stats()
    print(f"dataset      {tkg.name}")
    print(f"entities     {s.num_entities}")
    print(f"relations    {s.num_relations}")
    print(f"train/valid/test  {s.num_train}/{s.num_valid}/{s.num_test}")
    if args.expect:
        ref = reference_stats(args.expect)
        if ref is None:
            logger.warning("no reference stats for %r; loaded without validation", args.expect)
            return EXIT_OK
        report = validate_statistics(tkg, ref)
        print(report.format())
        return EXIT_OK if report.passed else EXIT_CONFIG
    return EXIT_OK


def cmd_build_samples(args) -> int:
    specs = _parse_dataset_specs(args)
    datasets = [(_load(ref, args), count) for ref, count in specs]
    manifest, samples = build_corpus(
        datasets,
        stage=args.stage,
        strategy=args.strategy,
        L=args.L,
        seed=args.seed,
        split=args.split,
        directions=args.directions,
        mode=args.mode,
        budget=_budget(args),
        scope=args.scope,
        shuffle=not args.no_shuffle,
        rid_id_range=args.rid_id_range,
    )
    manifest.config = _resolved(args)
    out = Path(args.out)
    path = export_jsonl(samples, out / "samples.jsonl", manifest)
    print(f"wrote {len(samples)} samples to {path}")
    for name, n in manifest.counts.items():
        print(f"  {name}: {n}")
    return EXIT_OK


def _endpoint(args) -> EndpointConfig:
    if not args.endpoint:
        raise ConfigError("--scorer llm needs --endpoint")
    return EndpointConfig(
        base_url=args.endpoint,
        model=args.model,
        token_env=args.token_env,
        top_logprobs=args.top_logprobs,
        timeout=args.timeout,
        max_in_flight=args.max_in_flight,
        retries=args.retries,
        replay_path=args.replay_log,
    )


def cmd_run(args) -> int:
    tkg = _load(args.dataset[0], args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"scorer": args.scorer, "dataset": tkg.name, "split": args.split, "config": _resolved(args)}
    if args.scorer == "frequency":
        records = run_frequency(tkg, args.split, args.L, args.directions, args.scope, args.frequency_slots)
        write_predictions(records, out)
    else:
        if args.scorer == "replay":
            if not args.replay_from:
                raise ConfigError("--scorer replay needs --replay-from")
            scorer = ReplayScorer(args.replay_from)
        else:
            scorer = CompletionScorer(_endpoint(args))
        out.write_text("", encoding="utf-8")
        try:
            records = run_scorer(
                tkg,
                scorer,
                args.split,
                stage=args.stage,
                strategy=args.strategy,
                L=args.L,
                seed=args.seed,
                directions=args.directions,
                scope=args.scope,
                mode=args.mode,
                budget=_budget(args),
                limit=args.limit,
                sink=lambda recs: write_predictions(recs, out, append=True),
            )
        finally:
            if hasattr(scorer, "close"):
                scorer.close()
    unscored = sum(r.status == "unscored" for r in records)
    meta["queries"] = len(records)
    meta["unscored"] = unscored
    out.with_name(out.name + ".manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote predictions for {len(records)} queries to {out}")
    if unscored:
        print(f"{unscored} queries could not be scored", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(args) -> int:
    tkg = _load(args.dataset[0], args)
    records = read_predictions(args.predictions)
    manifest = Path(str(args.predictions) + ".manifest.json")
    meta = json.loads(manifest.read_text()) if manifest.exists() else {}
    meta.pop("config", None)
    report = evaluate_predictions(records, tkg, metadata=meta)
    paths = report.write(args.out, args.stem)
    print(report.to_markdown(), end="")
    b = report.overall
    print(f"queries={b.queries} abstained={b.abstained} unscored={b.unscored}")
    print(f"report written to {paths['json']}")
    return EXIT_OK


def cmd_stats(args) -> int:
    oracle = VocabularyOracle.from_file(args.vocab, args.space_prefix) if args.vocab else DigitChunkOracle(args.max_digits)
    rows = []
    for ref in args.dataset:
        tkg = _load(ref, args)
        rows.append(
            multi_token_stats(
                tkg, args.split, args.strategy, args.L, oracle, seed=args.seed, directions=args.directions, scope=args.scope
            )
        )
    print(f"oracle: {oracle.source}")
    print(f"{'':<12}" + "".join(f"{r.dataset:>12}" for r in rows))
    print(f"{'# Queries':<12}" + "".join(f"{r.num_queries:>12,}" for r in rows))
    print(f"{'# MT IDs':<12}" + "".join(f"{r.num_multi_token:>12,}" for r in rows))
    print(f"{'Percentage':<12}" + "".join(f"{r.percentage:>11.1f}%" for r in rows))
    if args.json:
        Path(args.json).write_text(json.dumps([r.to_dict() for r in rows], indent=2) + "\n")
    return EXIT_OK


def _common(p):
    p.add_argument("--data-root", help="directory holding dataset folders (default $TKG_DATA_ROOT or ./data)")
    p.add_argument("--time-step", default="1", help="divide timestamps by this step, or 'auto'")


def _history(p, split="test"):
    p.add_argument("--split", default=split, choices=["train", "valid", "test"])
    p.add_argument("--directions", default="both", choices=["both", "object", "subject"])
    p.add_argument("--L", "-L", dest="L", type=int, default=DEFAULT_L, help="history length")
    p.add_argument("--scope", default=DEFAULT_SCOPE, choices=["train", "train+valid", "train+valid+test"])
    p.add_argument("--seed", type=int, default=0)


def _rendering(p):
    p.add_argument("--stage", default="general", choices=["general", "specific"])
    p.add_argument("--strategy", default="rid", type=lambda s: normalize_strategy(s))
    p.add_argument("--mode", default="sft", choices=["sft", "icl"])
    p.add_argument("--context-tokens", type=int, default=DEFAULT_CONTEXT_TOKENS)
    p.add_argument("--chars-per-token", type=float, default=DEFAULT_CHARS_PER_TOKEN)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tkgforge", description="Temporal KG forecasting harness")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset and check its statistics")
    p.add_argument("dir")
    p.add_argument("--expect", help="reference dataset name, e.g. icews14")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-samples", help="render a sample corpus")
    p.add_argument("--dataset", action="append", help="dataset name or path (repeatable)")
    p.add_argument("--datasets", action="append", help="comma list of name[:count]")
    p.add_argument("--count", type=int, default=None, help="samples per dataset (default: all)")
    p.add_argument("--out", default="corpus")
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--rid-id-range", type=int, default=None)
    _common(p)
    _history(p, split="train")
    _rendering(p)
    p.set_defaults(func=cmd_build_samples)

    p = sub.add_parser("run", help="score queries and write predictions")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--scorer", default="frequency", choices=["frequency", "llm", "replay"])
    p.add_argument("--frequency-slots", default="answer", choices=["answer", "both"])
    p.add_argument("--endpoint", help="base URL of a completions endpoint, e.g. http://host:8000/v1")
    p.add_argument("--model", default="default")
    p.add_argument("--token-env", default="TKG_API_KEY", help="environment variable holding the API token")
    p.add_argument("--top-logprobs", type=int, default=20)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-in-flight", type=int, default=8)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--replay-log", help="append request/response pairs to this file")
    p.add_argument("--replay-from", help="score offline from a replay log")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default="predictions.jsonl")
    _common(p)
    _history(p)
    _rendering(p)
    p.set_defaults(func=cmd_run, strategy="GID", mode="icl")

    p = sub.add_parser("eval", help="time-aware filtered Hits@1/3/10 of a predictions file")
    p.add_argument("predictions")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--out", default="report")
    p.add_argument("--stem", default="report")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="multi-token answer ID statistics")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--strategy", default="GID", type=lambda s: normalize_strategy(s))
    p.add_argument("--vocab", help="tokenizer vocabulary file for exact counts")
    p.add_argument("--space-prefix", action="store_true", help="accept space-marked vocabulary entries")
    p.add_argument("--max-digits", type=int, default=3)
    p.add_argument("--json")
    _common(p)
    _history(p, split="valid")
    p.set_defaults(func=cmd_stats)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        defaults = {}
        for action in sp._actions:
            if action.dest in values:
                raw = values[action.dest]
                if isinstance(action, argparse._StoreTrueAction):
                    val = raw.lower() in ("1", "true", "yes", "on")
                elif action.type is not None:
                    val = action.type(raw)
                else:
                    val = raw
                if isinstance(action, argparse._AppendAction):
                    val = [v.strip() for v in str(raw).split(";") if v.strip()]
                defaults[action.dest] = val
        sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DatasetError, ConfigError, PredictionMismatchError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (EndpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
