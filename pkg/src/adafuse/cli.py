"""Command-line entry point.

Subcommands: train (build an n-gram reference model), decode (run the
ensemble over a dataset), eval (score a predictions file), sweep (grid
over tau_delta / branching_factor / mode), serve-check (probe a remote
provider for protocol conformance).

Configuration is YAML; command-line flags override config-file values,
which override built-in defaults. Exit codes: 0 success, 1 usage/config
error, 2 runtime/provider error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import yaml

from .conformance import all_ok, run_conformance
from .engine import DecodeConfig
from .harness import (
    BLEU_METRIC_NAME,
    SWEEP_AXES,
    bleu,
    exact_match,
    read_records,
    run_dataset,
    run_sweep,
    write_records,
)
from .lm_core import AdaFuseError, ConfigError, ProviderError
from .ngram_lm import NgramLM
from .remote_lm import RemoteLM

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_DECODE_FLAGS = (
    "mode",
    "tau_delta",
    "max_words_per_round",
    "branching_factor",
    "diversity_enabled",
    "max_word_tokens",
    "max_new_words",
    "max_new_chars",
    "fixed_length",
    "beam_round_tokens",
    "topk_for_margin",
    "margin_source",
)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# configuration


def load_config_file(path: str) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def decode_config_from(data: dict, args: argparse.Namespace) -> DecodeConfig:
    section = dict(data.get("decode", {}))
    unknown = set(section) - {f.name for f in dataclasses.fields(DecodeConfig)}
    if unknown:
        raise ConfigError(f"unknown decode config keys: {sorted(unknown)}")
    if "stop_sequences" in section:
        section["stop_sequences"] = tuple(section["stop_sequences"])
    for flag in _DECODE_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            section[flag] = value
    if getattr(args, "stop", None):
        section["stop_sequences"] = tuple(args.stop)
    config = DecodeConfig(**section)
    config.validate()
    return config


def build_models(data: dict) -> list:
    specs = data.get("models", [])
    if not specs:
        raise ConfigError("config must declare at least one model")
    models = []
    for index, spec in enumerate(specs):
        if not isinstance(spec, dict):
            raise ConfigError(f"models[{index}] must be a mapping")
        locator = os.environ.get(
            f"ADAFUSE_MODEL_{index}_LOCATOR", spec.get("locator")
        )
        if not locator:
            raise ConfigError(f"models[{index}] has no locator")
        kind = spec.get("kind", "ngram")
        if kind == "ngram":
            models.append(NgramLM.load(locator))
        elif kind == "remote":
            models.append(
                RemoteLM(
                    locator,
                    timeout=float(spec.get("timeout", 30.0)),
                    space_convention=spec.get("space_convention", "explicit"),
                )
            )
        else:
            raise ConfigError(f"models[{index}] has unknown kind {kind!r}")
    return models


def effective_config_dict(data: dict, config: DecodeConfig) -> dict:
    return {
        "models": data.get("models", []),
        "decode": dataclasses.asdict(config)
        | {"stop_sequences": list(config.stop_sequences)},
        "io": data.get("io", {}),
        "seed": data.get("seed", 0),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args: argparse.Namespace) -> int:
    try:
        docs = [
            line
            for line in Path(args.corpus).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except OSError as exc:
        print(f"error: cannot read corpus {args.corpus}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    model = NgramLM.train(
        docs,
        order=args.order,
        alpha=args.alpha,
        tokenizer_kind=args.tokenizer,
        model_id=args.model_id or Path(args.out).stem,
    )
    model.save(args.out)
    print(
        f"trained {model.model_id}: order={model.order} "
        f"vocab={model.vocab_size} docs={len(docs)} -> {args.out}"
    )
    return EXIT_OK


def _resolve_io(args: argparse.Namespace, data: dict) -> tuple[str, str, str | None]:
    io_section = dict(data.get("io", {}))
    input_path = args.input or io_section.get("input")
    output_path = args.output or io_section.get("output")
    trace_path = getattr(args, "trace", None) or io_section.get("trace")
    if not input_path or not output_path:
        raise ConfigError("decode needs an input and an output path")
    return input_path, output_path, trace_path


def cmd_decode(args: argparse.Namespace) -> int:
    data = load_config_file(args.config)
    config = decode_config_from(data, args)
    if args.print_config:
        print(yaml.safe_dump(effective_config_dict(data, config), sort_keys=True))
        return EXIT_OK
    input_path, output_path, trace_path = _resolve_io(args, data)
    models = build_models(data)
    for model in models:
        if isinstance(model, RemoteLM):
            model.check()  # fail fast (exit 2) instead of erroring every record
    records = read_records(input_path, strict=False)
    outs, traces = run_dataset(records, models, config, jobs=args.jobs)
    write_records(outs, output_path)
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as handle:
            for trace in traces:
                if trace is None:
                    continue
                handle.write(
                    json.dumps(
                        trace.to_dict(include_wall_time=False),
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                )
                handle.write("\n")
    errors = sum(1 for r in outs if r.error)
    print(f"decoded {len(outs)} records ({errors} errors) -> {output_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    records = read_records(args.predictions)
    scorable = [r for r in records if r.references]
    if not scorable:
        print("error: no records with references", file=sys.stderr)
        return EXIT_USAGE
    if args.metric == "exact_match":
        value = sum(
            exact_match(r.prediction, r.references) for r in scorable
        ) / len(scorable)
        name = "exact_match"
    else:
        value = bleu(
            [r.prediction for r in scorable], [r.references for r in scorable]
        )
        name = BLEU_METRIC_NAME
    report = {"metric": name, "value": value, "items": len(scorable)}
    line = json.dumps(report, sort_keys=True)
    print(line)
    if args.output:
        Path(args.output).write_text(line + "\n", encoding="utf-8")
    return EXIT_OK


def _parse_sweep_values(axis: str, raw: str) -> list:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("sweep values are empty")
    if axis == "tau_delta":
        return [float(p) for p in parts]
    if axis == "branching_factor":
        return [int(p) for p in parts]
    return parts


def cmd_sweep(args: argparse.Namespace) -> int:
    data = load_config_file(args.config)
    config = decode_config_from(data, args)
    values = _parse_sweep_values(args.axis, args.values)
    if args.print_config:
        effective = effective_config_dict(data, config)
        effective["sweep"] = {"axis": args.axis, "values": values}
        print(yaml.safe_dump(effective, sort_keys=True))
        return EXIT_OK
    input_path = args.input or data.get("io", {}).get("input")
    if not input_path:
        raise ConfigError("sweep needs an input path")
    models = build_models(data)
    records = read_records(input_path, strict=False)
    report = run_sweep(
        records, models, config, args.axis, values, jobs=args.jobs
    )
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    print(payload)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_serve_check(args: argparse.Namespace) -> int:
    results = run_conformance(args.url, score_tolerance=args.tolerance)
    for result in results:
        print(result.line())
    return EXIT_OK if all_ok(results) else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="adafuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an n-gram reference model")
    train.add_argument("--corpus", required=True, help="text file, one document per line")
    train.add_argument("--order", type=int, required=True)
    train.add_argument("--alpha", type=float, default=1.0)
    train.add_argument("--tokenizer", choices=("char", "word"), default="char")
    train.add_argument("--out", required=True)
    train.add_argument("--model-id", default=None)
    train.set_defaults(fn=cmd_train)

    decode_p = sub.add_parser("decode", help="decode a dataset with an ensemble")
    decode_p.add_argument("--config", required=True, help="YAML run config")
    decode_p.add_argument("--input")
    decode_p.add_argument("--output")
    decode_p.add_argument("--trace")
    decode_p.add_argument("--jobs", type=int, default=1)
    decode_p.add_argument("--print-config", action="store_true")
    decode_p.add_argument("--mode", choices=("adafuse", "fixed_length", "beam_round"))
    decode_p.add_argument("--tau-delta", dest="tau_delta", type=float)
    decode_p.add_argument("--max-words-per-round", dest="max_words_per_round", type=int)
    decode_p.add_argument("--branching-factor", dest="branching_factor", type=int)
    decode_p.add_argument(
        "--diversity",
        dest="diversity_enabled",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    decode_p.add_argument("--max-word-tokens", dest="max_word_tokens", type=int)
    decode_p.add_argument("--max-new-words", dest="max_new_words", type=int)
    decode_p.add_argument("--max-new-chars", dest="max_new_chars", type=int)
    decode_p.add_argument("--fixed-length", dest="fixed_length", type=int)
    decode_p.add_argument("--beam-round-tokens", dest="beam_round_tokens", type=int)
    decode_p.add_argument("--topk-for-margin", dest="topk_for_margin", type=int)
    decode_p.add_argument("--margin-source", dest="margin_source",
                          choices=("word_start", "next_word"))
    decode_p.add_argument("--stop", action="append", help="stop sequence (repeatable)")
    decode_p.set_defaults(fn=cmd_decode)

    eval_p = sub.add_parser("eval", help="score a predictions file")
    eval_p.add_argument("--predictions", required=True)
    eval_p.add_argument("--metric", choices=("exact_match", "bleu"), default="exact_match")
    eval_p.add_argument("--output")
    eval_p.set_defaults(fn=cmd_eval)

    sweep_p = sub.add_parser("sweep", help="grid over one config axis")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--input")
    sweep_p.add_argument("--output")
    sweep_p.add_argument("--csv")
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.add_argument("--print-config", action="store_true")
    for flag in ("--mode",):
        sweep_p.add_argument(flag, choices=("adafuse", "fixed_length", "beam_round"))
    sweep_p.add_argument("--tau-delta", dest="tau_delta", type=float)
    sweep_p.add_argument("--branching-factor", dest="branching_factor", type=int)
    sweep_p.add_argument(
        "--diversity",
        dest="diversity_enabled",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    sweep_p.set_defaults(fn=cmd_sweep)

    check_p = sub.add_parser("serve-check", help="probe a remote provider")
    check_p.add_argument("--url", required=True)
    check_p.add_argument("--tolerance", type=float, default=1e-6)
    check_p.set_defaults(fn=cmd_serve_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except AdaFuseError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
