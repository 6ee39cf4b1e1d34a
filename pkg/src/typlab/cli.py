"""Command-line entry point: reproducible experiments from a config + seed.

Every run is reproducible from a single JSON config file plus the flags
that override it; identical configs produce byte-identical artifacts.
Exit codes: 0 success (or `typical` for classify), 10 under-typical,
11 over-typical, 64 usage/config errors, 65 domain errors.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from dataclasses import dataclass
from typing import Sequence

from . import oracle, sources, trace, typicality
from .errors import ConfigError, TyplabError

EXIT_OK = 0
EXIT_USAGE = 64
EXIT_DOMAIN = 65

COMMANDS = ("simulate", "analyze", "classify", "score", "enumerate", "verify", "export-csv")


@dataclass
class RunConfig:
    command: str
    in_path: str | None = None
    out_path: str | None = None
    csv_path: str | None = None
    source: str | None = None
    grammar: str | None = None
    tokens_path: str | None = None
    report_path: str | None = None
    n: int | None = None
    n_min: int | None = None
    n_max: int | None = None
    seed: int | None = None
    eps: float | None = None
    c: float | None = None
    delta_g_probe: float | None = None
    stride: int | None = None
    cap: int | None = None


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_source(spec: str) -> sources.Source:
    text = spec.strip()
    if not text.startswith("{"):
        with open(spec, "r", encoding="utf-8") as f:
            text = f.read()
    return sources.source_from_json(json.loads(text))


def _load_grammar(spec: str, alphabet_size: int) -> sources.GrammarSpec:
    name = spec.strip()
    if name in ("norepeat", "no_repeat"):
        return sources.no_repeat_grammar(alphabet_size)
    if name in ("accept_all", "acceptall"):
        return sources.accept_all_grammar(alphabet_size)
    if not name.startswith("{"):
        with open(spec, "r", encoding="utf-8") as f:
            name = f.read()
    return sources.grammar_from_json(json.loads(name))


def _open_in(path: str | None, binary: bool):
    if path is None or path == "-":
        return (sys.stdin.buffer if binary else sys.stdin), False
    return open(path, "rb" if binary else "r", encoding=None if binary else "utf-8"), True


def _open_out(path: str | None, binary: bool):
    if path is None or path == "-":
        return (sys.stdout.buffer if binary else sys.stdout), False
    return open(path, "wb" if binary else "w", encoding=None if binary else "utf-8"), True


def _write_json(payload: dict, path: str | None) -> None:
    sink, close = _open_out(path, binary=False)
    try:
        json.dump(payload, sink, indent=2, sort_keys=True)
        sink.write("\n")
    finally:
        if close:
            sink.close()


def _resolve_cap(config: RunConfig) -> int | None:
    if config.cap is not None:
        return config.cap
    env = os.environ.get("TYPLAB_CAP")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"TYPLAB_CAP={env!r} is not an integer") from exc
    return None


def _require(config: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(config, name) is None:
            raise ConfigError(f"{config.command}: missing required parameter {name!r}")


# ------------------------------------------------------------------ commands

def _cmd_simulate(config: RunConfig) -> int:
    _require(config, "source", "n", "seed")
    if config.n < 1:
        raise ConfigError("n must be >= 1")
    source = _load_source(config.source)
    header, steps = sources.sample_trace(source, config.n, config.seed)
    sink, close = _open_out(config.out_path, binary=True)
    try:
        count = trace.write_trace(header, steps, sink)
    finally:
        if close:
            sink.close()
    _log(f"simulate: wrote {count} steps ({source.label}, seed {config.seed})")
    return EXIT_OK


def _analyze_stream(config: RunConfig) -> trace.PrefixStats:
    stream, close = _open_in(config.in_path, binary=True)
    try:
        _, steps = trace.read_trace(stream)
        return trace.prefix_stats(steps)
    finally:
        if close:
            stream.close()


def _cmd_analyze(config: RunConfig) -> int:
    stats = _analyze_stream(config)
    stride = config.stride or 1
    sink, close = _open_out(config.out_path, binary=False)
    try:
        rows = trace.prefix_stats_to_csv(stats, sink, stride=stride)
    finally:
        if close:
            sink.close()
    _log(f"analyze: {len(stats)} steps, {rows} csv rows")
    return EXIT_OK


def _cmd_classify(config: RunConfig) -> int:
    # Accepts either analyze CSV output or a raw trace; sniff the first byte.
    stream, close = _open_in(config.in_path, binary=True)
    try:
        payload = stream.read()
    finally:
        if close:
            stream.close()
    head = payload.lstrip()[:1]
    if head == b"{":
        _, steps = trace.read_trace(io.BytesIO(payload))
        stats = trace.prefix_stats(steps)
    else:
        stats = trace.read_prefix_csv(io.StringIO(payload.decode("utf-8")))
    report = typicality.classify(stats, c=config.c if config.c is not None else typicality.DEFAULT_C)
    _write_json(typicality.report_to_json(report), config.out_path)
    _log(f"classify: {report.classification} (z={report.z:.3f}, c={report.policy_c})")
    return typicality.EXIT_CODES[report.classification]


def _read_tokens(path: str) -> list[int]:
    stream, close = _open_in(path, binary=False)
    try:
        text = stream.read()
    finally:
        if close:
            stream.close()
    try:
        return [int(tok) for tok in text.split()]
    except ValueError as exc:
        raise ConfigError(f"token file must contain whitespace-separated integers: {exc}") from exc


def _cmd_score(config: RunConfig) -> int:
    _require(config, "source", "tokens_path")
    scorer = _load_source(config.source)
    tokens = _read_tokens(config.tokens_path)
    stats = typicality.score_under_model(tokens, scorer)
    stride = config.stride or 1
    sink, close = _open_out(config.out_path, binary=False)
    try:
        rows = trace.prefix_stats_to_csv(stats, sink, stride=stride)
    finally:
        if close:
            sink.close()
    _log(f"score: {len(tokens)} tokens under {scorer.label}, {rows} csv rows")
    return EXIT_OK


def _enumerate_one(source, grammar_spec, n, eps, delta_g_probe, cap):
    report = oracle.enumerate_strings(source, n, cap)
    if grammar_spec is not None:
        if eps is None:
            raise ConfigError("--eps is required when a grammar is given")
        oracle.build_sets(report, grammar_spec, eps, delta_g_probe)
        oracle.verify_bounds(report, grammar_spec, eps)
    return report


def _cmd_enumerate(config: RunConfig) -> int:
    _require(config, "source", "n")
    source = _load_source(config.source)
    grammar_spec = _load_grammar(config.grammar, source.alphabet_size) if config.grammar else None
    report = _enumerate_one(source, grammar_spec, config.n, config.eps,
                            config.delta_g_probe, _resolve_cap(config))
    summary = oracle.report_summary(report)
    _write_json(summary, config.out_path)
    if config.csv_path and grammar_spec is not None:
        with open(config.csv_path, "w", encoding="utf-8") as f:
            oracle.summaries_to_csv([summary], f)
    _log(f"enumerate: {len(report.prob)} strings at n={config.n}")
    return EXIT_OK


def _cmd_verify(config: RunConfig) -> int:
    _require(config, "source", "grammar", "eps")
    if config.n is None and (config.n_min is None or config.n_max is None):
        raise ConfigError("verify: give --n or both --n-min and --n-max")
    source = _load_source(config.source)
    grammar_spec = _load_grammar(config.grammar, source.alphabet_size)
    if config.n is not None:
        n_values = [config.n]
    else:
        if config.n_min > config.n_max:
            raise ConfigError("--n-min must be <= --n-max")
        n_values = list(range(config.n_min, config.n_max + 1))
    cap = _resolve_cap(config)
    summaries = []
    all_hold = True
    for n in n_values:
        report = _enumerate_one(source, grammar_spec, n, config.eps,
                                config.delta_g_probe, cap)
        summary = oracle.report_summary(report)
        summaries.append(summary)
        holds = all(v["holds"] for v in summary["bound_verdicts"].values())
        all_hold = all_hold and holds
        _log(f"verify: n={n} bounds {'ok' if holds else 'VIOLATED'}")
    payload = summaries[0] if config.n is not None else {"sweep": summaries}
    _write_json(payload, config.out_path)
    if config.csv_path:
        with open(config.csv_path, "w", encoding="utf-8") as f:
            oracle.summaries_to_csv(summaries, f)
    return EXIT_OK if all_hold else EXIT_DOMAIN


def _cmd_export_csv(config: RunConfig) -> int:
    _require(config, "report_path")
    with open(config.report_path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    summaries = payload["sweep"] if "sweep" in payload else [payload]
    if any("sets" not in s for s in summaries):
        raise ConfigError("report has no set data; re-run enumerate/verify with a grammar")
    sink, close = _open_out(config.out_path, binary=False)
    try:
        rows = oracle.summaries_to_csv(summaries, sink)
    finally:
        if close:
            sink.close()
    _log(f"export-csv: {rows} rows")
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "classify": _cmd_classify,
    "score": _cmd_score,
    "enumerate": _cmd_enumerate,
    "verify": _cmd_verify,
    "export-csv": _cmd_export_csv,
}


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    if config.command not in _HANDLERS:
        raise ConfigError(f"unknown command {config.command!r}")
    return _HANDLERS[config.command](config)


# -------------------------------------------------------------------- parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="typlab",
        description="Log-perplexity typicality experiments over token traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")

    p = sub.add_parser("simulate", help="sample a trace from a source spec")
    common(p)
    p.add_argument("--source", help="source spec path or inline JSON")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_path", help="trace output path (default stdout)")

    p = sub.add_parser("analyze", help="prefix-series CSV from a trace")
    common(p)
    p.add_argument("--in", dest="in_path", help="trace path (default stdin)")
    p.add_argument("--out", dest="out_path", help="CSV output path (default stdout)")
    p.add_argument("--stride", type=int)

    p = sub.add_parser("classify", help="typicality verdict from a trace or analyze CSV")
    common(p)
    p.add_argument("--in", dest="in_path")
    p.add_argument("--out", dest="out_path")
    p.add_argument("--c", type=float, help="threshold multiplier (default 3)")

    p = sub.add_parser("score", help="prefix series of a token file under a source")
    common(p)
    p.add_argument("--source")
    p.add_argument("--tokens", dest="tokens_path")
    p.add_argument("--out", dest="out_path")
    p.add_argument("--stride", type=int)

    p = sub.add_parser("enumerate", help="exact per-string report at one n")
    common(p)
    p.add_argument("--source")
    p.add_argument("--n", type=int)
    p.add_argument("--grammar", help="norepeat | accept_all | path or inline JSON")
    p.add_argument("--eps", type=float)
    p.add_argument("--dgp", dest="delta_g_probe", type=float)
    p.add_argument("--cap", type=int)
    p.add_argument("--out", dest="out_path")
    p.add_argument("--csv", dest="csv_path")

    p = sub.add_parser("verify", help="bound verdicts for one n or an n range")
    common(p)
    p.add_argument("--source")
    p.add_argument("--grammar")
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--dgp", dest="delta_g_probe", type=float)
    p.add_argument("--cap", type=int)
    p.add_argument("--out", dest="out_path")
    p.add_argument("--csv", dest="csv_path")

    p = sub.add_parser("export-csv", help="per-n set-size table from a report JSON")
    common(p)
    p.add_argument("--report", dest="report_path")
    p.add_argument("--out", dest="out_path")
    return parser


_CONFIG_KEYS = {
    "in_path", "out_path", "csv_path", "source", "grammar", "tokens_path",
    "report_path", "n", "n_min", "n_max", "seed", "eps", "c",
    "delta_g_probe", "stride", "cap",
}


def _merge_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                file_values = json.load(f)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {config_path!r}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in file_values.items():
            key = key.replace("-", "_")
            if key == "command":
                continue
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return RunConfig(command=args.command, **values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        config = _merge_config(args)
        return run(config)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except TyplabError as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
