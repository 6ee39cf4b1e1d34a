"""Command-line wrapper mirroring ProbeConfig."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .config import ProbeConfig, ProbeError
from .runner import probe_generate, probe_score


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="typlab-probe",
        description="Write typlab NDJSON traces from a causal language model.",
    )
    parser.add_argument("--model", required=True, help="model directory or hub id")
    parser.add_argument("--mode", required=True, choices=("generate", "score"))
    parser.add_argument("--prompt", default="", help="prompt text")
    parser.add_argument("--input-file", help="text file to score (score mode)")
    parser.add_argument("--top-k", type=int, default=100)
    parser.add_argument("--max-tokens", type=int, default=512)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--temperature", type=float, default=1.0)
    parser.add_argument("--out", required=True, help="trace output path")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    input_text = None
    if args.input_file:
        with open(args.input_file, "r", encoding="utf-8") as f:
            input_text = f.read()
    config = ProbeConfig(
        model=args.model,
        mode=args.mode,
        prompt=args.prompt,
        input_text=input_text,
        top_k=args.top_k,
        max_tokens=args.max_tokens,
        seed=args.seed,
        temperature=args.temperature,
        output_path=args.out,
    )
    try:
        if config.mode == "generate":
            result = probe_generate(config)
        else:
            result = probe_score(config)
    except ProbeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 65
    note = " (stalled)" if result.stalled else ""
    print(
        f"{config.mode}: {result.steps} steps after {result.prompt_token_count} "
        f"prompt tokens -> {result.output_path}{note}",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
