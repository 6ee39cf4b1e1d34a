"""Token-trace file format and prefix-series statistics.

A trace is newline-delimited JSON, UTF-8, one record per line: a single
header record followed by step records with consecutive 1-based indices.
Each step stores the chosen token, its probability, and the full recorded
(renormalized) next-token distribution as parallel `ids`/`probs` arrays.
Probabilities are written as shortest round-trip decimals (up to 17
significant digits), so write -> read is bit-exact for 64-bit floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .core_stats import Distribution, kahan_sum, validate_distribution
from .errors import (
    ChosenNotInSupport,
    EmptyTrace,
    HeaderMissing,
    IndexGap,
    MalformedRecord,
    SinkFailure,
    TyplabError,
)

TRACE_VERSION = 1
SOURCE_KINDS = ("simulated", "probe_generate", "probe_score")

#: chosen_prob must match the recorded distribution's entry this tightly.
CHOSEN_PROB_TOL = 1e-9


@dataclass(frozen=True)
class TraceHeader:
    """Provenance record leading every trace file."""

    source_kind: str
    model_label: str
    version: int = TRACE_VERSION
    top_k: int | None = None
    seed: int | None = None
    prompt_token_count: int = 0
    alphabet_size: int | None = None

    def __post_init__(self):
        if self.version != TRACE_VERSION:
            raise TyplabError(f"unsupported trace version {self.version}")
        if self.source_kind not in SOURCE_KINDS:
            raise TyplabError(f"unknown source_kind {self.source_kind!r}")
        if self.top_k is not None and self.top_k < 1:
            raise TyplabError("top_k must be >= 1 when present")
        if self.prompt_token_count < 0:
            raise TyplabError("prompt_token_count must be >= 0")


@dataclass(frozen=True)
class TraceStep:
    """One generation step: 1-based index, chosen token, recorded distribution."""

    index: int
    chosen_id: int
    chosen_prob: float
    dist: Distribution


@dataclass
class PrefixStats:
    """Per-prefix series: log-perplexity l, empirical entropy h, log-deviation lam.

    At prefix length N:
      l(N)   = -(1/N) sum of log2(chosen_prob)
      h(N)   =  (1/N) sum of per-step entropies
      lam(N) =  (1/N) sqrt(sum of per-step log-variances)
    """

    n: list[int] = field(default_factory=list)
    l: list[float] = field(default_factory=list)
    h: list[float] = field(default_factory=list)
    lam: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.l)

    def final(self) -> tuple[int, float, float, float]:
        """(N, l, h, lam) at the longest recorded prefix."""
        if not self.l:
            raise EmptyTrace("no steps accumulated")
        return self.n[-1], self.l[-1], self.h[-1], self.lam[-1]


class PrefixAccumulator:
    """Streaming accumulator for PrefixStats; one add() per step, in order."""

    __slots__ = ("count", "_l_sum", "_l_c", "_h_sum", "_h_c", "_v_sum", "_v_c", "series")

    def __init__(self, keep_series: bool = True):
        self.count = 0
        self._l_sum = self._l_c = 0.0
        self._h_sum = self._h_c = 0.0
        self._v_sum = self._v_c = 0.0
        self.series = PrefixStats() if keep_series else None

    def add(self, chosen_prob: float, step_entropy: float, step_log_variance: float) -> None:
        self.count += 1
        # Kahan-compensated running sums, one per series.
        y = -math.log2(chosen_prob) - self._l_c
        t = self._l_sum + y
        self._l_c = (t - self._l_sum) - y
        self._l_sum = t

        y = step_entropy - self._h_c
        t = self._h_sum + y
        self._h_c = (t - self._h_sum) - y
        self._h_sum = t

        y = step_log_variance - self._v_c
        t = self._v_sum + y
        self._v_c = (t - self._v_sum) - y
        self._v_sum = t

        if self.series is not None:
            n = self.count
            self.series.n.append(n)
            self.series.l.append(self._l_sum / n)
            self.series.h.append(self._h_sum / n)
            self.series.lam.append(math.sqrt(self._v_sum) / n)

    def add_step(self, step: TraceStep) -> None:
        self.add(step.chosen_prob, step.dist.entropy, step.dist.log_variance)

    def current(self) -> tuple[int, float, float, float]:
        if self.count == 0:
            raise EmptyTrace("no steps accumulated")
        n = self.count
        return n, self._l_sum / n, self._h_sum / n, math.sqrt(self._v_sum) / n


def prefix_stats(steps: Iterable[TraceStep]) -> PrefixStats:
    """Single streaming pass emitting (l, h, lam) at every prefix length."""
    acc = PrefixAccumulator()
    for step in steps:
        acc.add_step(step)
    if acc.count == 0:
        raise EmptyTrace("trace has no steps")
    return acc.series


# ------------------------------------------------------------------- writing

def _header_record(header: TraceHeader) -> dict:
    return {
        "type": "header",
        "version": header.version,
        "source_kind": header.source_kind,
        "model_label": header.model_label,
        "top_k": header.top_k,
        "seed": header.seed,
        "prompt_token_count": header.prompt_token_count,
        "alphabet_size": header.alphabet_size,
    }


def _step_record(step: TraceStep) -> dict:
    return {
        "type": "step",
        "index": step.index,
        "chosen_id": step.chosen_id,
        "chosen_prob": step.chosen_prob,
        "ids": list(step.dist.ids),
        "probs": list(step.dist.probs),
    }


def write_trace(header: TraceHeader, steps: Iterable[TraceStep], sink: IO[bytes]) -> int:
    """Write header + steps as NDJSON; returns the number of steps written."""
    try:
        sink.write(json.dumps(_header_record(header), separators=(",", ":")).encode())
        sink.write(b"\n")
        count = 0
        for step in steps:
            sink.write(json.dumps(_step_record(step), separators=(",", ":")).encode())
            sink.write(b"\n")
            count += 1
        return count
    except OSError as exc:
        raise SinkFailure(str(exc)) from exc


# ------------------------------------------------------------------- reading

_HEADER_KEYS = {"type", "version", "source_kind", "model_label", "top_k",
                "seed", "prompt_token_count", "alphabet_size"}


def _parse_header(line: bytes, line_number: int) -> TraceHeader:
    try:
        obj = json.loads(line)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedRecord(line_number, f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("type") != "header":
        raise HeaderMissing("first record is not a header")
    try:
        return TraceHeader(
            version=int(obj["version"]),
            source_kind=obj["source_kind"],
            model_label=str(obj["model_label"]),
            top_k=None if obj.get("top_k") is None else int(obj["top_k"]),
            seed=None if obj.get("seed") is None else int(obj["seed"]),
            prompt_token_count=int(obj.get("prompt_token_count", 0)),
            alphabet_size=None if obj.get("alphabet_size") is None else int(obj["alphabet_size"]),
        )
    except (KeyError, TypeError, ValueError, TyplabError) as exc:
        raise MalformedRecord(line_number, f"bad header: {exc}") from exc


def _parse_step(obj: dict, line_number: int, expected_index: int) -> TraceStep:
    try:
        index = int(obj["index"])
        chosen_id = int(obj["chosen_id"])
        chosen_prob = float(obj["chosen_prob"])
        ids = obj["ids"]
        probs = obj["probs"]
        if len(ids) != len(probs):
            raise ValueError("ids and probs lengths differ")
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line_number, f"bad step: {exc}") from exc
    if index != expected_index:
        raise IndexGap(f"line {line_number}: expected step index {expected_index}, got {index}")
    try:
        dist = validate_distribution(zip(ids, probs))
    except TyplabError as exc:
        raise MalformedRecord(line_number, f"bad distribution: {exc}") from exc
    recorded = dist.get(chosen_id)
    if recorded is None:
        raise ChosenNotInSupport(f"line {line_number}: chosen id {chosen_id} not in support")
    if abs(recorded - chosen_prob) > CHOSEN_PROB_TOL:
        raise MalformedRecord(
            line_number,
            f"chosen_prob {chosen_prob!r} disagrees with distribution entry {recorded!r}",
        )
    return TraceStep(index=index, chosen_id=chosen_id, chosen_prob=chosen_prob, dist=dist)


def read_trace(stream: IO[bytes]) -> tuple[TraceHeader, Iterator[TraceStep]]:
    """Parse the header eagerly, then yield validated steps lazily.

    Validation is incremental: schema per line, consecutive indices, chosen
    token inside the recorded support with a consistent probability. Memory
    use is constant in the trace length.
    """
    first = stream.readline()
    if not first or not first.strip():
        raise HeaderMissing("empty stream")
    header = _parse_header(first, 1)

    def steps() -> Iterator[TraceStep]:
        expected = 1
        line_number = 1
        for raw in stream:
            line_number += 1
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except (ValueError, UnicodeDecodeError) as exc:
                raise MalformedRecord(line_number, f"invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or obj.get("type") != "step":
                raise MalformedRecord(line_number, "expected a step record")
            yield _parse_step(obj, line_number, expected)
            expected += 1

    return header, steps()


# ---------------------------------------------------------------- CSV export

CSV_HEADER = "N,l,h,lam,h_minus_lam,h_plus_lam,h_minus_2lam,h_plus_2lam"


def prefix_stats_to_csv(stats: PrefixStats, sink: IO[str], stride: int = 1) -> int:
    """Write the prefix series with entropy bands; returns rows written.

    With stride > 1 only every stride-th prefix is emitted, plus the final
    one so the asymptote always appears.
    """
    if stride < 1:
        raise TyplabError("stride must be >= 1")
    sink.write(CSV_HEADER + "\n")
    rows = 0
    last = len(stats)
    for i in range(len(stats)):
        n = stats.n[i]
        if (i + 1) % stride != 0 and (i + 1) != last:
            continue
        l, h, lam = stats.l[i], stats.h[i], stats.lam[i]
        sink.write(
            f"{n},{l!r},{h!r},{lam!r},{h - lam!r},{h + lam!r},{h - 2 * lam!r},{h + 2 * lam!r}\n"
        )
        rows += 1
    return rows


def read_prefix_csv(stream: IO[str]) -> PrefixStats:
    """Parse a CSV produced by prefix_stats_to_csv back into a PrefixStats."""
    header = stream.readline().strip()
    if not header.startswith("N,l,h,lam"):
        raise MalformedRecord(1, "not a prefix-stats CSV")
    out = PrefixStats()
    for line_number, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            out.n.append(int(parts[0]))
            out.l.append(float(parts[1]))
            out.h.append(float(parts[2]))
            out.lam.append(float(parts[3]))
        except (IndexError, ValueError) as exc:
            raise MalformedRecord(line_number, f"bad CSV row: {exc}") from exc
    if not out.l:
        raise EmptyTrace("CSV contains no rows")
    return out
