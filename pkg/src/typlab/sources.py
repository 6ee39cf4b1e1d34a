"""Seeded toy token sources that generate traces with recorded distributions.

Variants:
  * IIDSource           - one fixed distribution for every step
  * IndependentSeqSource- a fixed per-step distribution, independent of history
  * ContextTreeSource   - conditional distribution keyed by the last <= d tokens
  * GrammarFilteredSource - whole-string rejection against a DFA grammar

Sampling is a pure function of (source, n, seed): tokens are drawn by
inverse CDF over the id-sorted support using the xoshiro256** stream, so
traces reproduce bit-exactly across platforms. Sources are immutable after
construction and may be sampled from any number of threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .core_stats import Distribution, validate_distribution
from .errors import EmptyTrace, MaxAttemptsExceeded, TyplabError
from .rng import Xoshiro256StarStar
from .trace import TraceHeader, TraceStep

#: Hard limits keeping context-tree tables at desk scale.
MAX_TREE_DEPTH = 4
MAX_TREE_ALPHABET = 16


# ------------------------------------------------------------------ grammars

@dataclass(frozen=True)
class Dfa:
    """Deterministic finite automaton over token ids 0..V-1.

    `transitions[state][token]` is total by construction; a length-n string
    is accepted when the state reached from `start` is in `accepting`.
    """

    start: int
    accepting: frozenset[int]
    transitions: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n_states = len(self.transitions)
        if not (0 <= self.start < n_states):
            raise TyplabError("DFA start state out of range")
        for row in self.transitions:
            if len(row) != len(self.transitions[0]):
                raise TyplabError("DFA transition rows must have equal arity")
            for tgt in row:
                if not (0 <= tgt < n_states):
                    raise TyplabError("DFA transition target out of range")
        if not self.accepting <= set(range(n_states)):
            raise TyplabError("DFA accepting states out of range")

    @property
    def num_states(self) -> int:
        return len(self.transitions)

    @property
    def alphabet_size(self) -> int:
        return len(self.transitions[0])

    def accepts(self, tokens: Iterable[int]) -> bool:
        state = self.start
        trans = self.transitions
        for t in tokens:
            state = trans[state][t]
        return state in self.accepting


@dataclass(frozen=True)
class GrammarSpec:
    """A dictionary of 'grammatical' strings per length, realized as a DFA."""

    dfa: Dfa
    description: str = ""


def accept_all_grammar(alphabet_size: int) -> GrammarSpec:
    """Every string is grammatical."""
    row = tuple(0 for _ in range(alphabet_size))
    return GrammarSpec(
        dfa=Dfa(start=0, accepting=frozenset({0}), transitions=(row,)),
        description=f"accept_all(V={alphabet_size})",
    )


def no_repeat_grammar(alphabet_size: int) -> GrammarSpec:
    """Strings whose adjacent tokens are distinct.

    States 0..V-1 remember the last token, V is the start, V+1 is dead.
    """
    v = alphabet_size
    start, dead = v, v + 1
    rows = []
    for state in range(v + 2):
        row = []
        for tok in range(v):
            if state == dead or (state < v and tok == state):
                row.append(dead)
            else:
                row.append(tok)
        rows.append(tuple(row))
    accepting = frozenset(range(v)) | {start}
    return GrammarSpec(
        dfa=Dfa(start=start, accepting=accepting, transitions=tuple(rows)),
        description=f"no_repeat(V={alphabet_size})",
    )


# ------------------------------------------------------------------- sources

class Source:
    """Base of all token sources: per-step conditional distributions."""

    alphabet: tuple[int, ...]
    label: str

    def dist_at(self, step: int, history: Sequence[int]) -> Distribution:
        """Conditional distribution for 1-based step given prior chosen tokens."""
        raise NotImplementedError

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)


@dataclass(frozen=True)
class IIDSource(Source):
    dist: Distribution
    label: str = "iid"

    @property
    def alphabet(self) -> tuple[int, ...]:
        return self.dist.ids

    def dist_at(self, step: int, history: Sequence[int]) -> Distribution:
        return self.dist


@dataclass(frozen=True)
class IndependentSeqSource(Source):
    """Tokens drawn independently from a per-step rule n -> Distribution."""

    rule: Callable[[int], Distribution]
    alphabet: tuple[int, ...]
    length: int | None = None
    label: str = "independent_seq"

    @staticmethod
    def from_list(dists: Sequence[Distribution], label: str = "independent_seq") -> "IndependentSeqSource":
        dists = tuple(dists)
        if not dists:
            raise EmptyTrace("independent-sequence source needs at least one step")
        ids = sorted(set(itertools.chain.from_iterable(d.ids for d in dists)))
        return IndependentSeqSource(
            rule=lambda n: dists[n - 1],
            alphabet=tuple(ids),
            length=len(dists),
            label=label,
        )

    def dist_at(self, step: int, history: Sequence[int]) -> Distribution:
        if self.length is not None and not (1 <= step <= self.length):
            raise TyplabError(f"step {step} outside fixed length {self.length}")
        return self.rule(step)

    def step_dists(self) -> tuple[Distribution, ...]:
        if self.length is None:
            raise TyplabError("unbounded rule has no finite step list")
        return tuple(self.rule(n) for n in range(1, self.length + 1))


@dataclass(frozen=True)
class ContextTreeSource(Source):
    """Conditional distribution keyed by the last min(n-1, depth) tokens.

    The table holds one entry for every context of every length 0..depth,
    so any history (reachable or not) resolves to a distribution.
    """

    alphabet: tuple[int, ...]
    depth: int
    table: Mapping[tuple[int, ...], Distribution]
    label: str = "context_tree"
    construction: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        v = len(self.alphabet)
        if not (0 <= self.depth <= MAX_TREE_DEPTH):
            raise TyplabError(f"depth must be in 0..{MAX_TREE_DEPTH}")
        if not (1 <= v <= MAX_TREE_ALPHABET):
            raise TyplabError(f"alphabet size must be in 1..{MAX_TREE_ALPHABET}")
        for length in range(self.depth + 1):
            for ctx in itertools.product(self.alphabet, repeat=length):
                if ctx not in self.table:
                    raise TyplabError(f"context table missing entry for {ctx}")

    def dist_at(self, step: int, history: Sequence[int]) -> Distribution:
        if len(history) >= self.depth:
            ctx = tuple(history[len(history) - self.depth:])
        else:
            ctx = tuple(history)
        return self.table[ctx]


@dataclass(frozen=True)
class GrammarFilteredSource(Source):
    """Inner source whose whole output string is re-drawn until the DFA accepts.

    Recorded step distributions are the inner model's conditionals; the
    filter only conditions which strings survive.
    """

    inner: Source
    grammar: GrammarSpec
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.max_attempts < 1:
            raise TyplabError("max_attempts must be >= 1")

    @property
    def alphabet(self) -> tuple[int, ...]:
        return self.inner.alphabet

    @property
    def label(self) -> str:
        return f"grammar_filtered({self.inner.label})"

    def dist_at(self, step: int, history: Sequence[int]) -> Distribution:
        return self.inner.dist_at(step, history)


# ------------------------------------------------------- seeded construction

def random_context_tree(
    alphabet_size: int,
    depth: int,
    seed: int,
    sharpness: float = 1.0,
    label: str | None = None,
) -> ContextTreeSource:
    """Reproducible random context tree with tunable entropy gap.

    Each context row draws independent exponential weights from a dedicated
    xoshiro stream, raises them to `sharpness`, and normalizes. sharpness 1
    matches a flat Dirichlet; larger values concentrate mass and lower the
    per-step entropy, widening the gap to the maximum-entropy rate.
    """
    if sharpness <= 0:
        raise TyplabError("sharpness must be > 0")
    rng = Xoshiro256StarStar(seed)
    alphabet = tuple(range(alphabet_size))
    table: dict[tuple[int, ...], Distribution] = {}
    for length in range(depth + 1):
        for ctx in itertools.product(alphabet, repeat=length):
            weights = []
            for _ in range(alphabet_size):
                u = rng.random()
                w = -math.log(1.0 - u)
                weights.append(w**sharpness)
            table[ctx] = validate_distribution(enumerate(weights))
    return ContextTreeSource(
        alphabet=alphabet,
        depth=depth,
        table=table,
        label=label or f"tree_v{alphabet_size}d{depth}_seed{seed}",
        construction={
            "alphabet_size": alphabet_size,
            "depth": depth,
            "seed": seed,
            "sharpness": sharpness,
        },
    )


def context_tree_from_weights(
    alphabet_size: int,
    depth: int,
    weights: Mapping[tuple[int, ...], Sequence[float]],
    label: str = "context_tree",
) -> ContextTreeSource:
    """Build a tree from unnormalized per-context weight rows.

    Normalization is scale-free: multiplying every weight by one constant
    yields the same distributions.
    """
    table = {
        tuple(ctx): validate_distribution(enumerate(row)) for ctx, row in weights.items()
    }
    return ContextTreeSource(
        alphabet=tuple(range(alphabet_size)), depth=depth, table=table, label=label
    )


def uniform_no_repeat_tree(alphabet_size: int) -> ContextTreeSource:
    """The entropy-maximizing model over the no-repeat grammar.

    Uniform over allowed next tokens gives every accepted length-n string
    probability 1/(V * (V-1)^(n-1)), i.e. the uniform-over-dictionary model.
    """
    v = alphabet_size
    alphabet = tuple(range(v))
    table: dict[tuple[int, ...], Distribution] = {
        (): validate_distribution((t, 1.0) for t in alphabet)
    }
    for prev in alphabet:
        table[(prev,)] = validate_distribution((t, 1.0) for t in alphabet if t != prev)
    return ContextTreeSource(
        alphabet=alphabet,
        depth=1,
        table=table,
        label=f"uniform_no_repeat_v{v}",
    )


# ------------------------------------------------------------------ sampling

def _simulated_header(source: Source, seed: int) -> TraceHeader:
    return TraceHeader(
        source_kind="simulated",
        model_label=source.label,
        seed=seed,
        prompt_token_count=0,
        alphabet_size=source.alphabet_size,
    )


def _draw_ids(source: Source, n: int, rng: Xoshiro256StarStar) -> list[int]:
    us = rng.block(n)
    history: list[int] = []
    dist_at = source.dist_at
    for step in range(1, n + 1):
        d = dist_at(step, history)
        history.append(d.sample(us[step - 1]))
    return history


def sample_ids(source: Source, n: int, seed: int) -> list[int]:
    """Chosen token ids only; same stream as sample_trace."""
    if n < 1:
        raise TyplabError("n must be >= 1")
    if isinstance(source, GrammarFilteredSource):
        _, steps, _ = grammar_filtered_sample(source, n, seed)
        return [s.chosen_id for s in steps]
    return _draw_ids(source, n, Xoshiro256StarStar(seed))


def steps_along(source: Source, tokens: Sequence[int]) -> list[TraceStep]:
    """Materialize TraceSteps for a fixed token path under a source."""
    steps = []
    history: list[int] = []
    for i, tok in enumerate(tokens, start=1):
        d = source.dist_at(i, history)
        p = d.get(tok)
        if p is None:
            raise TyplabError(f"token {tok} at step {i} outside conditional support")
        steps.append(TraceStep(index=i, chosen_id=tok, chosen_prob=p, dist=d))
        history.append(tok)
    return steps


def sample_trace(source: Source, n: int, seed: int) -> tuple[TraceHeader, list[TraceStep]]:
    """Deterministic trace of length n; each step records the exact conditional used."""
    if n < 1:
        raise TyplabError("n must be >= 1")
    if isinstance(source, GrammarFilteredSource):
        header, steps, _ = grammar_filtered_sample(source, n, seed)
        return header, steps
    ids = _draw_ids(source, n, Xoshiro256StarStar(seed))
    return _simulated_header(source, seed), steps_along(source, ids)


def grammar_filtered_sample(
    source: GrammarFilteredSource, n: int, seed: int
) -> tuple[TraceHeader, list[TraceStep], int]:
    """Whole-string rejection sampling; returns (header, steps, attempt_count).

    Every rejected attempt consumes its own stretch of the seeded stream, so
    the accepted trace is still a pure function of (source, n, seed).
    """
    if n < 1:
        raise TyplabError("n must be >= 1")
    rng = Xoshiro256StarStar(seed)
    dfa = source.grammar.dfa
    for attempt in range(1, source.max_attempts + 1):
        ids = _draw_ids(source.inner, n, rng)
        if dfa.accepts(ids):
            return _simulated_header(source, seed), steps_along(source.inner, ids), attempt
    raise MaxAttemptsExceeded(source.max_attempts)


def auxiliary_from_trace(steps: Sequence[TraceStep]) -> IndependentSeqSource:
    """Freeze a trace's recorded conditionals into an independent-token model.

    Sampling the result draws each step from the same distribution the
    original model used along that string, independently across steps.
    """
    steps = list(steps)
    if not steps:
        raise EmptyTrace("cannot build auxiliary model from an empty trace")
    dists = tuple(s.dist for s in steps)
    return IndependentSeqSource.from_list(dists, label="auxiliary")


# -------------------------------------------------------------- JSON schemas

def _dist_to_json(d: Distribution) -> dict:
    return {"ids": list(d.ids), "probs": list(d.probs)}


def _dist_from_json(obj: dict) -> Distribution:
    return validate_distribution(zip(obj["ids"], obj["probs"]))


def grammar_to_json(grammar: GrammarSpec) -> dict:
    return {
        "start": grammar.dfa.start,
        "accepting": sorted(grammar.dfa.accepting),
        "transitions": [list(row) for row in grammar.dfa.transitions],
        "description": grammar.description,
    }


def grammar_from_json(obj: dict) -> GrammarSpec:
    return GrammarSpec(
        dfa=Dfa(
            start=int(obj["start"]),
            accepting=frozenset(int(s) for s in obj["accepting"]),
            transitions=tuple(tuple(int(t) for t in row) for row in obj["transitions"]),
        ),
        description=str(obj.get("description", "")),
    )


def source_to_json(source: Source) -> dict:
    """Reproducible document: variant tag + parameters (+ construction seed)."""
    if isinstance(source, IIDSource):
        return {"variant": "iid", "label": source.label, **_dist_to_json(source.dist)}
    if isinstance(source, IndependentSeqSource):
        return {
            "variant": "independent_seq",
            "label": source.label,
            "steps": [_dist_to_json(d) for d in source.step_dists()],
        }
    if isinstance(source, ContextTreeSource):
        if source.construction is not None:
            return {"variant": "context_tree", "label": source.label, **source.construction}
        return {
            "variant": "context_tree",
            "label": source.label,
            "alphabet_size": source.alphabet_size,
            "depth": source.depth,
            "table": {
                ",".join(map(str, ctx)): _dist_to_json(d)
                for ctx, d in sorted(source.table.items())
            },
        }
    if isinstance(source, GrammarFilteredSource):
        return {
            "variant": "grammar_filtered",
            "inner": source_to_json(source.inner),
            "grammar": grammar_to_json(source.grammar),
            "max_attempts": source.max_attempts,
        }
    raise TyplabError(f"cannot serialize source type {type(source).__name__}")


def source_from_json(obj: dict) -> Source:
    variant = obj.get("variant")
    if variant == "iid":
        return IIDSource(dist=_dist_from_json(obj), label=obj.get("label", "iid"))
    if variant == "independent_seq":
        dists = [_dist_from_json(step) for step in obj["steps"]]
        return IndependentSeqSource.from_list(dists, label=obj.get("label", "independent_seq"))
    if variant == "context_tree":
        if "table" in obj:
            table = {}
            for key, val in obj["table"].items():
                ctx = tuple(int(t) for t in key.split(",")) if key else ()
                table[ctx] = _dist_from_json(val)
            return ContextTreeSource(
                alphabet=tuple(range(int(obj["alphabet_size"]))),
                depth=int(obj["depth"]),
                table=table,
                label=obj.get("label", "context_tree"),
            )
        return random_context_tree(
            alphabet_size=int(obj["alphabet_size"]),
            depth=int(obj["depth"]),
            seed=int(obj["seed"]),
            sharpness=float(obj.get("sharpness", 1.0)),
            label=obj.get("label"),
        )
    if variant == "grammar_filtered":
        return GrammarFilteredSource(
            inner=source_from_json(obj["inner"]),
            grammar=grammar_from_json(obj["grammar"]),
            max_attempts=int(obj.get("max_attempts", 10_000)),
        )
    raise TyplabError(f"unknown source variant {variant!r}")
