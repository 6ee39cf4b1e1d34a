"""Typical / under-typical / over-typical classification with variable thresholds.

A string is compared against its own trace statistics: the threshold is
h + c * lam rather than a fixed perplexity cutoff, so each string carries
its own band. Chebyshev gives the only tail guarantee: the false-negative
rate of the two-sided rule at multiplier c is at most 1/c^2. No false
positive guarantee exists, deliberately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import TyplabError, UnknownToken, ZeroProbabilityPath
from .sources import Source
from .trace import PrefixAccumulator, PrefixStats

TYPICAL = "typical"
UNDER_TYPICAL = "under_typical"
OVER_TYPICAL = "over_typical"

#: Process exit codes for the CLI classification contract.
EXIT_CODES = {TYPICAL: 0, UNDER_TYPICAL: 10, OVER_TYPICAL: 11}

#: |l - h| below this counts as equal when lam degenerates to 0.
DEGENERATE_TOL = 1e-9

#: Default threshold multiplier.
DEFAULT_C = 3.0


@dataclass(frozen=True)
class TypicalityReport:
    n: int
    l: float
    h: float
    lam: float
    z: float
    classification: str
    policy_c: float


def classify_values(n: int, l: float, h: float, lam: float, c: float = DEFAULT_C) -> TypicalityReport:
    """Classification from raw (N, l, h, lam); depends on nothing else."""
    if n < 1:
        raise TyplabError("N must be >= 1")
    if c <= 0:
        raise TyplabError("threshold multiplier c must be > 0")
    gap = l - h
    if lam > 0.0:
        z = gap / lam
        if gap > c * lam:
            label = UNDER_TYPICAL
        elif gap < -c * lam:
            label = OVER_TYPICAL
        else:
            label = TYPICAL
    else:
        # Deterministic source: no spread to scale by, fall back to sign.
        if abs(gap) <= DEGENERATE_TOL:
            z = 0.0
            label = TYPICAL
        else:
            z = float("inf") if gap > 0 else float("-inf")
            label = UNDER_TYPICAL if gap > 0 else OVER_TYPICAL
    return TypicalityReport(n=n, l=l, h=h, lam=lam, z=z, classification=label, policy_c=c)


def classify(stats: PrefixStats, c: float = DEFAULT_C) -> TypicalityReport:
    """Classify at the final prefix length of an analyzed trace."""
    n, l, h, lam = stats.final()
    return classify_values(n, l, h, lam, c)


def score_under_model(tokens: Sequence[int], scorer: Source) -> PrefixStats:
    """Prefix statistics of a fixed token path under a scoring source.

    Walks the scorer's conditional distributions along the given tokens;
    nothing is sampled. Raises UnknownToken for ids outside the scorer's
    alphabet and ZeroProbabilityPath (with the position) when a token in
    the alphabet has no mass under the conditional at that step.
    """
    if len(tokens) == 0:
        raise TyplabError("no tokens to score")
    alphabet = set(scorer.alphabet)
    acc = PrefixAccumulator()
    history: list[int] = []
    dist_at = scorer.dist_at
    for i, token in enumerate(tokens, start=1):
        token = int(token)
        if token not in alphabet:
            raise UnknownToken(f"token {token} at position {i} outside scorer alphabet")
        d = dist_at(i, history)
        p = d.get(token)
        if p is None:
            raise ZeroProbabilityPath(i, token)
        acc.add(p, d.entropy, d.log_variance)
        history.append(token)
    return acc.series


def false_negative_bound(alpha: float) -> float:
    """Chebyshev ceiling on missing a self-generated string at multiplier alpha."""
    if alpha <= 0:
        raise TyplabError("alpha must be > 0")
    return 1.0 / alpha**2


def report_to_json(report: TypicalityReport) -> dict:
    return {
        "N": report.n,
        "l": report.l,
        "h": report.h,
        "lam": report.lam,
        "z": report.z,
        "class": report.classification,
        "c": report.policy_c,
    }
