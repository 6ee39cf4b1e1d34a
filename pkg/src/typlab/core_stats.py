"""Pure per-distribution information measures, all in bits (base-2 logs).

A `Distribution` is a finite probability vector over token ids. All
statistics are computed over the recorded (possibly truncated and
renormalized) distribution, never over anything larger; probabilities below
`P_MIN` are floored at construction so every log term is bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .errors import (
    DuplicateId,
    EmptyString,
    EmptySupport,
    NonFinite,
    NumericInconsistency,
    SupportMismatch,
    UnknownToken,
)

#: Probability floor applied at construction; keeps every -log2 p below ~33 bits.
P_MIN = 1e-10

#: Tolerance on "probs sum to 1" used to take the no-op fast path.
SUM_TOL = 1e-9

#: Most negative radicand of sqrt(S - H^2) attributed to rounding.
RADICAND_TOL = -1e-12


def kahan_sum(values: Iterable[float]) -> float:
    """Compensated summation, stable to input permutation within ~1e-12."""
    total = 0.0
    carry = 0.0
    for v in values:
        y = v - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


@dataclass(frozen=True)
class DistStats:
    """Entropy (bits), second log-moment (bits^2), log-deviation (bits)."""

    entropy: float
    second_log_moment: float
    log_deviation: float


@dataclass(frozen=True)
class Distribution:
    """A finite probability vector over distinct token ids, sorted by id.

    Build through :func:`validate_distribution`; direct construction skips
    the invariant checks and is reserved for values already validated.
    """

    ids: tuple[int, ...]
    probs: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, token: int) -> bool:
        return token in self._index

    @cached_property
    def _index(self) -> dict[int, float]:
        return dict(zip(self.ids, self.probs))

    @cached_property
    def _cdf(self) -> list[float]:
        out = []
        acc = 0.0
        for p in self.probs:
            acc += p
            out.append(acc)
        return out

    def get(self, token: int) -> float | None:
        """Probability of `token`, or None when it is outside the support."""
        return self._index.get(token)

    def sample(self, u: float) -> int:
        """Inverse-CDF draw: the id at the first cumulative bin exceeding u.

        Support is id-sorted, so the mapping from u to token is fully
        determined and identical on every platform.
        """
        cdf = self._cdf
        lo, hi = 0, len(cdf) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if u < cdf[mid]:
                hi = mid
            else:
                lo = mid + 1
        return self.ids[lo]

    @cached_property
    def entropy(self) -> float:
        """H(p) = -sum p log2 p."""
        return kahan_sum(-p * math.log2(p) for p in self.probs)

    @cached_property
    def second_log_moment(self) -> float:
        """S(p) = sum p (log2 p)^2."""
        return kahan_sum(p * math.log2(p) ** 2 for p in self.probs)

    @cached_property
    def log_variance(self) -> float:
        """Variance of -log2 p(Y): S(p) - H(p)^2, snapped to 0 inside rounding noise.

        Equal-probability supports have a radicand of exactly zero in real
        arithmetic; the float residue of the subtraction is at most a few
        ulps of S, so anything inside that envelope is treated as zero.
        """
        s = self.second_log_moment
        radicand = s - self.entropy**2
        if radicand < RADICAND_TOL:
            raise NumericInconsistency(
                f"second log-moment below squared entropy by {radicand:.3e}"
            )
        noise = 64.0 * 2.220446049250313e-16 * max(1.0, s)
        return radicand if radicand > noise else 0.0

    @cached_property
    def log_deviation(self) -> float:
        """Standard deviation of -log2 p(Y) under p."""
        return math.sqrt(self.log_variance)

    @cached_property
    def stats(self) -> DistStats:
        return DistStats(self.entropy, self.second_log_moment, self.log_deviation)


def validate_distribution(raw: Iterable[tuple[int, float]]) -> Distribution:
    """Normalize raw (id, prob) pairs into a valid Distribution.

    Zero entries are dropped, the rest renormalized to sum 1 (preserving
    ratios), then entries below `P_MIN` are floored and the remainder
    rescaled until every entry clears the floor. Inputs that already
    satisfy all invariants are returned unchanged bit for bit, which makes
    the operation idempotent.
    """
    pairs = list(raw)
    seen: set[int] = set()
    kept: list[tuple[int, float]] = []
    for token, prob in pairs:
        token = int(token)
        if token < 0:
            raise NonFinite(f"token id {token} is negative")
        if token in seen:
            raise DuplicateId(f"token id {token} repeats")
        seen.add(token)
        prob = float(prob)
        if math.isnan(prob) or math.isinf(prob) or prob < 0.0:
            raise NonFinite(f"probability {prob!r} for token {token}")
        if prob > 0.0:
            kept.append((token, prob))
    if not kept:
        raise EmptySupport("no strictly positive probability entries")

    kept.sort()
    ids = tuple(t for t, _ in kept)
    probs = [p for _, p in kept]
    total = kahan_sum(probs)

    if abs(total - 1.0) <= SUM_TOL and min(probs) >= P_MIN:
        return Distribution(ids, tuple(probs))

    probs = [p / total for p in probs]
    floored: set[int] = set()
    while True:
        newly_low = [i for i, p in enumerate(probs) if p < P_MIN and i not in floored]
        if not newly_low:
            break
        floored.update(newly_low)
        head_mass = 1.0 - P_MIN * len(floored)
        if head_mass <= 0.0:
            raise NumericInconsistency(
                f"support of size {len(probs)} cannot clear the {P_MIN} floor"
            )
        rest = [i for i in range(len(probs)) if i not in floored]
        rest_sum = kahan_sum(probs[i] for i in rest)
        scale = head_mass / rest_sum
        for i in rest:
            probs[i] *= scale
        for i in floored:
            probs[i] = P_MIN
    return Distribution(ids, tuple(probs))


def entropy(d: Distribution) -> float:
    """Entropy of the distribution, in bits."""
    return d.entropy


def second_log_moment(d: Distribution) -> float:
    """Second moment of -log2 p(Y) under p, in bits^2."""
    return d.second_log_moment


def log_deviation(d: Distribution) -> float:
    """Standard deviation of -log2 p(Y) under p, in bits."""
    return d.log_deviation


def dist_stats(d: Distribution) -> DistStats:
    return d.stats


def cross_entropy(p: Distribution, q: Distribution) -> float:
    """H(p, q) = -sum_y p(y) log2 q(y); requires support(p) within support(q)."""
    terms = []
    for token, prob in zip(p.ids, p.probs):
        q_prob = q.get(token)
        if q_prob is None:
            raise SupportMismatch(f"token {token} carries p-mass but is outside q")
        terms.append(-prob * math.log2(q_prob))
    return kahan_sum(terms)


def empirical_distribution(tokens: Sequence[int], alphabet: Iterable[int]) -> Distribution:
    """Frequency distribution of the observed tokens over ids with count > 0."""
    if len(tokens) == 0:
        raise EmptyString("no tokens to count")
    universe = set(alphabet)
    counts: dict[int, int] = {}
    for token in tokens:
        if token not in universe:
            raise UnknownToken(f"token {token} outside alphabet")
        counts[token] = counts.get(token, 0) + 1
    n = len(tokens)
    return validate_distribution((t, c / n) for t, c in counts.items())
