"""Exact brute-force verification over all strings of a small alphabet.

Enumerates every length-n string of a toy model with exact probability,
log-perplexity l, empirical entropy h, and log-deviation lam; counts DFA
languages with big-integer transfer matrices; builds typical, purged, and
over-typical sets; and checks every inequality numerically with explicit
margins. Everything here is an oracle: plain formulas evaluated exactly,
independent of the sampling paths they validate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import IO, Iterator, Sequence

import numpy as np

from .core_stats import Distribution
from .errors import (
    BoundViolated,
    CapExceeded,
    EmptyLanguageAtLengthN,
    NumericInconsistency,
    TyplabError,
    UnsupportedModel,
)
from .sources import (
    ContextTreeSource,
    GrammarSpec,
    IIDSource,
    IndependentSeqSource,
    Source,
)

#: Refuse to enumerate more than this many strings.
DEFAULT_CAP = 10**8

#: Slack added to strict comparisons so exact-zero cases survive rounding.
EDGE_TOL = 1e-12

#: Tolerance for the exact identities (mass one, mean equalities).
EXACT_TOL = 1e-9


@dataclass(frozen=True)
class StringRecord:
    """One enumerated string with its exact statistics."""

    tokens: tuple[int, ...]
    prob: float
    l: float
    h: float
    lam: float
    grammatical: bool | None = None


@dataclass(frozen=True)
class SetSummary:
    """Cardinality plus unconditional and grammar-conditional mass."""

    size: int
    mass: float
    cond_mass: float


@dataclass(frozen=True)
class BoundVerdict:
    name: str
    holds: bool
    lhs: float
    rhs: float
    margin: float
    equality: bool | None = None


@dataclass
class EnumerationReport:
    """All V**n strings of a model, with sets and verdicts filled by build_sets."""

    label: str
    n: int
    alphabet: tuple[int, ...]
    tokens: np.ndarray        # (V**n, n) uint8 alphabet positions
    prob: np.ndarray          # exact string probabilities, sum 1
    l: np.ndarray             # bits/token; +inf on zero-probability strings
    h: np.ndarray             # bits/token
    lam: np.ndarray           # bits/token
    mean_l: float
    mean_h: float
    joint_entropy: float      # bits, entropy of the full string distribution
    grammatical: np.ndarray | None = None
    g_n: float | None = None
    p_G_n: float | None = None
    eps: float | None = None
    delta_g: float | None = None
    rho: float | None = None
    masks: dict[str, np.ndarray] = field(default_factory=dict)
    set_summaries: dict[str, SetSummary] = field(default_factory=dict)
    bound_verdicts: dict[str, BoundVerdict] = field(default_factory=dict)

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)

    def record(self, i: int) -> StringRecord:
        ids = tuple(self.alphabet[p] for p in self.tokens[i])
        gram = None if self.grammatical is None else bool(self.grammatical[i])
        return StringRecord(
            tokens=ids,
            prob=float(self.prob[i]),
            l=float(self.l[i]),
            h=float(self.h[i]),
            lam=float(self.lam[i]),
            grammatical=gram,
        )

    def records(self) -> Iterator[StringRecord]:
        return (self.record(i) for i in range(len(self.prob)))


@dataclass(frozen=True)
class VarianceReport:
    """Exact martingale variance decomposition at length n."""

    n: int
    exact_var_l_minus_h: float
    sum_conditional_vars: float
    chebyshev_checks: list[tuple[float, float, float]]  # (alpha, exceedance, 1/alpha^2)


# ----------------------------------------------------------------- counting

def exact_log2_int(x: int) -> float:
    """log2 of a positive integer, accurate to an ulp at any magnitude."""
    if x <= 0:
        raise TyplabError("log2 of a non-positive integer")
    if x < (1 << 53):
        return math.log2(x)
    shift = x.bit_length() - 53
    return math.log2(x >> shift) + shift


def _mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    size = len(a)
    bt = list(zip(*b))
    return [[sum(ra[k] * cb[k] for k in range(size)) for cb in bt] for ra in a]


def count_dfa_strings(grammar: GrammarSpec, n: int) -> tuple[int, float]:
    """Exact |G(n)| by transfer-matrix power, and g(n) = log2|G(n)| / n."""
    if n < 1:
        raise TyplabError("n must be >= 1")
    dfa = grammar.dfa
    size = dfa.num_states
    base = [[0] * size for _ in range(size)]
    for s, row in enumerate(dfa.transitions):
        for tgt in row:
            base[s][tgt] += 1
    # M**n by binary exponentiation; entries are exact big integers.
    result = [[int(i == j) for j in range(size)] for i in range(size)]
    power = base
    e = n
    while e:
        if e & 1:
            result = _mat_mul(result, power)
        e >>= 1
        if e:
            power = _mat_mul(power, power)
    count = sum(result[dfa.start][s] for s in dfa.accepting)
    if count == 0:
        raise EmptyLanguageAtLengthN(f"grammar accepts no string of length {n}")
    return count, exact_log2_int(count) / n


# -------------------------------------------------------------- enumeration

def _dist_row(d: Distribution, position: dict[int, int], v: int) -> np.ndarray:
    row = np.zeros(v)
    for token, p in zip(d.ids, d.probs):
        row[position[token]] = p
    return row


def enumerate_strings(model: Source, n: int, cap: int | None = None) -> EnumerationReport:
    """Every length-n string with exact prob, l, h, lam from the model tables.

    Grammar-filtered sources are rejected: their conditioning is applied
    analytically by build_sets, never by re-enumeration.
    """
    if n < 1:
        raise TyplabError("n must be >= 1")
    cap = DEFAULT_CAP if cap is None else cap
    if isinstance(model, ContextTreeSource):
        depth = model.depth
    elif isinstance(model, IIDSource):
        depth = 0
    elif isinstance(model, IndependentSeqSource):
        depth = 0
        if model.length is not None and model.length < n:
            raise TyplabError(f"independent-sequence source fixed at length {model.length} < {n}")
    else:
        raise UnsupportedModel(f"cannot enumerate {type(model).__name__}")

    alphabet = model.alphabet
    v = len(alphabet)
    total = v**n
    if total > cap:
        raise CapExceeded(f"V**n = {total} exceeds cap {cap}")
    position = {token: i for i, token in enumerate(alphabet)}

    # Conditional tables indexed by context code (base-V encoding of the last
    # cl alphabet positions, most recent least significant).
    per_length: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    if isinstance(model, ContextTreeSource):
        for cl in range(depth + 1):
            rows, ents, lvars = [], [], []
            for ctx in itertools.product(alphabet, repeat=cl):
                d = model.table[ctx]
                rows.append(_dist_row(d, position, v))
                ents.append(d.entropy)
                lvars.append(d.log_variance)
            per_length.append((np.array(rows), np.array(ents), np.array(lvars)))
    elif isinstance(model, IIDSource):
        d = model.dist
        per_length.append(
            (np.array([_dist_row(d, position, v)]), np.array([d.entropy]), np.array([d.log_variance]))
        )

    idx = np.arange(total, dtype=np.int64)
    tokens = np.empty((total, n), dtype=np.uint8)
    logp = np.zeros(total)
    sum_h = np.zeros(total)
    sum_v = np.zeros(total)
    codes = np.zeros(total, dtype=np.int64)

    for j in range(n):
        tok = (idx // v ** (n - 1 - j)) % v
        tokens[:, j] = tok
        if isinstance(model, IndependentSeqSource):
            d = model.rule(j + 1)
            row = _dist_row(d, position, v)
            p = row[tok]
            sum_h += d.entropy
            sum_v += d.log_variance
        else:
            cl = min(j, depth)
            rows, ents, lvars = per_length[cl]
            p = rows[codes, tok]
            sum_h += ents[codes]
            sum_v += lvars[codes]
            if j + 1 < n and depth > 0:
                if j < depth:
                    codes = codes * v + tok
                else:
                    codes = (codes % v ** (depth - 1)) * v + tok
        with np.errstate(divide="ignore"):
            logp = logp + np.log2(p)

    prob = np.exp2(logp)
    mass = float(prob.sum())
    if abs(mass - 1.0) > EXACT_TOL:
        raise NumericInconsistency(f"enumerated mass {mass!r} differs from 1")
    l = -logp / n
    h = sum_h / n
    lam = np.sqrt(sum_v) / n

    pos = prob > 0.0
    mean_l = float(prob[pos] @ l[pos])
    mean_h = float(prob @ h)
    joint_entropy = -float(prob[pos] @ logp[pos])

    return EnumerationReport(
        label=model.label,
        n=n,
        alphabet=tuple(alphabet),
        tokens=tokens,
        prob=prob,
        l=l,
        h=h,
        lam=lam,
        mean_l=mean_l,
        mean_h=mean_h,
        joint_entropy=joint_entropy,
    )


# ---------------------------------------------------------------- set logic

SET_NAMES = ("T", "T_G", "E1", "P", "E2", "V")


def build_sets(
    report: EnumerationReport,
    grammar: GrammarSpec,
    eps: float,
    delta_g_probe: float | None = None,
) -> EnumerationReport:
    """Fill grammatical flags, g(n), p_G(n), and the six sets on a report.

    Sets over the V**n strings, with g = g(n):
      T  : |l - h| < eps                      (typical)
      T_G: grammatical and typical
      E1 : grammatical with l > g + eps/2     (high-entropy tail)
      P  : T_G minus E1                       (purged typical set)
      E2 : P with h <= g - delta_g            (entropy-gap witnesses)
      V  : grammatical with l <= h - eps      (over-typical)

    delta_g_probe defaults to half the gap between g and the
    probability-weighted mean of h over P; the realized (delta_g, rho)
    pair is reported rather than assumed.
    """
    if eps <= 0:
        raise TyplabError("eps must be > 0")
    dfa = grammar.dfa
    if dfa.alphabet_size != report.alphabet_size:
        raise TyplabError("grammar alphabet size differs from report alphabet size")

    total, n = report.tokens.shape
    trans = np.array(dfa.transitions, dtype=np.int64)
    accepting = np.zeros(dfa.num_states, dtype=bool)
    accepting[list(dfa.accepting)] = True
    state = np.full(total, dfa.start, dtype=np.int64)
    for j in range(n):
        state = trans[state, report.tokens[:, j]]
    grammatical = accepting[state]

    count, g = count_dfa_strings(grammar, n)
    if count != int(grammatical.sum()):
        raise NumericInconsistency(
            f"transfer-matrix count {count} != enumerated count {int(grammatical.sum())}"
        )
    p_g = float(report.prob[grammatical].sum())

    prob, l, h = report.prob, report.l, report.h
    typical = np.abs(l - h) < eps
    t_g = grammatical & typical
    e1 = grammatical & (l > g + eps / 2)
    purged = t_g & ~e1

    if delta_g_probe is None:
        mass_p = float(prob[purged].sum())
        if mass_p > 0.0:
            mean_h_p = float(prob[purged] @ h[purged]) / mass_p
            delta_g = max((g - mean_h_p) / 2.0, 0.0)
        else:
            delta_g = 0.0
    else:
        delta_g = float(delta_g_probe)

    e2 = purged & (h <= g - delta_g)
    over = grammatical & (l <= h - eps)
    size_p = int(purged.sum())
    rho = (int(e2.sum()) / size_p) if size_p else 0.0

    masks = {"T": typical, "T_G": t_g, "E1": e1, "P": purged, "E2": e2, "V": over}
    summaries = {}
    for name, mask in masks.items():
        mass = float(prob[mask].sum())
        cond = float(prob[mask & grammatical].sum()) / p_g if p_g > 0 else 0.0
        summaries[name] = SetSummary(size=int(mask.sum()), mass=mass, cond_mass=cond)

    report.grammatical = grammatical
    report.g_n = g
    report.p_G_n = p_g
    report.eps = eps
    report.delta_g = delta_g
    report.rho = rho
    report.masks = masks
    report.set_summaries = summaries
    return report


def _counterexamples(report: EnumerationReport, mask: np.ndarray, limit: int = 50) -> list[tuple[int, ...]]:
    rows = np.flatnonzero(mask)[:limit]
    return [tuple(int(report.alphabet[p]) for p in report.tokens[i]) for i in rows]


def verify_bounds(
    report: EnumerationReport,
    grammar: GrammarSpec,
    eps: float,
    strict: bool = False,
) -> dict[str, BoundVerdict]:
    """Numeric check of every inequality on a set-filled report.

    With strict=True the first failing bound raises BoundViolated carrying
    the offending strings; by default verdicts (with margins) are returned
    for reporting.
    """
    if not report.masks or report.g_n is None or report.eps != eps:
        report = build_sets(report, grammar, eps, report.delta_g)
    n = report.n
    g, p_g = report.g_n, report.p_G_n
    prob, l, h = report.prob, report.l, report.h
    grammatical = report.grammatical
    verdicts: dict[str, BoundVerdict] = {}

    def add(name, lhs, rhs, fail_mask=None, equality=None):
        holds = lhs <= rhs + EDGE_TOL
        verdicts[name] = BoundVerdict(name, bool(holds), float(lhs), float(rhs),
                                      float(rhs - lhs), equality)
        if strict and not holds:
            mask = fail_mask if fail_mask is not None else np.zeros(len(prob), dtype=bool)
            raise BoundViolated(name, _counterexamples(report, mask))

    # (a) grammatical strings rarely have entropy above g + eps
    tail = grammatical & (h > g + eps)
    lhs_a = float(prob[tail].sum()) / p_g if p_g > 0 else 0.0
    add("entropy_tail_bound", lhs_a, (1.0 / p_g) * 2.0 ** (-n * eps / 2.0), tail)

    # (b) purged typical set is exponentially small whenever rho > 0
    size_g = int(grammatical.sum())
    if report.rho > 0:
        lhs_b = report.set_summaries["P"].size / size_g
        rhs_b = 2.0 ** (-n * report.delta_g / 2.0) / report.rho
        add("purged_set_small", lhs_b, rhs_b, report.masks["P"])
    else:
        verdicts["purged_set_small"] = BoundVerdict(
            "purged_set_small", True, 0.0, math.inf, math.inf
        )

    # (c) over-typical set is smaller still
    add("overtypical_set_small",
        report.set_summaries["V"].size / size_g,
        2.0 ** (-n * eps),
        report.masks["V"])

    # (d) per-token entropy of the grammar-conditioned string distribution
    sel = grammatical & (prob > 0.0)
    q = prob[sel] / p_g
    lhs_d = -float(q @ np.log2(q)) / n
    add("conditional_entropy_le_g", lhs_d, g, sel, equality=abs(lhs_d - g) <= EXACT_TOL)

    # (e) mean log-perplexity = mean empirical entropy = joint entropy rate
    lhs_e = max(abs(report.mean_l - report.mean_h),
                abs(report.mean_l - report.joint_entropy / n))
    add("mean_identity", lhs_e, EXACT_TOL)

    report.bound_verdicts = verdicts
    return verdicts


def variance_decomposition(
    model: Source,
    n: int,
    alphas: Sequence[float],
    cap: int | None = None,
) -> VarianceReport:
    """Exact Var(l - h) against the summed conditional log-variances.

    The two sides agree to rounding because the centered per-step log-scores
    form a martingale difference sequence; each alpha also gets the exact
    exceedance probability against the 1/alpha^2 Chebyshev ceiling.
    """
    report = enumerate_strings(model, n, cap)
    prob, l, h, lam = report.prob, report.l, report.h, report.lam
    pos = prob > 0.0
    d = l[pos] - h[pos]
    w = prob[pos]
    mean_d = float(w @ d)
    exact_var = float(w @ ((d - mean_d) ** 2))
    sum_conditional = float(prob @ (lam**2))
    sd = math.sqrt(sum_conditional)
    checks = []
    for alpha in alphas:
        if alpha <= 0:
            raise TyplabError("alpha must be > 0")
        exceed = float(w[np.abs(d) > alpha * sd + EDGE_TOL].sum())
        checks.append((float(alpha), exceed, 1.0 / alpha**2))
    return VarianceReport(
        n=n,
        exact_var_l_minus_h=exact_var,
        sum_conditional_vars=sum_conditional,
        chebyshev_checks=checks,
    )


# ------------------------------------------------------------------- export

def report_summary(report: EnumerationReport) -> dict:
    """JSON-ready summary: sizes, masses, realized parameters, verdicts."""
    out = {
        "label": report.label,
        "n": report.n,
        "alphabet_size": report.alphabet_size,
        "mean_l": report.mean_l,
        "mean_h": report.mean_h,
        "joint_entropy_per_token": report.joint_entropy / report.n,
    }
    if report.grammatical is not None:
        out.update(
            {
                "g_n": report.g_n,
                "p_G_n": report.p_G_n,
                "eps": report.eps,
                "delta_g": report.delta_g,
                "rho": report.rho,
                "grammatical_count": int(report.grammatical.sum()),
                "sets": {
                    name: {"size": s.size, "mass": s.mass, "cond_mass": s.cond_mass}
                    for name, s in report.set_summaries.items()
                },
                "bound_verdicts": {
                    name: {
                        "holds": v.holds,
                        "lhs": v.lhs,
                        "rhs": v.rhs,
                        "margin": v.margin,
                        **({} if v.equality is None else {"equality": v.equality}),
                    }
                    for name, v in report.bound_verdicts.items()
                },
            }
        )
    return out


SWEEP_CSV_HEADER = (
    "n,alphabet_size,g_n,p_G_n,eps,delta_g,rho,"
    "size_G,size_T,size_T_G,size_E1,size_P,size_E2,size_V,"
    "ratio_P_over_G,ratio_V_over_G,cond_mass_P"
)


def summaries_to_csv(summaries: Sequence[dict], sink: IO[str]) -> int:
    """Per-n set-size table, one row per summary (for decay plots)."""
    sink.write(SWEEP_CSV_HEADER + "\n")
    rows = 0
    for s in summaries:
        size_g = s["grammatical_count"]
        sets = s["sets"]
        sink.write(
            ",".join(
                repr(x) if isinstance(x, float) else str(x)
                for x in (
                    s["n"], s["alphabet_size"], s["g_n"], s["p_G_n"], s["eps"],
                    s["delta_g"], s["rho"], size_g,
                    sets["T"]["size"], sets["T_G"]["size"], sets["E1"]["size"],
                    sets["P"]["size"], sets["E2"]["size"], sets["V"]["size"],
                    sets["P"]["size"] / size_g, sets["V"]["size"] / size_g,
                    sets["P"]["cond_mass"],
                )
            )
            + "\n"
        )
        rows += 1
    return rows
