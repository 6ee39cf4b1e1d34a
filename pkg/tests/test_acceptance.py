"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. Every criterion carries
its stated tolerance and a wall-clock budget; expected values come from
closed forms, exact enumeration, or independent Monte-Carlo oracles.
"""

import io
import json
import math
import time

import numpy as np
import pytest

from typlab.cli import main as cli_main
from typlab.core_stats import cross_entropy, empirical_distribution, entropy, validate_distribution
from typlab.oracle import build_sets, enumerate_strings, variance_decomposition, verify_bounds
from typlab.sources import (
    IIDSource,
    no_repeat_grammar,
    random_context_tree,
    sample_ids,
    sample_trace,
    uniform_no_repeat_tree,
)
from typlab.trace import prefix_stats, read_trace, write_trace
from typlab.typicality import TYPICAL, UNDER_TYPICAL, classify, score_under_model

H_25_75 = 0.8112781244591328

# Pinned experiment models: a deliberately non-entropy-maximizing tree and a
# distinct scorer with a wide cross-entropy gap.
GAPPED = dict(alphabet_size=3, depth=2, seed=0, sharpness=2.0)
SCORER = dict(alphabet_size=3, depth=2, seed=3, sharpness=2.0)


def report(name: str, ok: bool, detail: str, started: float, budget: float) -> None:
    elapsed = time.time() - started
    print(f"{name} {'PASS' if ok else 'FAIL'} [{elapsed:.1f}s] {detail}")
    assert ok, f"{name}: {detail}"
    assert elapsed < budget, f"{name}: took {elapsed:.1f}s, budget {budget}s"


def random_dist(rng, v):
    return validate_distribution(enumerate(rng.dirichlet(np.ones(v))))


def test_P1_exact_identity_suite():
    """l == H(empirical, alpha) on 100 iid traces; Gibbs on 1e4 pairs."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for trial in range(100):
        v = int(rng.integers(2, 9))
        n = int(rng.integers(100, 10_001))
        alpha = random_dist(rng, v)
        src = IIDSource(alpha)
        tokens = sample_ids(src, n, seed=trial)
        _, l, _, _ = score_under_model(tokens, src).final()
        identity = cross_entropy(empirical_distribution(tokens, alpha.ids), alpha)
        worst = max(worst, abs(l - identity))
    gibbs_ok = True
    equality_worst = 0.0
    for _ in range(10_000):
        v = int(rng.integers(2, 9))
        p = random_dist(rng, v)
        q = random_dist(rng, v)
        gibbs_ok &= cross_entropy(p, q) >= entropy(p) - 1e-12
        equality_worst = max(equality_worst, abs(cross_entropy(p, p) - entropy(p)))
    ok = worst <= 1e-9 and gibbs_ok and equality_worst <= 1e-9
    report("P1", ok,
           f"identity max |l - H(emp,a)| = {worst:.2e}; Gibbs held on 1e4 pairs "
           f"(self-equality max {equality_worst:.2e})", t0, 10.0)


def twenty_models():
    return [random_context_tree(3, 1 + (seed % 2), seed=seed) for seed in range(20)]


def test_P2_mean_identity_by_enumeration():
    """E[l] = E[h] = H(joint)/n within 1e-9 for 20 seeded trees at n=8."""
    t0 = time.time()
    worst = 0.0
    for model in twenty_models():
        rep = enumerate_strings(model, 8)
        worst = max(worst, abs(rep.mean_l - rep.mean_h),
                    abs(rep.mean_l - rep.joint_entropy / 8))
    report("P2", worst <= 1e-9, f"max identity gap = {worst:.2e} over 20 models", t0, 60.0)


def test_P3_variance_decomposition():
    """Exact Var(l-h) == summed conditional variances; Chebyshev exceedances."""
    t0 = time.time()
    worst_rel = 0.0
    cheb_ok = True
    for model in twenty_models():
        vr = variance_decomposition(model, 8, [1.5, 2.0, 3.0])
        denom = max(abs(vr.sum_conditional_vars), 1e-300)
        worst_rel = max(worst_rel, abs(vr.exact_var_l_minus_h - vr.sum_conditional_vars) / denom)
        cheb_ok &= all(exceed <= bound for _, exceed, bound in vr.chebyshev_checks)
    ok = worst_rel <= 1e-9 and cheb_ok
    report("P3", ok, f"max relative variance gap = {worst_rel:.2e}; "
           f"all exceedances within 1/alpha^2", t0, 60.0)


def test_P4_convergence_in_probability():
    """Pr(|l-h| > 0.1) non-increasing over N in {1e2,1e3,1e4}; <= 0.02 at 1e4."""
    t0 = time.time()
    src = random_context_tree(**GAPPED)
    rates = []
    for n in (100, 1_000, 10_000):
        exceed = 0
        for seed in range(1000):
            tokens = sample_ids(src, n, seed=seed)
            _, l, h, _ = score_under_model(tokens, src).final()
            exceed += abs(l - h) > 0.1
        rates.append(exceed / 1000)
    ok = rates[0] >= rates[1] >= rates[2] and rates[2] <= 0.02
    report("P4", ok, f"exceedance rates {rates} over N in (1e2, 1e3, 1e4)", t0, 300.0)


def test_P5_bound_suite():
    """Set-size bounds, strict ratio decay, and uniform-dictionary equality."""
    t0 = time.time()
    eps = 0.25
    grammar = no_repeat_grammar(3)
    src = random_context_tree(**GAPPED)
    ratios_p, ratios_v = [], []
    bounds_ok = True
    detail = []
    for n in range(4, 11):
        rep = enumerate_strings(src, n)
        build_sets(rep, grammar, eps)
        verdicts = verify_bounds(rep, grammar, eps)
        for name in ("entropy_tail_bound", "purged_set_small", "overtypical_set_small"):
            if not verdicts[name].holds:
                bounds_ok = False
                detail.append(f"{name}@n={n}")
        size_g = int(rep.grammatical.sum())
        ratios_p.append(rep.set_summaries["P"].size / size_g)
        ratios_v.append(rep.set_summaries["V"].size / size_g)
    decreasing = all(a > b for a, b in zip(ratios_p, ratios_p[1:])) and all(
        a > b for a, b in zip(ratios_v, ratios_v[1:])
    )
    uniform = enumerate_strings(uniform_no_repeat_tree(3), 8)
    build_sets(uniform, grammar, eps)
    eq = verify_bounds(uniform, grammar, eps)["conditional_entropy_le_g"]
    ok = bounds_ok and decreasing and eq.holds and eq.equality
    report("P5", ok,
           f"bounds {'ok' if bounds_ok else detail}; |P|/|G| {ratios_p[0]:.4f}->{ratios_p[-1]:.4f} "
           f"and |V|/|G| {ratios_v[0]:.4f}->{ratios_v[-1]:.4f} strictly decreasing={decreasing}; "
           f"uniform-dictionary equality margin {abs(eq.lhs - eq.rhs):.2e}", t0, 120.0)


def test_P6_cross_aep():
    """Scoring under the generator vs a mismatched iid model at N=1e5."""
    t0 = time.time()
    alpha = IIDSource(validate_distribution([(0, 0.5), (1, 0.5)]), label="A")
    beta = IIDSource(validate_distribution([(0, 0.25), (1, 0.75)]), label="B")
    ls_a, ls_b, wins = [], [], 0
    for seed in range(100):
        tokens = sample_ids(alpha, 100_000, seed=seed)
        _, l_a, _, _ = score_under_model(tokens, alpha).final()
        _, l_b, _, _ = score_under_model(tokens, beta).final()
        ls_a.append(l_a)
        ls_b.append(l_b)
        wins += l_a < l_b
    mean_a, mean_b = float(np.mean(ls_a)), float(np.mean(ls_b))
    ok = abs(mean_a - 1.0) < 0.01 and abs(mean_b - 1.2075) < 0.01 and wins >= 99
    report("P6", ok,
           f"mean l_A = {mean_a:.6f} (target 1.0), mean l_B = {mean_b:.6f} "
           f"(target 1.2075), ordering held {wins}/100", t0, 120.0)


def test_P7_detection_guarantee():
    """Self-traces typical >= 8/9; wide-gap cross traces under-typical >= 95%."""
    t0 = time.time()
    gen = random_context_tree(**GAPPED)
    scorer = random_context_tree(**SCORER)
    trials = 1000
    self_typical = 0
    cross_under = 0
    gaps = []
    for seed in range(trials):
        tokens = sample_ids(gen, 10_000, seed=seed)
        self_stats = score_under_model(tokens, gen)
        cross_stats = score_under_model(tokens, scorer)
        self_typical += classify(self_stats, c=3.0).classification == TYPICAL
        cross_under += classify(cross_stats, c=3.0).classification == UNDER_TYPICAL
        gaps.append(cross_stats.final()[1] - self_stats.final()[1])
    gap = float(np.mean(gaps))
    ok = (self_typical / trials >= 8 / 9) and (cross_under / trials >= 0.95) and gap >= 0.3
    report("P7", ok,
           f"self-typical {self_typical}/{trials} (floor 8/9); cross under-typical "
           f"{cross_under}/{trials} (floor 95%); cross-entropy gap {gap:.3f} bits/token",
           t0, 300.0)


def test_P8_roundtrip_and_determinism(tmp_path):
    """write->read->analyze reproduces stats to 1e-12; identical artifacts."""
    t0 = time.time()
    src = random_context_tree(**GAPPED)
    header, steps = sample_trace(src, 5000, seed=21)
    base = prefix_stats(steps)
    buf = io.BytesIO()
    write_trace(header, steps, buf)
    buf.seek(0)
    _, steps2 = read_trace(buf)
    again = prefix_stats(steps2)
    worst = max(
        max(abs(a - b) for a, b in zip(base.l, again.l)),
        max(abs(a - b) for a, b in zip(base.h, again.h)),
        max(abs(a - b) for a, b in zip(base.lam, again.lam)),
    )

    source_path = tmp_path / "src.json"
    source_path.write_text(json.dumps({"variant": "context_tree", **GAPPED}))
    artifacts = []
    for run in ("x", "y"):
        trace_path = tmp_path / f"{run}.ndjson"
        csv_path = tmp_path / f"{run}.csv"
        json_path = tmp_path / f"{run}.json"
        assert cli_main(["simulate", "--source", str(source_path), "--n", "800",
                         "--seed", "13", "--out", str(trace_path)]) == 0
        assert cli_main(["analyze", "--in", str(trace_path), "--out", str(csv_path)]) == 0
        assert cli_main(["classify", "--in", str(csv_path), "--out", str(json_path)]) == 0
        artifacts.append(
            (trace_path.read_bytes(), csv_path.read_bytes(), json_path.read_bytes())
        )
    identical = artifacts[0] == artifacts[1]
    ok = worst <= 1e-12 and identical
    report("P8", ok,
           f"max round-trip drift = {worst:.2e}; byte-identical artifacts = {identical}",
           t0, 60.0)
