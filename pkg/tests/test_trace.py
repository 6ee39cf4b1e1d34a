"""Trace format round-trips, streaming validation, and prefix-series math."""

import io
import json
import math

import pytest

from typlab.core_stats import cross_entropy, empirical_distribution, validate_distribution
from typlab.errors import (
    ChosenNotInSupport,
    EmptyTrace,
    HeaderMissing,
    IndexGap,
    MalformedRecord,
)
from typlab.sources import IIDSource, random_context_tree, sample_trace
from typlab.trace import (
    PrefixStats,
    TraceHeader,
    TraceStep,
    prefix_stats,
    prefix_stats_to_csv,
    read_prefix_csv,
    read_trace,
    write_trace,
)

H_25_75 = 0.8112781244591328
LAM_25_75 = 0.6863088948351165


def make_header(**kw):
    base = dict(source_kind="simulated", model_label="test", seed=1)
    base.update(kw)
    return TraceHeader(**base)


def uniform_step(index, chosen):
    d = validate_distribution([(0, 0.5), (1, 0.5)])
    return TraceStep(index=index, chosen_id=chosen, chosen_prob=0.5, dist=d)


def point_step(index, token=3):
    d = validate_distribution([(token, 1.0)])
    return TraceStep(index=index, chosen_id=token, chosen_prob=1.0, dist=d)


def roundtrip(header, steps):
    buf = io.BytesIO()
    count = write_trace(header, steps, buf)
    buf.seek(0)
    header2, steps2 = read_trace(buf)
    return count, header2, list(steps2)


class TestRoundTrip:
    def test_two_steps(self):
        header = make_header()
        steps = [uniform_step(1, 0), uniform_step(2, 1)]
        count, header2, steps2 = roundtrip(header, steps)
        assert count == 2
        assert header2 == header
        assert steps2 == steps

    def test_header_only(self):
        count, header2, steps2 = roundtrip(make_header(), [])
        assert count == 0
        assert steps2 == []

    def test_header_fields_survive(self):
        header = make_header(
            source_kind="probe_score",
            model_label="some model",
            top_k=100,
            seed=None,
            prompt_token_count=17,
            alphabet_size=50000,
        )
        _, header2, _ = roundtrip(header, [])
        assert header2 == header

    def test_probabilities_bit_exact(self):
        d = validate_distribution([(0, 1 / 3), (1, 1 / 7), (2, 1 - 1 / 3 - 1 / 7)])
        steps = [TraceStep(1, 1, d.probs[1], d)]
        _, _, steps2 = roundtrip(make_header(), steps)
        assert steps2[0].dist.probs == d.probs
        assert steps2[0].chosen_prob == d.probs[1]

    def test_simulated_roundtrip_stats_identical(self):
        src = random_context_tree(3, 2, seed=11)
        header, steps = sample_trace(src, 500, seed=5)
        base = prefix_stats(steps)
        _, _, steps2 = roundtrip(header, steps)
        again = prefix_stats(steps2)
        assert base.l == again.l
        assert base.h == again.h
        assert base.lam == again.lam

    def test_large_roundtrip_within_1e12(self):
        src = IIDSource(validate_distribution([(0, 0.25), (1, 0.75)]))
        header, steps = sample_trace(src, 10_000, seed=9)
        base = prefix_stats(steps)
        _, _, steps2 = roundtrip(header, steps)
        again = prefix_stats(steps2)
        for a, b in zip(base.l, again.l):
            assert abs(a - b) <= 1e-12
        for a, b in zip(base.lam, again.lam):
            assert abs(a - b) <= 1e-12


class TestReaderValidation:
    def lines(self, *objs):
        return io.BytesIO(b"".join(json.dumps(o).encode() + b"\n" for o in objs))

    def header_obj(self):
        return {
            "type": "header", "version": 1, "source_kind": "simulated",
            "model_label": "t", "top_k": None, "seed": 0,
            "prompt_token_count": 0, "alphabet_size": 2,
        }

    def step_obj(self, index, chosen=0, prob=0.5):
        return {
            "type": "step", "index": index, "chosen_id": chosen,
            "chosen_prob": prob, "ids": [0, 1], "probs": [0.5, 0.5],
        }

    def test_missing_header(self):
        stream = self.lines(self.step_obj(1))
        with pytest.raises(HeaderMissing):
            read_trace(stream)

    def test_empty_stream(self):
        with pytest.raises(HeaderMissing):
            read_trace(io.BytesIO(b""))

    def test_index_gap(self):
        _, steps = read_trace(self.lines(self.header_obj(), self.step_obj(1), self.step_obj(3)))
        with pytest.raises(IndexGap):
            list(steps)

    def test_chosen_not_in_support(self):
        _, steps = read_trace(self.lines(self.header_obj(), self.step_obj(1, chosen=9)))
        with pytest.raises(ChosenNotInSupport):
            list(steps)

    def test_chosen_prob_mismatch(self):
        _, steps = read_trace(self.lines(self.header_obj(), self.step_obj(1, prob=0.75)))
        with pytest.raises(MalformedRecord):
            list(steps)

    def test_malformed_json_reports_line(self):
        stream = io.BytesIO(
            json.dumps(self.header_obj()).encode() + b"\n{not json}\n"
        )
        _, steps = read_trace(stream)
        with pytest.raises(MalformedRecord) as err:
            list(steps)
        assert err.value.line_number == 2


class TestPrefixStats:
    def test_point_mass_steps_all_zero(self):
        stats = prefix_stats(point_step(i) for i in range(1, 6))
        assert stats.l == [0.0] * 5
        assert stats.h == [0.0] * 5
        assert stats.lam == [0.0] * 5

    def test_two_uniform_steps(self):
        stats = prefix_stats([uniform_step(1, 0), uniform_step(2, 1)])
        assert stats.final() == (2, 1.0, 1.0, 0.0)

    def test_empty_trace(self):
        with pytest.raises(EmptyTrace):
            prefix_stats([])

    def test_iid_identity_l_equals_cross_entropy(self):
        # token-by-token log-perplexity == H(empirical, alpha) at every prefix
        alpha = validate_distribution([(0, 0.25), (1, 0.75)])
        src = IIDSource(alpha)
        _, steps = sample_trace(src, 400, seed=3)
        stats = prefix_stats(steps)
        tokens = [s.chosen_id for s in steps]
        for n in (1, 7, 100, 400):
            emp = empirical_distribution(tokens[:n], alpha.ids)
            assert abs(stats.l[n - 1] - cross_entropy(emp, alpha)) <= 1e-9

    def test_iid_large_n_band_and_deterministic_h(self):
        src = IIDSource(validate_distribution([(0, 0.25), (1, 0.75)]))
        _, steps = sample_trace(src, 100_000, seed=42)
        stats = prefix_stats(steps)
        _, l, h, lam = stats.final()
        assert abs(l - H_25_75) < 0.02
        assert abs(h - H_25_75) <= 1e-9
        assert abs(lam - LAM_25_75 / math.sqrt(100_000)) <= 1e-9

    def test_streaming_equals_batch_recompute(self):
        src = random_context_tree(3, 2, seed=4)
        _, steps = sample_trace(src, 300, seed=8)
        stats = prefix_stats(steps)
        for n in (1, 2, 50, 299, 300):
            again = prefix_stats(steps[:n])
            assert abs(stats.l[n - 1] - again.l[-1]) <= 1e-12
            assert abs(stats.h[n - 1] - again.h[-1]) <= 1e-12
            assert abs(stats.lam[n - 1] - again.lam[-1]) <= 1e-12

    def test_h_lam_ignore_chosen_tokens(self):
        # permuting chosen tokens within supports leaves h and lam bit-identical
        src = random_context_tree(2, 0, seed=2)
        _, steps = sample_trace(src, 64, seed=1)
        stats = prefix_stats(steps)
        flipped = [
            TraceStep(s.index, 1 - s.chosen_id, s.dist.get(1 - s.chosen_id), s.dist)
            for s in steps
        ]
        other = prefix_stats(flipped)
        assert stats.h == other.h
        assert stats.lam == other.lam


class TestCsv:
    def make_stats(self):
        src = random_context_tree(2, 1, seed=6)
        _, steps = sample_trace(src, 10, seed=6)
        return prefix_stats(steps)

    def test_header_and_roundtrip(self):
        stats = self.make_stats()
        buf = io.StringIO()
        rows = prefix_stats_to_csv(stats, buf)
        assert rows == 10
        buf.seek(0)
        assert buf.readline().strip() == "N,l,h,lam,h_minus_lam,h_plus_lam,h_minus_2lam,h_plus_2lam"
        buf.seek(0)
        back = read_prefix_csv(buf)
        assert back.n == stats.n
        assert back.l == stats.l
        assert back.h == stats.h
        assert back.lam == stats.lam

    def test_band_columns(self):
        stats = self.make_stats()
        buf = io.StringIO()
        prefix_stats_to_csv(stats, buf)
        buf.seek(0)
        buf.readline()
        first = buf.readline().strip().split(",")
        h, lam = float(first[2]), float(first[3])
        assert float(first[4]) == h - lam
        assert float(first[7]) == h + 2 * lam

    def test_stride_keeps_final_row(self):
        stats = self.make_stats()
        buf = io.StringIO()
        rows = prefix_stats_to_csv(stats, buf, stride=4)
        buf.seek(0)
        lines = buf.read().strip().splitlines()
        assert rows == len(lines) - 1
        assert [int(r.split(",")[0]) for r in lines[1:]] == [4, 8, 10]
        buf.seek(0)
        back = read_prefix_csv(buf)
        assert back.final()[0] == 10
