import math
import random

import pytest
from hypothesis import given, strategies as st

from otalab.errors import FormatError, UsageError
from otalab.scalarmul import AlgoConfig, run
from otalab.tracer import (ChannelTrace, LeakEvent, NoiseModel, RegionMap, add_noise, bundled_map,
                           dumps_trace, edit_distance, encode_channel, loads_trace, parse_compact,
                           render_compact, restrict, split_iterations, strip_counts)

TOY_MAP = RegionMap("toy", ["iter", "A", "B"], {"s1": 1, "s2": 1, "s3": 2},
                    weights={"s1": 2, "s2": 1, "s3": 3})
RAW = (LeakEvent("s1", 0), LeakEvent("s2", 0), LeakEvent("s3", 0))


@pytest.fixture(scope="module")
def ladder_raw(c256):
    k = random.Random(8).randrange(1 << 255, c256.n)
    return run(k, AlgoConfig("ladder", 256), c256).trace


def runs_strategy(n_regions=17, max_len=40):
    return st.lists(st.tuples(st.integers(0, n_regions - 1), st.integers(1, 9)), max_size=max_len)


class TestEncode:
    def test_copycat_sums_runs(self):
        assert encode_channel(RAW, TOY_MAP, "copycat").runs == ((1, 3), (2, 3))

    def test_pagetrace_strips(self):
        assert [r for r, _ in encode_channel(RAW, TOY_MAP, "pagetrace").runs] == [1, 2]

    def test_filter(self):
        assert encode_channel(RAW, TOY_MAP, "copycat", {2}).runs == ((2, 3),)

    def test_unmapped_site(self):
        with pytest.raises(UsageError):
            encode_channel([LeakEvent("nope", 0)], TOY_MAP)

    def test_markers_never_merge(self):
        raw = [LeakEvent("iter.begin", 0, "iter")] * 3
        assert encode_channel(raw, TOY_MAP, "copycat").runs == ((0, 1),) * 3

    def test_pure(self, ladder_raw):
        m = bundled_map("pages17")
        assert encode_channel(ladder_raw, m) == encode_channel(ladder_raw, m)

    @given(st.integers(1, (1 << 17) - 1))
    def test_subset_consistency(self, ladder_raw, mask):
        m = bundled_map("pages17")
        keep = {i for i in range(17) if mask >> i & 1}
        full = encode_channel(ladder_raw, m, "copycat")
        assert encode_channel(ladder_raw, m, "copycat", keep) == restrict(full, keep)
        page = encode_channel(ladder_raw, m, "pagetrace", keep)
        assert strip_counts(restrict(full, keep)) == page

    def test_branch_keeps_sites(self, ladder_raw):
        t = encode_channel(ladder_raw, bundled_map("split-fine"), "branch")
        assert len(t) == len(ladder_raw)
        assert t.runs[0] == (ladder_raw[0].site, ladder_raw[0].payload)


class TestMaps:
    @pytest.mark.parametrize("name,size", [("per-function", 6), ("split-fine", 14), ("pages17", 17)])
    def test_sizes(self, name, size):
        assert bundled_map(name).n_regions == size

    def test_limit(self):
        with pytest.raises(UsageError):
            RegionMap("big", [str(i) for i in range(21)], {})

    def test_json_roundtrip(self):
        m = bundled_map("pages17")
        m2 = RegionMap.from_json(m.to_json())
        assert m2.labels == m.labels and m2.assign == m.assign

    def test_unknown(self):
        with pytest.raises(UsageError):
            bundled_map("pages99")


class TestSplit:
    def test_ladder_slices(self, ladder_raw):
        t = encode_channel(ladder_raw, bundled_map("pages17"))
        slices = split_iterations(t)
        assert len(slices) == 255
        first = next(i for i, r in enumerate(t.runs) if r[0] == 0)
        assert t.runs[:first] + sum((s.runs for s in slices), ()) == t.runs

    def test_branch_split(self, ladder_raw):
        t = encode_channel(ladder_raw, bundled_map("split-fine"), "branch")
        assert len(split_iterations(t)) == 255

    def test_no_markers(self):
        with pytest.raises(FormatError):
            split_iterations(ChannelTrace("copycat", 3, ((1, 2),)))


class TestText:
    def test_compact_examples(self):
        assert render_compact(ChannelTrace("pagetrace", 17, ((0, 1), (3, 1), (0, 1)))) == ".D."
        assert render_compact(ChannelTrace("copycat", 17, ((2, 17),))) == "A:17"

    @given(runs_strategy())
    def test_compact_roundtrip(self, runs):
        t = ChannelTrace("copycat", 17, tuple(runs))
        assert parse_compact(render_compact(t), "copycat", 17) == t

    @given(runs_strategy(), st.booleans())
    def test_file_roundtrip_bytes(self, runs, compact):
        t = ChannelTrace("copycat", 17, tuple(runs))
        text = dumps_trace(t, compact=compact)
        assert loads_trace(text) == t and dumps_trace(loads_trace(text), compact=compact) == text

    def test_branch_file(self):
        t = ChannelTrace("branch", 14, (("iter.begin", 0), ("mod_mul.csub", 2)))
        assert loads_trace(dumps_trace(t)) == t

    @pytest.mark.parametrize("text", ["", "#channel copycat\n", "#channel foo regions 3\n",
                                      "#channel copycat regions 3\nr7 1\n",
                                      "#channel copycat regions 3\nx1 1\n"])
    def test_bad_files(self, text):
        with pytest.raises(FormatError):
            loads_trace(text)


class TestNoise:
    def test_zero_noise(self):
        t = ChannelTrace("copycat", 3, ((1, 2), (2, 1)))
        assert add_noise(t, NoiseModel()) == t

    def test_drop_all(self):
        t = ChannelTrace("copycat", 3, ((1, 2), (2, 1)))
        assert add_noise(t, NoiseModel(drop=1.0)).runs == ()

    @pytest.mark.parametrize("drop,dup", [(0.01, 0.0), (0.1, 0.05), (0.3, 0.2)])
    def test_expected_length(self, drop, dup):
        length, trials = 100, 10_000
        t = ChannelTrace("copycat", 3, tuple((1 + i % 2, 1) for i in range(length)))
        m = NoiseModel(drop, dup, seed=3)
        rng = m.rng()
        total = sum(len(add_noise(t, m, rng)) for _ in range(trials))
        q = 1 - drop
        mean = q * (1 + dup)
        var = q * (1 + 3 * dup) - mean ** 2
        sigma = math.sqrt(trials * length * var)
        assert abs(total - trials * length * mean) <= 3 * sigma

    def test_bad_probability(self):
        with pytest.raises(UsageError):
            NoiseModel(drop=1.5)


class TestEditDistance:
    @given(runs_strategy())
    def test_self_zero(self, runs):
        assert edit_distance(runs, runs) == 0

    @given(runs_strategy().filter(bool), st.data())
    def test_one_removed(self, runs, data):
        i = data.draw(st.integers(0, len(runs) - 1))
        assert edit_distance(runs, runs[:i] + runs[i + 1:]) == 1

    @given(runs_strategy(max_len=15), runs_strategy(max_len=15))
    def test_symmetric(self, a, b):
        assert edit_distance(a, b) == edit_distance(b, a)

    @given(runs_strategy(max_len=15), runs_strategy(max_len=15), st.integers(0, 6))
    def test_cap(self, a, b, cap):
        d = edit_distance(a, b)
        assert edit_distance(a, b, cap=cap) == (d if d <= cap else cap + 1)
