import random

import numpy as np
import pytest

from otalab.errors import UsageError
from otalab.evaluator import (PmfEstimate, calibrate_tau, check_determinism, classify,
                              classify_counts, enumerate_combinations, estimate_fn_fp, estimate_pmf,
                              exact_subset_stats)
from otalab.field import PrimeCtx, fe_div2_leaky
from otalab.tracer import NoiseModel, Recorder

from conftest import P256_P, make_cfg


@pytest.fixture(scope="module")
def split_report():
    return enumerate_combinations(make_cfg("ladder", region_map="split-fine"), 300)


@pytest.fixture(scope="module")
def const_report():
    return enumerate_combinations(make_cfg("ladder", region_map="split-fine",
                                           constant_address=True), 100)


def supersets_monotone(card, n_regions):
    masks = np.arange(card.size)
    for b in range(n_regions):
        lo = masks[(masks & (1 << b)) == 0][1:]
        if not np.all(card[lo | (1 << b)] >= card[lo]):
            return False
    return True


class TestClassify:
    @pytest.mark.parametrize("card,bias,n,expected", [
        (1, 1.0, 1000, "safe"),
        (1000, 0.001, 1000, "ideal"),
        (2, 0.62, 1000, "easy"),
        (2, 0.99, 1000, "hard"),
    ])
    def test_examples(self, card, bias, n, expected):
        assert classify_counts(card, bias, n) == expected

    def test_pmf_stats(self):
        pmf = PmfEstimate({"a": 62, "b": 38}, 100)
        assert pmf.cardinality == 2 and pmf.max_bias == 0.62
        assert pmf.collision == pytest.approx(0.62 ** 2 + 0.38 ** 2)
        assert classify(pmf) == "easy" and classify(pmf, threshold=0.6) == "hard"


class TestDeterminism:
    def test_leaky_deterministic(self):
        assert check_determinism(make_cfg("dbl_add_always"), 100, 10).deterministic

    def test_randomized_not(self):
        rep = check_determinism(make_cfg("dbl_add_always", randomize_init=True), 20, 10)
        assert not rep.deterministic and rep.example is not None

    def test_single_trial(self):
        assert check_determinism(make_cfg("ladder", randomize_init=True), 20, 1).deterministic


class TestPmf:
    def test_constant_address_safe(self):
        cfg = make_cfg("ladder", constant_address=True)
        assert estimate_pmf(cfg, n=200).cardinality == 1

    def test_split_fine_ideal(self):
        cfg = make_cfg("ladder", region_map="split-fine")
        pmf = estimate_pmf(cfg, n=1000)
        assert pmf.cardinality == 1000 and classify(pmf) == "ideal"

    def test_div2_parity(self):
        F = PrimeCtx(P256_P)
        rng = random.Random(0)
        freq = {}
        for _ in range(10_000):
            rec = Recorder()
            fe_div2_leaky(F(rng.randrange(P256_P)), rec)
            key = rec.events[0].payload
            freq[key] = freq.get(key, 0) + 1
        pmf = PmfEstimate(freq, 10_000)
        # binomial(1e4, 1/2): 4 sigma = 0.02
        assert pmf.cardinality == 2 and abs(pmf.max_bias - 0.5) < 0.02

    def test_reproducible(self):
        cfg = make_cfg("dbl_add_always", region_map="per-function")
        assert estimate_pmf(cfg, n=200, seed=4) == estimate_pmf(cfg, n=200, seed=4)


class TestEnumeration:
    def test_subset_count(self, split_report):
        assert split_report.n_subsets == (1 << 14) - 1
        assert split_report.cardinality["copycat"].size == 1 << 14

    def test_insecure_found(self, split_report):
        assert split_report.insecure("copycat").sum() > 0

    def test_copycat_dominates_pagetrace(self, split_report):
        cc, pt = split_report.cardinality["copycat"], split_report.cardinality["pagetrace"]
        assert np.all(cc[1:] >= pt[1:])

    @pytest.mark.parametrize("channel", ["copycat", "pagetrace"])
    def test_monotone(self, split_report, channel):
        assert supersets_monotone(split_report.cardinality[channel], 14)

    @pytest.mark.parametrize("channel", ["copycat", "pagetrace"])
    def test_roots_minimal(self, split_report, channel):
        ins = split_report.insecure(channel)
        roots = split_report.roots(channel)
        assert roots
        for m in roots:
            assert ins[m]
            for b in range(14):
                if m >> b & 1 and m != 1 << b:
                    assert not ins[m ^ (1 << b)]

    def test_constant_address_all_safe(self, const_report):
        for ch in ("copycat", "pagetrace"):
            assert np.all(const_report.cardinality[ch][1:] == 1)
            assert const_report.roots(ch) == []

    def test_dual_route(self):
        # vectorised hashing agrees with exact per-subset re-encoding
        cfg = make_cfg("dbl_add_always", region_map="pages17")
        rep = enumerate_combinations(cfg, 150, seed=2)
        rng = random.Random(1)
        for mask in rng.sample(range(1, 1 << 17), 25):
            for ch in ("copycat", "pagetrace"):
                card, bias = exact_subset_stats(cfg, mask, 150, seed=2, channel=ch)
                assert rep.cardinality[ch][mask] == card
                assert rep.max_bias[ch][mask] == pytest.approx(bias)

    def test_parallel_matches_serial(self):
        cfg = make_cfg("ladder", region_map="per-function")
        a = enumerate_combinations(cfg, 200, jobs=1)
        b = enumerate_combinations(cfg, 200, jobs=3)
        for ch in a.channels:
            assert np.array_equal(a.cardinality[ch], b.cardinality[ch])
            assert np.array_equal(a.max_bias[ch], b.max_bias[ch])

    def test_cap(self):
        with pytest.raises(UsageError):
            enumerate_combinations(make_cfg("ladder"), 10, cap=1000)

    def test_report_json(self, split_report):
        d = split_report.to_json(with_subsets=False)
        assert d["n_subsets"] == 16383 and "subsets" not in d["channels"]["copycat"]


class TestNoise:
    def test_exact_no_false_negatives(self):
        cfg = make_cfg("dbl_add_always", region_map="split-fine", channel="branch")
        est = estimate_fn_fp(cfg, NoiseModel(), 0, trials=300)
        assert est.fn_rate == 0.0

    def test_infinite_tau(self):
        cfg = make_cfg("dbl_add_always", region_map="split-fine", channel="branch")
        assert estimate_fn_fp(cfg, NoiseModel(0.01), float("inf"), trials=50).fp_rate == 1.0

    def test_calibrated_tau(self):
        cfg = make_cfg("dbl_add_always", region_map="split-fine", channel="branch")
        noise = NoiseModel(0.01, seed=2)
        tau = calibrate_tau(cfg, noise, 300)
        est = estimate_fn_fp(cfg, noise, tau, trials=300)
        assert est.fn_rate == 0.0 and est.tau == tau
