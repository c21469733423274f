"""Vulnerability evaluation: determinism, leakage pmf, subset classification.

The flow is: check that Process leaks deterministically; if so, estimate the
pmf of its leakage over random states and classify it (safe / ideal / easy /
hard); otherwise estimate false-negative and false-positive rates for an
edit-distance matcher.

:func:`enumerate_combinations` classifies every nonempty tracked-region subset
from a single capture pass.  Each subset's traces are hashed in bulk with
numpy (random 64-bit coefficients per run position and region); the hashing is
checked against exact re-encoding in the test suite.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .config import LabConfig
from .curve import JacobianPoint, add, random_state, randomize
from .errors import UsageError
from .scalarmul import process_step
from .tracer import (ChannelTrace, NoiseModel, Recorder, add_noise, edit_distance,
                     encode_channel)

CLASSES = ("safe", "ideal", "easy", "hard")
DEFAULT_CAP = 1 << 20


@dataclass(frozen=True)
class PmfEstimate:
    freq: dict          # outcome -> count
    n: int

    @property
    def cardinality(self) -> int:
        return len(self.freq)

    @property
    def max_bias(self) -> float:
        return max(self.freq.values()) / self.n

    @property
    def collision(self) -> float:
        """Probability that two independent draws give the same outcome."""
        return sum(v * v for v in self.freq.values()) / (self.n * self.n)


def classify_counts(cardinality: int, max_bias: float, n: int, threshold: float = 0.95) -> str:
    if cardinality == 1:
        return "safe"
    if cardinality == n:
        return "ideal"
    return "easy" if max_bias <= threshold else "hard"


def classify(pmf: PmfEstimate, threshold: float = 0.95) -> str:
    return classify_counts(pmf.cardinality, pmf.max_bias, pmf.n, threshold)


# -- sampling ------------------------------------------------------------------------

def sample_inputs(cfg: LabConfig, n: int, seed: int):
    """``n`` random Process inputs ``(state, guess)`` for the configured algorithm."""
    rng = random.Random(seed)
    c = cfg.curve
    out = []
    for _ in range(n):
        R = random_state(c, rng)
        if cfg.algo.algorithm == "ladder":
            S = randomize(c, add(c, R, c.lift(c.G)), rng.randrange(1, c.p))
            out.append(((R, S), rng.randrange(2)))
        else:
            out.append((R, None))
    return out


def capture(cfg: LabConfig, inputs, rng: random.Random | None = None) -> list[tuple]:
    """Raw Process traces for each input (re-randomized first when the victim randomizes)."""
    c = cfg.curve
    traces = []
    for state, guess in inputs:
        if rng is not None and cfg.algo.randomize_init:
            if isinstance(state, JacobianPoint):
                state = randomize(c, state, rng.randrange(1, c.p))
            else:
                state = tuple(randomize(c, s, rng.randrange(1, c.p)) for s in state)
        _, raw = process_step(state, guess, cfg.algo, c, Recorder())
        traces.append(raw)
    return traces


# -- determinism ---------------------------------------------------------------------

@dataclass(frozen=True)
class DeterminismReport:
    points: int
    trials: int
    deterministic: bool
    example: dict | None = None

    def to_json(self) -> dict:
        return {"points": self.points, "trials": self.trials,
                "deterministic": self.deterministic, "first_divergence": self.example}


def check_determinism(cfg: LabConfig, n_points: int = 1000, trials: int = 10,
                      seed: int | None = None) -> DeterminismReport:
    seed = cfg.seed if seed is None else seed
    inputs = sample_inputs(cfg, n_points, seed)
    rng = random.Random(seed + 1)
    tracked = cfg.rmap.all_regions
    for idx, inp in enumerate(inputs):
        first = None
        for t in range(trials):
            raw = capture(cfg, [inp], rng)[0]
            enc = encode_channel(raw, cfg.rmap, cfg.channel, tracked)
            if first is None:
                first = enc
            elif enc != first:
                return DeterminismReport(n_points, trials, False,
                                         {"point": idx, "trial": t, "runs_first": len(first.runs),
                                          "runs_trial": len(enc.runs)})
    return DeterminismReport(n_points, trials, True)


# -- pmf -----------------------------------------------------------------------------

def estimate_pmf(cfg: LabConfig, tracked: Iterable[int] | None = None, n: int = 1000,
                 seed: int | None = None, channel: str | None = None) -> PmfEstimate:
    seed = cfg.seed if seed is None else seed
    tracked = cfg.tracked if tracked is None else frozenset(tracked)
    channel = cfg.channel if channel is None else channel
    raws = capture(cfg, sample_inputs(cfg, n, seed))
    freq = Counter(encode_channel(r, cfg.rmap, channel, tracked).runs for r in raws)
    return PmfEstimate(dict(freq), n)


# -- subset enumeration ------------------------------------------------------------

@dataclass
class CombinationReport:
    n_regions: int
    n_samples: int
    threshold: float
    channels: tuple[str, ...]
    cardinality: dict[str, np.ndarray]      # channel -> array indexed by mask (index 0 unused)
    max_bias: dict[str, np.ndarray]
    collision: dict[str, np.ndarray]
    labels: list[str] = field(default_factory=list)

    @property
    def n_subsets(self) -> int:
        return (1 << self.n_regions) - 1

    def classes(self, channel: str) -> np.ndarray:
        card, bias = self.cardinality[channel], self.max_bias[channel]
        out = np.where(bias <= self.threshold, 2, 3)        # easy / hard
        out = np.where(card == self.n_samples, 1, out)       # ideal
        out = np.where(card == 1, 0, out)                    # safe
        out[0] = -1
        return out

    def insecure(self, channel: str) -> np.ndarray:
        cls = self.classes(channel)
        return (cls == 1) | (cls == 2)

    def roots(self, channel: str) -> list[int]:
        """Insecure masks none of whose one-smaller subsets is insecure."""
        ins = self.insecure(channel)
        masks = np.arange(ins.size)
        has_child = np.zeros_like(ins)
        for b in range(self.n_regions):
            bit = 1 << b
            sel = (masks & bit) != 0
            has_child[sel] |= ins[masks[sel] ^ bit]
        return [int(m) for m in np.nonzero(ins & ~has_child)[0]]

    def size_table(self, channel: str) -> list[dict]:
        """Cardinality statistics per combination size."""
        card = self.cardinality[channel]
        sizes = np.array([bin(m).count("1") for m in range(card.size)])
        rows = []
        for s in range(1, self.n_regions + 1):
            v = card[sizes == s]
            rows.append({"size": s, "subsets": int(v.size), "min": int(v.min()),
                         "max": int(v.max()), "mean": float(v.mean())})
        return rows

    def to_json(self, with_subsets: bool = True) -> dict:
        out = {"n_regions": self.n_regions, "labels": self.labels, "n_samples": self.n_samples,
               "n_subsets": self.n_subsets, "threshold": self.threshold, "channels": {}}
        names = np.array(CLASSES)
        for ch in self.channels:
            cls = self.classes(ch)
            block = {
                "insecure": int(self.insecure(ch).sum()),
                "class_counts": {name: int((cls == i).sum()) for i, name in enumerate(CLASSES)},
                "roots": [{"mask": m, "regions": [self.labels[i] for i in range(self.n_regions)
                                                  if m >> i & 1],
                           "cardinality": int(self.cardinality[ch][m]),
                           "max_bias": float(self.max_bias[ch][m])} for m in self.roots(ch)],
                "size_table": self.size_table(ch),
            }
            if with_subsets:
                block["subsets"] = [
                    {"mask": m, "cardinality": int(self.cardinality[ch][m]),
                     "max_bias": round(float(self.max_bias[ch][m]), 6), "class": str(names[cls[m]])}
                    for m in range(1, self.n_subsets + 1)]
            out["channels"][ch] = block
        return out


def _event_arrays(raws, cfg: LabConfig):
    """Flatten traces into region/weight arrays, each sample led by a separator ``l``."""
    lookup = cfg.rmap.lookup
    sep = cfg.rmap.n_regions
    regs, wts = [], []
    for raw in raws:
        regs.append(sep)
        wts.append(0)
        for ev in raw:
            r, w = lookup(ev)
            regs.append(r)
            wts.append(w)
    return np.array(regs, dtype=np.int16), np.array(wts, dtype=np.uint64)


class SubsetHasher:
    """Bulk 64-bit fingerprints of run-length-encoded traces per region subset.

    A trace restricted to a subset hashes to the sum over its runs of
    ``count * C[pos, region] + D[pos, region]`` (copycat) or ``D[pos, region]``
    (pagetrace), with odd random 64-bit coefficients and wrap-around arithmetic.
    """

    def __init__(self, regs: np.ndarray, wts: np.ndarray, n_regions: int, marker: int,
                 seed: int = 0):
        self.regs, self.wts = regs, wts
        self.l = n_regions
        self.width = n_regions + 1
        seps = np.flatnonzero(regs == n_regions)
        self.n = seps.size
        longest = int(np.diff(np.append(seps, regs.size)).max()) if self.n else 1
        g = np.random.default_rng(seed)
        shape = (longest * self.width,)
        self.C = g.integers(0, 2 ** 63, size=shape, dtype=np.uint64) * np.uint64(2) + np.uint64(1)
        self.D = g.integers(0, 2 ** 63, size=shape, dtype=np.uint64) * np.uint64(2) + np.uint64(1)
        # separators contribute nothing
        self.C[n_regions::self.width] = 0
        self.D[n_regions::self.width] = 0
        self.always_start = np.zeros(self.width, dtype=bool)
        self.always_start[[marker, n_regions]] = True

    def hashes(self, mask: int) -> tuple[np.ndarray, np.ndarray]:
        """``(copycat, pagetrace)`` fingerprints, one per sample."""
        sel = np.zeros(self.width, dtype=bool)
        sel[[i for i in range(self.l) if mask >> i & 1]] = True
        sel[self.l] = True
        idx = np.flatnonzero(sel[self.regs])
        rk = self.regs[idx]
        start = np.empty(rk.size, dtype=bool)
        start[0] = True
        np.not_equal(rk[1:], rk[:-1], out=start[1:])
        start |= self.always_start[rk]
        gid = np.cumsum(start)
        seg = np.flatnonzero(rk == self.l)
        lengths = np.diff(np.append(seg, rk.size))
        pos = gid - np.repeat(gid[seg], lengths)
        flat = pos * self.width + rk
        cD = np.where(start, self.D[flat], np.uint64(0))
        page = np.add.reduceat(cD, seg)
        copy = np.add.reduceat(self.wts[idx] * self.C[flat] + cD, seg)
        return copy, page


def _stats(h: np.ndarray, mult: np.ndarray) -> tuple[int, float, float]:
    """Cardinality, max bias and collision of hashes ``h`` weighted by ``mult``."""
    _, inv = np.unique(h, return_inverse=True)
    counts = np.bincount(inv.ravel(), weights=mult)
    n = mult.sum()
    return counts.size, counts.max() / n, float((counts ** 2).sum() / (n * n))


_HASHER: SubsetHasher | None = None
_MULT: np.ndarray | None = None


def _worker_init(regs, wts, l, marker, seed, mult):
    global _HASHER, _MULT
    _HASHER = SubsetHasher(regs, wts, l, marker, seed)
    _MULT = mult


def _worker_range(bounds):
    lo, hi = bounds
    out = np.empty((hi - lo, 6))
    for i, mask in enumerate(range(lo, hi)):
        copy, page = _HASHER.hashes(mask)
        out[i, :3] = _stats(copy, _MULT)
        out[i, 3:] = _stats(page, _MULT)
    return lo, hi, out


def _scatter(vals, lo, hi, channels, card, bias, coll):
    for ch, off in (("copycat", 0), ("pagetrace", 3)):
        if ch in card:
            card[ch][lo:hi] = vals[:, off]
            bias[ch][lo:hi] = vals[:, off + 1]
            coll[ch][lo:hi] = vals[:, off + 2]


def enumerate_combinations(cfg: LabConfig, n: int = 1000, cap: int = DEFAULT_CAP,
                           seed: int | None = None,
                           channels: tuple[str, ...] = ("copycat", "pagetrace"),
                           jobs: int = 1) -> CombinationReport:
    """Classify every nonempty subset of the map's regions from one capture pass."""
    l = cfg.rmap.n_regions
    if (1 << l) - 1 > cap:
        raise UsageError(f"{(1 << l) - 1} subsets exceed the cap of {cap}; "
                         f"use a region map with at most {cap.bit_length() - 1} regions")
    bad = set(channels) - {"copycat", "pagetrace"}
    if bad:
        raise UsageError(f"subset enumeration needs region channels, got {sorted(bad)}")
    seed = cfg.seed if seed is None else seed
    raws = capture(cfg, sample_inputs(cfg, n, seed))
    # identical captures hash identically under every subset; hash each once
    uniq = Counter(raws)
    regs, wts = _event_arrays(list(uniq), cfg)
    mult = np.fromiter(uniq.values(), dtype=np.float64, count=len(uniq))
    size = 1 << l
    card = {ch: np.zeros(size, dtype=np.int64) for ch in channels}
    bias = {ch: np.zeros(size, dtype=np.float64) for ch in channels}
    coll = {ch: np.zeros(size, dtype=np.float64) for ch in channels}
    args = (regs, wts, l, cfg.rmap.marker_region, seed, mult)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        bounds = np.linspace(1, size, jobs * 4 + 1, dtype=np.int64)
        with ProcessPoolExecutor(jobs, initializer=_worker_init, initargs=args) as pool:
            parts = pool.map(_worker_range, zip(bounds[:-1].tolist(), bounds[1:].tolist()))
            for lo, hi, vals in parts:
                _scatter(vals, lo, hi, channels, card, bias, coll)
    else:
        _worker_init(*args)
        _scatter(_worker_range((1, size))[2], 1, size, channels, card, bias, coll)
    return CombinationReport(l, n, cfg.bias_threshold, tuple(channels), card, bias, coll,
                             list(cfg.rmap.labels))


def exact_subset_stats(cfg: LabConfig, mask: int, n: int = 1000, seed: int | None = None,
                       channel: str = "copycat") -> tuple[int, float]:
    """Slow reference for one subset: full re-encoding, no hashing."""
    tracked = [i for i in range(cfg.rmap.n_regions) if mask >> i & 1]
    pmf = estimate_pmf(cfg, tracked, n, seed, channel)
    return pmf.cardinality, pmf.max_bias


# -- noisy branch ------------------------------------------------------------------

@dataclass(frozen=True)
class FnFpEstimate:
    fn_rate: float
    fp_rate: float
    trials: int
    tau: int
    fn_count: int
    fp_count: int

    def to_json(self) -> dict:
        return {"pr_fn": self.fn_rate, "pr_fp": self.fp_rate, "trials": self.trials,
                "tau": self.tau, "fn_count": self.fn_count, "fp_count": self.fp_count}


def _noisy_pairs(cfg: LabConfig, noise: NoiseModel, trials: int, seed: int):
    """(noisy target, clean template, clean decoy template) per trial."""
    inputs = sample_inputs(cfg, 2 * trials, seed)
    raws = capture(cfg, inputs)
    rng = noise.rng(seed)
    enc = [encode_channel(r, cfg.rmap, cfg.channel, cfg.tracked) for r in raws]
    return [(add_noise(enc[2 * i], noise, rng, cfg.rmap.marker_region), enc[2 * i], enc[2 * i + 1]) for i in range(trials)]


def calibrate_tau(cfg: LabConfig, noise: NoiseModel, trials: int = 10_000,
                  seed: int | None = None) -> int:
    """Smallest threshold with zero false negatives over ``trials`` noisy captures."""
    seed = cfg.seed if seed is None else seed
    return max(edit_distance(t, clean) for t, clean, _ in _noisy_pairs(cfg, noise, trials, seed))


def estimate_fn_fp(cfg: LabConfig, noise: NoiseModel, tau: float, trials: int = 10_000,
                   seed: int | None = None) -> FnFpEstimate:
    seed = cfg.seed if seed is None else seed
    fn = fp = 0
    cap = None if tau == float("inf") else int(tau)
    for target, clean, decoy in _noisy_pairs(cfg, noise, trials, seed):
        if cap is None:
            fp += 1
            continue
        if edit_distance(target, clean, cap=cap) > cap:
            fn += 1
        if edit_distance(target, decoy, cap=cap) <= cap:
            fp += 1
    return FnFpEstimate(fn / trials, fp / trials, trials, -1 if cap is None else cap, fn, fp)
