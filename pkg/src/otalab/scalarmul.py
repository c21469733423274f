"""The three scalar-multiplication shapes, split into Encode/Init/Select/Process/Finalize.

* ``dbl_add_always``: R starts at G (top bit forced to 1); every iteration
  computes D = 2R and T = D + G, then keeps one of them with a constant-address
  conditional copy.
* ``comb``: radix-2^w digits with a table T[j] = jG; R starts at T[K1] and every
  iteration is w doublings followed by R = R + T[K_i].  Process is the doubling
  chain only.
* ``ladder``: Montgomery ladder on the pair (R, S = R + G) with a
  constant-address swap around a full addition and a doubling.

Every Process starts with an ``iter.begin`` marker event.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .curve import (AffinePoint, CurveParams, JacobianPoint, add, arith_for, dbl, madd,
                    randomize, scalar_mul_ct, to_affine)
from .errors import UsageError
from .tracer import RawTrace, Recorder

ALGORITHMS = ("dbl_add_always", "comb", "ladder")


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "ladder"
    bit_length: int = 256
    window: int = 5
    randomize_init: bool = False
    randomize_final: bool = False
    constant_address: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.bit_length < 2:
            raise UsageError("bit_length must be at least 2")
        if not 2 <= self.window <= 8:
            raise UsageError(f"comb window must be in [2, 8], got {self.window}")

    @property
    def radix(self) -> int:
        return 1 << self.window if self.algorithm == "comb" else 2

    @property
    def n_digits(self) -> int:
        if self.algorithm == "comb":
            return -(-self.bit_length // self.window)
        return self.bit_length

    @property
    def n_iterations(self) -> int:
        """Number of Process executions (and markers) in one run."""
        return self.n_digits - 1

    def to_json(self) -> dict:
        return {"algorithm": self.algorithm, "bit_length": self.bit_length, "window": self.window,
                "randomize_init": self.randomize_init, "randomize_final": self.randomize_final,
                "constant_address": self.constant_address}

    @classmethod
    def from_json(cls, d: dict) -> AlgoConfig:
        known = {"algorithm", "bit_length", "window", "randomize_init", "randomize_final",
                 "constant_address"}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown algorithm fields {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class EncodedScalar:
    digits: tuple[int, ...]
    radix: int


@dataclass(frozen=True)
class RunResult:
    output: AffinePoint
    final_state: JacobianPoint
    trace: RawTrace


def encode(k: int, cfg: AlgoConfig, n: int | None = None) -> EncodedScalar:
    k = int(k)
    if k <= 0 or (n is not None and k >= n):
        raise UsageError("scalar must satisfy 0 < k < n")
    if k >> cfg.bit_length:
        raise UsageError(f"scalar wider than {cfg.bit_length} bits")
    if cfg.algorithm == "comb":
        w, nd = cfg.window, cfg.n_digits
        mask = (1 << w) - 1
        digits = tuple((k >> (w * (nd - 1 - i))) & mask for i in range(nd))
        return EncodedScalar(digits, 1 << w)
    if not (k >> (cfg.bit_length - 1)) & 1:
        raise UsageError(f"{cfg.algorithm} needs bit {cfg.bit_length - 1} of the scalar set")
    return EncodedScalar(tuple((k >> i) & 1 for i in range(cfg.bit_length - 1, -1, -1)), 2)


def decode(K: EncodedScalar | Sequence[int], radix: int | None = None) -> int:
    if isinstance(K, EncodedScalar):
        digits, radix = K.digits, K.radix
    else:
        digits = K
    k = 0
    for d in digits:
        if not 0 <= d < radix:
            raise UsageError(f"digit {d} outside radix {radix}")
        k = k * radix + d
    return k


def random_scalar(cfg: AlgoConfig, n: int, rng: random.Random) -> int:
    """Uniform scalar satisfying the encode preconditions."""
    hi = min(n, 1 << cfg.bit_length)
    lo = 1 << (cfg.bit_length - 1) if cfg.algorithm != "comb" else 1
    if lo >= hi:
        raise UsageError("no valid scalars for this bit length and group order")
    return rng.randrange(lo, hi)


def comb_table(c: CurveParams, window: int) -> tuple[AffinePoint, ...]:
    return tuple(scalar_mul_ct(c, j, c.G) for j in range(1 << window))


# -- Process ---------------------------------------------------------------------

def process_step(state, guess, cfg: AlgoConfig, c: CurveParams, rec: Recorder | None):
    """Run one Process and return ``(outputs, raw_trace)``.

    * dbl_add_always: ``state`` is R; outputs are ``(D, T)``; ``guess`` unused.
    * comb: ``state`` is R; output is ``2^w R``; ``guess`` unused.
    * ladder: ``state`` is ``(R, S)``; output is the successor pair for bit ``guess``.
    """
    start = len(rec) if rec is not None else 0
    F = arith_for(rec, cfg.constant_address)
    if rec is not None:
        rec.marker()
    alg = cfg.algorithm
    if alg == "dbl_add_always":
        D = dbl(c, state, F)
        out = (D, madd(c, D, c.G, F))
    elif alg == "comb":
        out = state
        for _ in range(cfg.window):
            out = dbl(c, out, F)
    else:
        R, S = state
        # constant-address swap: same code whatever the bit
        if guess:
            R, S = S, R
        S = add(c, R, S, F)
        R = dbl(c, R, F)
        if guess:
            R, S = S, R
        out = (R, S)
    return out, (rec.snapshot(start) if rec is not None else ())


def process_template(state, guess, cfg: AlgoConfig, c: CurveParams, rec: Recorder | None = None) -> RawTrace:
    rec = Recorder() if rec is None else rec
    return process_step(state, guess, cfg, c, rec)[1]


def successor(outputs, digit: int, cfg: AlgoConfig, c: CurveParams,
              table: Sequence[AffinePoint] | None = None, F=None):
    """The state the victim keeps after absorbing ``digit`` given Process outputs."""
    alg = cfg.algorithm
    if alg == "dbl_add_always":
        return outputs[1] if digit else outputs[0]
    if alg == "comb":
        F = arith_for(None, cfg.constant_address) if F is None else F
        return madd(c, outputs, table[digit], F)
    return outputs


# -- victim --------------------------------------------------------------------

def run(k: int, cfg: AlgoConfig, c: CurveParams, rec: Recorder | None = None,
        rng: random.Random | int | None = 0, table: Sequence[AffinePoint] | None = None) -> RunResult:
    """One full scalar multiplication on the instrumented stack."""
    K = encode(k, cfg, c.n)
    rec = Recorder() if rec is None else rec
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    start = len(rec)
    F = arith_for(rec, cfg.constant_address)
    digits = K.digits
    alg = cfg.algorithm

    if alg == "comb":
        table = comb_table(c, cfg.window) if table is None else table
        R = c.lift(table[digits[0]])       # Select over the whole table
    else:
        R = c.lift(c.G)
    if cfg.randomize_init:
        R = randomize(c, R, rng.randrange(1, c.p))

    if alg == "dbl_add_always":
        for d in digits[1:]:
            (D, T), _ = process_step(R, None, cfg, c, rec)
            R = T if d else D              # cond_assign
    elif alg == "comb":
        for d in digits[1:]:
            D, _ = process_step(R, None, cfg, c, rec)
            R = madd(c, D, table[d], F)
    else:
        S = dbl(c, R, F)
        for d in digits[1:]:
            (R, S), _ = process_step((R, S), d, cfg, c, rec)

    if cfg.randomize_final:
        R = randomize(c, R, rng.randrange(1, c.p))
    return RunResult(to_affine(c, R), R, rec.snapshot(start))


def initial_state(cfg: AlgoConfig, c: CurveParams, first_digit: int,
                  table: Sequence[AffinePoint] | None = None):
    """Unrandomized state after Init and the first digit."""
    if cfg.algorithm == "comb":
        table = comb_table(c, cfg.window) if table is None else table
        return c.lift(table[first_digit])
    R = c.lift(c.G)
    if cfg.algorithm == "ladder":
        return R, dbl(c, R, arith_for(None, cfg.constant_address))
    return R
