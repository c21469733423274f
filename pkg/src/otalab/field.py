"""Prime-field arithmetic.

Two flavours of every basic operation exist:

* ``fe_*_leaky`` -- branchy code in the style of the legacy bignum layers, each
  call emits one :class:`~otalab.tracer.LeakEvent` into a recorder describing
  which arm of its data-dependent branch executed.
* :func:`fe_ct` -- the same numeric result with no events at all, standing in
  for constant-address code.

Root finding (:func:`rth_roots`) is attacker-side math and never records.
"""

from __future__ import annotations

import random
from typing import TYPE_CHECKING

from .errors import DomainError, UsageError

if TYPE_CHECKING:
    from .tracer import Recorder

SITE_ADD = "mod_add.reduce"
SITE_SUB = "mod_sub.fixup"
SITE_MUL = "mod_mul.csub"
SITE_DIV2 = "div2.odd"

MR_ROUNDS = 64


def is_probable_prime(n: int, rounds: int = MR_ROUNDS) -> bool:
    """Miller-Rabin with ``rounds`` bases drawn from an RNG seeded by ``n``."""
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    rng = random.Random(n)
    for _ in range(rounds):
        x = pow(rng.randrange(2, n - 1), d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class PrimeCtx:
    """An odd prime modulus with its cached Barrett constant and residue classes."""

    __slots__ = ("p", "k", "barrett_mu", "mod4", "mod3")

    def __init__(self, p: int, check: bool = True):
        p = int(p)
        if p <= 3 or p % 2 == 0:
            raise UsageError(f"modulus must be an odd prime > 3, got {p}")
        if check and not is_probable_prime(p):
            raise UsageError(f"modulus {p:#x} is composite")
        self.p = p
        self.k = p.bit_length()
        self.barrett_mu = (1 << (2 * self.k)) // p
        self.mod4 = p % 4
        self.mod3 = p % 3

    def __call__(self, value: int) -> Felem:
        return Felem(int(value) % self.p, self)

    def __eq__(self, other):
        return isinstance(other, PrimeCtx) and other.p == self.p

    def __hash__(self):
        return hash(self.p)

    def __repr__(self):
        return f"PrimeCtx(p={self.p:#x})"

    @property
    def residue_class(self) -> tuple[int, int]:
        return self.mod4, self.mod3


class Felem:
    """An element of GF(p); immutable, ``0 <= value < p``."""

    __slots__ = ("value", "ctx")

    def __init__(self, value: int, ctx: PrimeCtx):
        if not 0 <= value < ctx.p:
            raise UsageError(f"value {value} out of range for {ctx!r}")
        self.value = value
        self.ctx = ctx

    def __eq__(self, other):
        if isinstance(other, Felem):
            return self.value == other.value and self.ctx.p == other.ctx.p
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.ctx.p))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"Felem({self.value:#x})"

    def is_zero(self) -> bool:
        return self.value == 0


def _ctx(a: Felem, b: Felem) -> PrimeCtx:
    if a.ctx.p != b.ctx.p:
        raise UsageError("operands belong to different fields")
    return a.ctx


def _new(value: int, ctx: PrimeCtx) -> Felem:
    # skips the range check; callers guarantee 0 <= value < p
    f = object.__new__(Felem)
    f.value = value
    f.ctx = ctx
    return f


def barrett_reduce(x: int, ctx: PrimeCtx) -> tuple[int, int]:
    """Reduce ``0 <= x < p**2``; returns ``(x mod p, final subtraction count)``."""
    q = ((x >> (ctx.k - 1)) * ctx.barrett_mu) >> (ctx.k + 1)
    r = x - q * ctx.p
    count = 0
    while r >= ctx.p:
        r -= ctx.p
        count += 1
    return r, count


# -- leaky flavour -----------------------------------------------------------

def fe_add_leaky(a: Felem, b: Felem, rec: Recorder | None) -> Felem:
    ctx = _ctx(a, b)
    s = a.value + b.value
    if s >= ctx.p:
        s -= ctx.p
        arm = 1
    else:
        arm = 0
    if rec is not None:
        rec.emit(SITE_ADD, arm)
    return _new(s, ctx)


def fe_sub_leaky(a: Felem, b: Felem, rec: Recorder | None) -> Felem:
    ctx = _ctx(a, b)
    d = a.value - b.value
    if d < 0:
        d += ctx.p
        arm = 1
    else:
        arm = 0
    if rec is not None:
        rec.emit(SITE_SUB, arm)
    return _new(d, ctx)


def fe_mul_leaky(a: Felem, b: Felem, rec: Recorder | None) -> Felem:
    ctx = _ctx(a, b)
    r, count = barrett_reduce(a.value * b.value, ctx)
    if rec is not None:
        rec.emit(SITE_MUL, count)
    return _new(r, ctx)


def fe_div2_leaky(a: Felem, rec: Recorder | None) -> Felem:
    v = a.value
    if v & 1:
        v = (v + a.ctx.p) >> 1
        arm = 1
    else:
        v >>= 1
        arm = 0
    if rec is not None:
        rec.emit(SITE_DIV2, arm)
    return _new(v, a.ctx)


# -- constant-address flavour ------------------------------------------------

def fe_ct(op: str, a: Felem, b: Felem | None = None) -> Felem:
    """Constant-address counterpart of the leaky ops: same value, zero events."""
    if op == "div2":
        p = a.ctx.p
        # (a + (a odd) * p) / 2 without selecting code on the parity
        return _new((a.value + (a.value & 1) * p) >> 1, a.ctx)
    if b is None:
        raise UsageError(f"fe_ct({op!r}) needs two operands")
    ctx = _ctx(a, b)
    if op == "add":
        return _new((a.value + b.value) % ctx.p, ctx)
    if op == "sub":
        return _new((a.value - b.value) % ctx.p, ctx)
    if op == "mul":
        return _new(a.value * b.value % ctx.p, ctx)
    raise UsageError(f"unknown field op {op!r}")


def fe_inv(a: Felem) -> Felem:
    if a.value == 0:
        raise DomainError("zero has no inverse")
    return _new(pow(a.value, a.ctx.p - 2, a.ctx.p), a.ctx)


# -- roots ---------------------------------------------------------------------

def _sqrt_int(v: int, p: int) -> int | None:
    """One square root of v mod p (Tonelli-Shanks), or None for non-residues."""
    v %= p
    if v == 0:
        return 0
    if pow(v, (p - 1) // 2, p) != 1:
        return None
    if p % 4 == 3:
        return pow(v, (p + 1) // 4, p)
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, x = s, pow(z, q, p), pow(v, q, p), pow(v, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c = i, b * b % p
        t, x = t * c % p, x * b % p
    return x


def _cbrt_int(v: int, p: int) -> list[int]:
    """All cube roots of v mod p."""
    v %= p
    if v == 0:
        return [0]
    if p % 3 == 2:
        return [pow(v, (2 * p - 1) // 3, p)]
    if pow(v, (p - 1) // 3, p) != 1:
        return []
    # Adleman-Manders-Miller: p - 1 = 3^s * t with 3 not dividing t
    t, s = p - 1, 0
    while t % 3 == 0:
        t //= 3
        s += 1
    rho = 2
    while pow(rho, (p - 1) // 3, p) == 1:
        rho += 1
    g = pow(rho, t, p)                       # order 3^s
    zeta = pow(g, 3 ** (s - 1), p)           # primitive cube root of unity
    u = pow(3, -1, t) if t > 1 else 0
    x0 = pow(v, u, p)
    e = pow(x0, 3, p) * pow(v, p - 2, p) % p  # lies in <g^3>
    # discrete log of e to base g, digit by digit in base 3
    d = 0
    g_inv = pow(g, p - 2, p)
    for i in range(s):
        c = pow(e * pow(g_inv, d, p) % p, 3 ** (s - 1 - i), p)
        for digit in range(3):
            if pow(zeta, digit, p) == c:
                break
        else:  # pragma: no cover - unreachable for residues
            raise DomainError("cube-root discrete log failed")
        d += digit * 3 ** i
    x = x0 * pow(g_inv, d // 3, p) % p
    return [x, x * zeta % p, x * zeta % p * zeta % p]


def roots_int(v: int, r: int, p: int) -> list[int]:
    """Integer-level :func:`rth_roots`; sorted, duplicates removed."""
    v %= p
    if v == 0:
        return [0]
    if r == 2:
        x = _sqrt_int(v, p)
        return [] if x is None else sorted({x, p - x})
    if r == 3:
        return sorted(set(_cbrt_int(v, p)))
    if r == 4:
        out = set()
        for s in roots_int(v, 2, p):
            out.update(roots_int(s, 2, p))
        return sorted(out)
    raise UsageError(f"unsupported root degree {r}")


def rth_roots(v: Felem, r: int) -> frozenset[Felem]:
    """Every x in GF(p) with x**r == v, for r in {2, 3, 4}."""
    if r not in (2, 3, 4):
        raise UsageError(f"unsupported root degree {r}")
    return frozenset(_new(x, v.ctx) for x in roots_int(v.value, r, v.ctx.p))
