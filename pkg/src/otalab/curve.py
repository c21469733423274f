"""Short-Weierstrass group law in Jacobian coordinates, and its inverses.

The doubling and mixed-addition formulas are written once against a tiny
arithmetic backend so the leaky victim code and the silent constant-address
code share the exact same operation order.  That order determines the traces,
so it must not be rearranged.

Attacker-side helpers (point halving, Process inversion via modular roots,
constant-address scalar multiplication) never record events.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

from .errors import DomainError, UsageError
from .field import (Felem, PrimeCtx, _new, fe_add_leaky, fe_ct, fe_inv, fe_mul_leaky,
                    fe_sub_leaky, is_probable_prime, roots_int)

if TYPE_CHECKING:
    from .tracer import Recorder

SITE_MADD_SPECIAL = "madd.special"
SITE_ADD_SPECIAL = "add.special"

# special-case arms shared by madd and the full addition
ARM_P_IDENTITY = 1
ARM_DOUBLING = 2
ARM_INVERSE = 3
ARM_Q_IDENTITY = 4


@dataclass(frozen=True, slots=True)
class AffinePoint:
    x: Felem | None
    y: Felem | None

    @property
    def is_identity(self) -> bool:
        return self.x is None

    def __repr__(self):
        if self.x is None:
            return "AffinePoint(O)"
        return f"AffinePoint({self.x.value:#x}, {self.y.value:#x})"


AFFINE_IDENTITY = AffinePoint(None, None)


@dataclass(frozen=True, slots=True)
class JacobianPoint:
    """Projective point (X/Z^2, Y/Z^3); any Z = 0 triple is the identity.

    Equality is componentwise, which is what the attack needs: two
    representatives of the same affine point are different states.
    """

    X: Felem
    Y: Felem
    Z: Felem

    @property
    def is_identity(self) -> bool:
        return self.Z.value == 0

    def coords(self) -> tuple[int, int, int]:
        return self.X.value, self.Y.value, self.Z.value

    def __repr__(self):
        return f"JacobianPoint({self.X.value:#x}, {self.Y.value:#x}, {self.Z.value:#x})"


@dataclass(frozen=True)
class CurveParams:
    """y^2 = x^3 + a x + b over GF(p) with a prime-order generator G (cofactor 1)."""

    ctx: PrimeCtx
    a: Felem
    b: Felem
    n: int
    G: AffinePoint
    name: str = "custom"

    @property
    def p(self) -> int:
        return self.ctx.p

    def identity(self) -> JacobianPoint:
        one, zero = _new(1, self.ctx), _new(0, self.ctx)
        return JacobianPoint(one, one, zero)

    def lift(self, P: AffinePoint) -> JacobianPoint:
        if P.is_identity:
            return self.identity()
        return JacobianPoint(P.x, P.y, _new(1, self.ctx))

    def affine(self, x: int, y: int) -> AffinePoint:
        return AffinePoint(self.ctx(x), self.ctx(y))

    def to_json(self) -> dict:
        return {"name": self.name, "p": hex(self.p), "a": hex(self.a.value), "b": hex(self.b.value),
                "n": hex(self.n), "Gx": hex(self.G.x.value), "Gy": hex(self.G.y.value)}


def make_curve(p: int, a: int, b: int, n: int, gx: int, gy: int, name: str = "custom",
               check: bool = True) -> CurveParams:
    """Build and validate curve parameters."""
    ctx = PrimeCtx(p, check=check)
    c = CurveParams(ctx, ctx(a), ctx(b), int(n), AffinePoint(ctx(gx), ctx(gy)), name)
    if check:
        if (4 * pow(a, 3, p) + 27 * b * b) % p == 0:
            raise UsageError("singular curve: 4a^3 + 27b^2 = 0")
        if n < 3 or n % 2 == 0 or not is_probable_prime(n):
            raise UsageError(f"group order {n:#x} must be an odd prime")
        if not is_on_curve(c, c.G):
            raise UsageError("generator is not on the curve")
        if not scalar_mul_ct(c, n, c.G).is_identity:
            raise UsageError("n * G is not the identity")
    return c


# SEC 2 v2, section 2.4.2 (secp256r1)
_P256 = dict(
    p=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF,
    a=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFC,
    b=0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B,
    n=0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551,
    gx=0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
    gy=0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
)


@lru_cache(maxsize=None)
def p256() -> CurveParams:
    return make_curve(name="p256", **_P256)


def is_on_curve(c: CurveParams, P: AffinePoint | JacobianPoint) -> bool:
    if isinstance(P, JacobianPoint):
        if P.is_identity:
            return True
        P = to_affine(c, P)
    if P.is_identity:
        return True
    p = c.p
    x, y = P.x.value, P.y.value
    return (y * y - (x * x * x + c.a.value * x + c.b.value)) % p == 0


def to_affine(c: CurveParams, P: JacobianPoint) -> AffinePoint:
    if P.is_identity:
        return AFFINE_IDENTITY
    zi = fe_inv(P.Z)
    p = c.p
    zi2 = zi.value * zi.value % p
    return AffinePoint(_new(P.X.value * zi2 % p, c.ctx), _new(P.Y.value * zi2 * zi.value % p, c.ctx))


def negate(c: CurveParams, P: AffinePoint) -> AffinePoint:
    if P.is_identity:
        return P
    return AffinePoint(P.x, _new((-P.y.value) % c.p, c.ctx))


def randomize(c: CurveParams, P: JacobianPoint, lam: Felem | int) -> JacobianPoint:
    """Rescale to (lam^2 X, lam^3 Y, lam Z); the affine value is unchanged."""
    lam = lam.value if isinstance(lam, Felem) else int(lam) % c.p
    if lam == 0:
        raise DomainError("randomization factor must be nonzero")
    p = c.p
    l2 = lam * lam % p
    return JacobianPoint(_new(P.X.value * l2 % p, c.ctx), _new(P.Y.value * l2 * lam % p, c.ctx),
                         _new(P.Z.value * lam % p, c.ctx))


def random_point(c: CurveParams, rng: random.Random) -> AffinePoint:
    """Uniform non-identity point (random x, then a random square-root sign)."""
    p = c.p
    while True:
        x = rng.randrange(p)
        ys = roots_int(x * x * x + c.a.value * x + c.b.value, 2, p)
        if not ys or ys == [0]:
            continue
        # each x with a nonzero residue carries two points; pick either
        return c.affine(x, ys[rng.randrange(len(ys))])


def random_state(c: CurveParams, rng: random.Random) -> JacobianPoint:
    """Random point lifted with a uniformly random nonzero Z."""
    return randomize(c, c.lift(random_point(c, rng)), rng.randrange(1, c.p))


# -- arithmetic backends -----------------------------------------------------------

class LeakyArith:
    """Field ops that record into ``rec`` (which may be None for silent replay)."""

    __slots__ = ("rec",)
    leaky = True

    def __init__(self, rec: Recorder | None):
        self.rec = rec

    def add(self, a, b):
        return fe_add_leaky(a, b, self.rec)

    def sub(self, a, b):
        return fe_sub_leaky(a, b, self.rec)

    def mul(self, a, b):
        return fe_mul_leaky(a, b, self.rec)

    def special(self, site: str, arm: int) -> None:
        if self.rec is not None:
            self.rec.emit(site, arm)

    def enter(self, scope: str) -> str:
        if self.rec is None:
            return ""
        prev, self.rec.scope = self.rec.scope, scope
        return prev

    def leave(self, prev: str) -> None:
        if self.rec is not None:
            self.rec.scope = prev


class ConstArith:
    """Constant-address ops: same values, no events, no special-case arms."""

    __slots__ = ()
    leaky = False
    rec = None

    def add(self, a, b):
        return fe_ct("add", a, b)

    def sub(self, a, b):
        return fe_ct("sub", a, b)

    def mul(self, a, b):
        return fe_ct("mul", a, b)

    def special(self, site, arm):
        pass

    def enter(self, scope):
        return ""

    def leave(self, prev):
        pass


CONST = ConstArith()
SILENT = LeakyArith(None)


def arith_for(rec: Recorder | None, constant_address: bool = False):
    if constant_address:
        return CONST
    return LeakyArith(rec) if rec is not None else SILENT


# -- formulas --------------------------------------------------------------------

def _dbl(c: CurveParams, P: JacobianPoint, F) -> JacobianPoint:
    if P.is_identity:
        return P
    X, Y, Z = P.X, P.Y, P.Z
    A = F.mul(Y, Y)
    XA = F.mul(X, A)
    B = F.add(XA, XA)
    B = F.add(B, B)                 # 4 X A
    A2 = F.mul(A, A)
    C = F.add(A2, A2)
    C = F.add(C, C)
    C = F.add(C, C)                 # 8 A^2
    X2 = F.mul(X, X)
    M = F.add(X2, X2)
    M = F.add(M, X2)                # 3 X^2
    Z2 = F.mul(Z, Z)
    Z4 = F.mul(Z2, Z2)
    aZ4 = F.mul(c.a, Z4)
    M = F.add(M, aZ4)
    M2 = F.mul(M, M)
    B2 = F.add(B, B)
    X3 = F.sub(M2, B2)
    t = F.sub(B, X3)
    t = F.mul(M, t)
    Y3 = F.sub(t, C)
    YZ = F.mul(Y, Z)
    Z3 = F.add(YZ, YZ)
    return JacobianPoint(X3, Y3, Z3)


def _madd(c: CurveParams, P: JacobianPoint, Q: AffinePoint, F) -> JacobianPoint:
    if P.is_identity:
        F.special(SITE_MADD_SPECIAL, ARM_P_IDENTITY)
        return c.lift(Q)
    if Q.is_identity:
        F.special(SITE_MADD_SPECIAL, ARM_Q_IDENTITY)
        return P
    X1, Y1, Z1 = P.X, P.Y, P.Z
    Z1s = F.mul(Z1, Z1)
    U2 = F.mul(Q.x, Z1s)
    Z1c = F.mul(Z1s, Z1)
    S2 = F.mul(Q.y, Z1c)
    H = F.sub(U2, X1)
    r = F.sub(S2, Y1)
    if H.value == 0:
        if r.value == 0:
            F.special(SITE_MADD_SPECIAL, ARM_DOUBLING)
            return _dbl(c, P, F)
        F.special(SITE_MADD_SPECIAL, ARM_INVERSE)
        return c.identity()
    H2 = F.mul(H, H)
    H3 = F.mul(H2, H)
    X1H2 = F.mul(X1, H2)
    rr = F.mul(r, r)
    t = F.sub(rr, H3)
    tw = F.add(X1H2, X1H2)
    X3 = F.sub(t, tw)
    u = F.sub(X1H2, X3)
    u = F.mul(r, u)
    YH3 = F.mul(Y1, H3)
    Y3 = F.sub(u, YH3)
    Z3 = F.mul(Z1, H)
    return JacobianPoint(X3, Y3, Z3)


def _add(c: CurveParams, P: JacobianPoint, Q: JacobianPoint, F) -> JacobianPoint:
    if P.is_identity:
        F.special(SITE_ADD_SPECIAL, ARM_P_IDENTITY)
        return Q
    if Q.is_identity:
        F.special(SITE_ADD_SPECIAL, ARM_Q_IDENTITY)
        return P
    X1, Y1, Z1 = P.X, P.Y, P.Z
    X2, Y2, Z2 = Q.X, Q.Y, Q.Z
    Z1s = F.mul(Z1, Z1)
    Z2s = F.mul(Z2, Z2)
    U1 = F.mul(X1, Z2s)
    U2 = F.mul(X2, Z1s)
    Z1c = F.mul(Z1s, Z1)
    Z2c = F.mul(Z2s, Z2)
    S1 = F.mul(Y1, Z2c)
    S2 = F.mul(Y2, Z1c)
    H = F.sub(U2, U1)
    r = F.sub(S2, S1)
    if H.value == 0:
        if r.value == 0:
            F.special(SITE_ADD_SPECIAL, ARM_DOUBLING)
            return _dbl(c, P, F)
        F.special(SITE_ADD_SPECIAL, ARM_INVERSE)
        return c.identity()
    H2 = F.mul(H, H)
    H3 = F.mul(H2, H)
    U1H2 = F.mul(U1, H2)
    rr = F.mul(r, r)
    t = F.sub(rr, H3)
    tw = F.add(U1H2, U1H2)
    X3 = F.sub(t, tw)
    u = F.sub(U1H2, X3)
    u = F.mul(r, u)
    SH3 = F.mul(S1, H3)
    Y3 = F.sub(u, SH3)
    Z3 = F.mul(Z1, Z2)
    Z3 = F.mul(Z3, H)
    return JacobianPoint(X3, Y3, Z3)


def dbl(c: CurveParams, P: JacobianPoint, F=SILENT) -> JacobianPoint:
    prev = F.enter("dbl")
    try:
        return _dbl(c, P, F)
    finally:
        F.leave(prev)


def madd(c: CurveParams, P: JacobianPoint, Q: AffinePoint, F=SILENT) -> JacobianPoint:
    # a delegated doubling stays in the "add" scope, as inlined code would
    prev = F.enter("add")
    try:
        return _madd(c, P, Q, F)
    finally:
        F.leave(prev)


def add(c: CurveParams, P: JacobianPoint, Q: JacobianPoint, F=SILENT) -> JacobianPoint:
    prev = F.enter("add")
    try:
        return _add(c, P, Q, F)
    finally:
        F.leave(prev)


def dbl_leaky(c: CurveParams, P: JacobianPoint, rec: Recorder | None) -> JacobianPoint:
    return dbl(c, P, arith_for(rec))


def madd_leaky(c: CurveParams, P: JacobianPoint, Q: AffinePoint, rec: Recorder | None) -> JacobianPoint:
    return madd(c, P, Q, arith_for(rec))


def add_leaky(c: CurveParams, P: JacobianPoint, Q: JacobianPoint, rec: Recorder | None) -> JacobianPoint:
    return add(c, P, Q, arith_for(rec))


# -- plain-integer arithmetic for attacker math -------------------------------------

def _jdbl(x, y, z, a, p):
    if z == 0 or y == 0:
        return 1, 1, 0
    yy = y * y % p
    s = 4 * x * yy % p
    zz = z * z % p
    m = (3 * x * x + a * zz * zz) % p
    x3 = (m * m - 2 * s) % p
    y3 = (m * (s - x3) - 8 * yy * yy) % p
    return x3, y3, 2 * y * z % p


def _jadd(P, Q, a, p):
    x1, y1, z1 = P
    x2, y2, z2 = Q
    if z1 == 0:
        return Q
    if z2 == 0:
        return P
    z1s, z2s = z1 * z1 % p, z2 * z2 % p
    u1, u2 = x1 * z2s % p, x2 * z1s % p
    s1, s2 = y1 * z2s * z2 % p, y2 * z1s * z1 % p
    h, r = (u2 - u1) % p, (s2 - s1) % p
    if h == 0:
        return _jdbl(x1, y1, z1, a, p) if r == 0 else (1, 1, 0)
    h2 = h * h % p
    h3 = h2 * h % p
    u1h2 = u1 * h2 % p
    x3 = (r * r - h3 - 2 * u1h2) % p
    y3 = (r * (u1h2 - x3) - s1 * h3) % p
    return x3, y3, z1 * z2 * h % p


def _mul_int(c: CurveParams, k: int, P: AffinePoint) -> tuple[int, int] | None:
    if P.is_identity:
        return None
    k %= c.n
    if k == 0:
        return None
    a, p = c.a.value, c.p
    R0, R1 = (1, 1, 0), (P.x.value, P.y.value, 1)
    # Montgomery ladder: uniform dbl+add per bit
    for i in range(k.bit_length() - 1, -1, -1):
        if (k >> i) & 1:
            R0, R1 = _jadd(R0, R1, a, p), _jdbl(*R1, a, p)
        else:
            R0, R1 = _jdbl(*R0, a, p), _jadd(R0, R1, a, p)
    x, y, z = R0
    if z == 0:
        return None
    zi = pow(z, p - 2, p)
    zi2 = zi * zi % p
    return x * zi2 % p, y * zi2 * zi % p


def scalar_mul_ct(c: CurveParams, k: int, P: AffinePoint) -> AffinePoint:
    """[k]P on silent integer arithmetic (attacker and reference math)."""
    r = _mul_int(c, k, P)
    if r is None:
        return AFFINE_IDENTITY
    return AffinePoint(_new(r[0], c.ctx), _new(r[1], c.ctx))


def affine_add(c: CurveParams, P: AffinePoint, Q: AffinePoint) -> AffinePoint:
    """Textbook affine chord-and-tangent law (independent of the Jacobian formulas)."""
    if P.is_identity:
        return Q
    if Q.is_identity:
        return P
    p = c.p
    x1, y1, x2, y2 = P.x.value, P.y.value, Q.x.value, Q.y.value
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return AFFINE_IDENTITY
        lam = (3 * x1 * x1 + c.a.value) * pow(2 * y1, p - 2, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, p - 2, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return c.affine(x3, (lam * (x1 - x3) - y1) % p)


@lru_cache(maxsize=1 << 16)
def _halve_cached(c: CurveParams, x: int, y: int) -> tuple[int, int] | None:
    return _mul_int(c, (c.n + 1) // 2, c.affine(x, y))


def halve_affine(c: CurveParams, P: AffinePoint) -> AffinePoint:
    """The unique Q with 2Q = P, i.e. [(n+1)/2]P."""
    if P.is_identity:
        return P
    r = _halve_cached(c, P.x.value, P.y.value)
    if r is None:  # pragma: no cover - impossible for non-identity P
        return AFFINE_IDENTITY
    return c.affine(*r)


# -- Process inversion ------------------------------------------------------------

def _candidates(c: CurveParams, x1: int, y1: int, zs: list[int]) -> set[JacobianPoint]:
    p = c.p
    out = set()
    for z in zs:
        z2 = z * z % p
        out.add(JacobianPoint(_new(x1 * z2 % p, c.ctx), _new(y1 * z2 * z % p, c.ctx), _new(z, c.ctx)))
    return out


def invert_dbl(c: CurveParams, out: JacobianPoint) -> set[JacobianPoint]:
    """Every Jacobian P with dbl(P) == out componentwise (Z1^4 = Z3 / (2 y1))."""
    if out.is_identity:
        raise DomainError("cannot invert a doubling that produced the identity")
    h = halve_affine(c, to_affine(c, out))
    p = c.p
    x1, y1 = h.x.value, h.y.value
    if y1 == 0:
        raise DomainError("half point has y = 0 (2-torsion)")
    v = out.Z.value * pow(2 * y1, p - 2, p) % p
    cands = _candidates(c, x1, y1, [z for z in roots_int(v, 4, p) if z])
    return {P for P in cands if _dbl(c, P, SILENT) == out}


def invert_madd(c: CurveParams, out: JacobianPoint, Q: AffinePoint) -> set[JacobianPoint]:
    """Every Jacobian P with madd(P, Q) == out componentwise (Z1^3 = Z3 / (x2 - x1))."""
    if out.is_identity:
        raise DomainError("cannot invert a mixed addition that produced the identity")
    if Q.is_identity:
        return {out}
    A = to_affine(c, out)
    if A == Q:
        # predecessor is the identity; madd(O, Q) always returns lift(Q)
        return {c.identity()} if out == c.lift(Q) else set()
    prev = affine_add(c, A, negate(c, Q))
    if prev == Q:
        # madd delegated to doubling
        return {P for P in invert_dbl(c, out) if _madd(c, P, Q, SILENT) == out}
    p = c.p
    x1, y1 = prev.x.value, prev.y.value
    dx = (Q.x.value - x1) % p
    if dx == 0:
        raise DomainError("predecessor would be -Q; the sum is the identity")
    v = out.Z.value * pow(dx, p - 2, p) % p
    cands = _candidates(c, x1, y1, [z for z in roots_int(v, 3, p) if z])
    return {P for P in cands if _madd(c, P, Q, SILENT) == out}
