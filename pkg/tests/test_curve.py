import random
from functools import lru_cache

import pytest
from hypothesis import given, strategies as st

from otalab.curve import (AFFINE_IDENTITY, dbl, halve_affine, invert_dbl, invert_madd, is_on_curve,
                          madd, make_curve, negate, random_point, random_state, randomize,
                          scalar_mul_ct, to_affine)
from otalab.errors import UsageError
from otalab.oracle import find_toy_curve

# -- independent affine oracle (plain ints, None for the identity) ------------------


def o_add(P, Q, a, p):
    if P is None:
        return Q
    if Q is None:
        return P
    (x1, y1), (x2, y2) = P, Q
    if x1 == x2 and (y1 + y2) % p == 0:
        return None
    if P == Q:
        lam = (3 * x1 * x1 + a) * pow(2 * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return x3, (lam * (x1 - x3) - y1) % p


def xy(P):
    return None if P.is_identity else (P.x.value, P.y.value)


@lru_cache(maxsize=None)
def toy_of(residue):
    return find_toy_curve(predicate=lambda q: q % 12 == residue)


@pytest.fixture(scope="module")
def toy_pts(toy, tc):
    return [tc.affine(x, y) for x, y in toy.points]


class TestGroupLaw:
    def test_dbl_identity(self, tc):
        assert dbl(tc, tc.identity()).is_identity

    def test_dbl_exhaustive(self, tc, toy_pts):
        a, p = tc.a.value, tc.p
        for P in toy_pts:
            out = dbl(tc, tc.lift(P))
            assert xy(to_affine(tc, out)) == o_add(xy(P), xy(P), a, p)
            assert out.Z.value == 2 * P.y.value % p

    def test_madd_exhaustive(self, tc, toy_pts):
        a, p = tc.a.value, tc.p
        rng = random.Random(3)
        for P in toy_pts:
            L = randomize(tc, tc.lift(P), rng.randrange(1, p))
            for Q in toy_pts:
                assert xy(to_affine(tc, madd(tc, L, Q))) == o_add(xy(P), xy(Q), a, p)

    def test_madd_special_cases(self, tc, toy_pts):
        Q = toy_pts[5]
        assert madd(tc, tc.identity(), Q) == tc.lift(Q)
        assert madd(tc, tc.lift(Q), negate(tc, Q)).is_identity

    def test_group_axioms_sampled(self, tc, toy_pts):
        a, p = tc.a.value, tc.p
        rng = random.Random(9)
        for _ in range(3000):
            P, Q, R = (xy(rng.choice(toy_pts)) for _ in range(3))
            assert o_add(P, Q, a, p) == o_add(Q, P, a, p)
            assert o_add(o_add(P, Q, a, p), R, a, p) == o_add(P, o_add(Q, R, a, p), a, p)
            assert o_add(P, (P[0], -P[1] % p), a, p) is None

    def test_order_and_table(self, toy, tc):
        a, p = tc.a.value, tc.p
        acc = None
        G = xy(tc.G)
        for k in range(1, toy.n):
            acc = o_add(acc, G, a, p)
            assert xy(scalar_mul_ct(tc, k, tc.G)) == acc
        assert o_add(acc, G, a, p) is None
        assert scalar_mul_ct(tc, toy.n, tc.G).is_identity
        assert len(toy.points) + 1 == toy.n

    def test_p256_order(self, c256):
        assert scalar_mul_ct(c256, c256.n, c256.G) is AFFINE_IDENTITY
        assert is_on_curve(c256, c256.G)

    def test_make_curve_rejects(self):
        with pytest.raises(UsageError):
            make_curve(739, 201, 705, 751, 444, 111)
        with pytest.raises(UsageError):
            make_curve(739, 201, 705, 750, 444, 110)


class TestHalving:
    def test_identity(self, tc):
        assert halve_affine(tc, AFFINE_IDENTITY).is_identity

    def test_toy(self, tc):
        assert halve_affine(tc, scalar_mul_ct(tc, 2, tc.G)) == tc.G

    def test_roundtrip_p256(self, c256):
        rng = random.Random(11)
        for _ in range(1000):
            P = random_point(c256, rng)
            assert to_affine(c256, dbl(c256, c256.lift(halve_affine(c256, P)))) == P


class TestRandomize:
    @given(st.integers(1, 738), st.integers(0, 749))
    def test_class_preserved(self, tc, toy, lam, idx):
        P = tc.lift(tc.affine(*toy.points[idx]))
        assert randomize(tc, P, 1) == P
        assert to_affine(tc, randomize(tc, P, lam)) == to_affine(tc, P)

    def test_propagation_p256(self, c256):
        rng = random.Random(2)
        G = c256.G
        for _ in range(200):
            P = random_state(c256, rng)
            lam = rng.randrange(1, c256.p)
            assert dbl(c256, randomize(c256, P, lam)) == randomize(c256, dbl(c256, P), pow(lam, 4, c256.p))
            assert madd(c256, randomize(c256, P, lam), G) == randomize(c256, madd(c256, P, G), pow(lam, 3, c256.p))


class TestInversion:
    def test_roundtrip_p256(self, c256):
        rng = random.Random(4)
        for _ in range(1000):
            P = random_state(c256, rng)
            D = dbl(c256, P)
            cands = invert_dbl(c256, D)
            assert P in cands and all(dbl(c256, X) == D for X in cands)
            M = madd(c256, P, c256.G)
            cands = invert_madd(c256, M, c256.G)
            assert P in cands and all(madd(c256, X, c256.G) == M for X in cands)

    def test_madd_from_identity(self, tc, toy_pts):
        Q = toy_pts[17]
        assert invert_madd(tc, tc.lift(Q), Q) == {tc.identity()}

    @pytest.mark.parametrize("residue,dbl_counts,madd_counts", [
        (7, {0, 2}, {0, 1, 3}),      # p = 3 mod 4, p = 1 mod 3
        (1, {0, 2, 4}, {0, 1, 3}),   # p = 1 mod 4
        (11, {0, 2}, {0, 1}),        # p = 2 mod 3
    ])
    def test_root_counts_exhaustive(self, residue, dbl_counts, madd_counts):
        c = toy_of(residue).params
        toy = toy_of(residue)
        rng = random.Random(residue)
        two_g = scalar_mul_ct(c, 2, c.G)
        seen_d, seen_m = set(), set()
        for x, y in toy.points:
            A = c.affine(x, y)
            for z in rng.sample(range(1, c.p), 4):
                out = randomize(c, c.lift(A), z)
                got = invert_dbl(c, out)
                assert all(dbl(c, P) == out for P in got)
                seen_d.add(len(got))
                try:
                    got = invert_madd(c, out, c.G)
                except Exception:
                    continue       # predecessor would be -G
                assert all(madd(c, P, c.G) == out for P in got)
                if A == two_g:
                    # madd delegated to doubling: quartic multiplicity
                    assert len(got) in dbl_counts
                else:
                    seen_m.add(len(got))
        assert seen_d <= dbl_counts and seen_m <= madd_counts
        assert len(seen_d) > 1 and len(seen_m) > 1
