import math

import pytest

from otalab.errors import UsageError
from otalab.field import is_probable_prime, roots_int
from otalab.oracle import exhaustive_ota, exhaustive_roots, find_toy_curve, load_toy_curve


def small_primes(lo, hi):
    return [p for p in range(lo, hi) if is_probable_prime(p)]


class TestRoots:
    def test_example(self):
        assert exhaustive_roots(3, 4, 13) == {2, 3, 10, 11}

    def test_limit(self):
        with pytest.raises(UsageError):
            exhaustive_roots(1, 2, 1 << 14)

    @pytest.mark.parametrize("residue", [1, 5, 7, 11])
    def test_fast_matches_scan(self, residue):
        primes = [p for p in small_primes(5, 400) if p % 12 == residue][:6]
        for p in primes:
            for r in (2, 3, 4):
                for v in range(p):
                    assert set(roots_int(v, r, p)) == exhaustive_roots(v, r, p)


class TestToyCurve:
    def test_fixture(self, toy):
        assert (toy.p, toy.a, toy.b, toy.n, toy.G) == (739, 201, 705, 751, (444, 110))
        assert toy.p % 12 == 7

    def test_regenerates_same_curve(self, toy):
        again = find_toy_curve(predicate=lambda q: q % 12 == 7)
        assert again.to_json() == toy.to_json()

    def test_group_order_by_addition(self, toy):
        p, a = toy.p, toy.a
        x, y = toy.G
        acc = toy.G
        steps = 1
        while acc is not None:
            ax, ay = acc
            if ax == x and (ay + y) % p == 0:
                acc = None
            else:
                if acc == toy.G:
                    lam = (3 * x * x + a) * pow(2 * y, -1, p) % p
                else:
                    lam = (ay - y) * pow(ax - x, -1, p) % p
                nx = (lam * lam - x - ax) % p
                acc = (nx, (lam * (x - nx) - y) % p)
            steps += 1
        assert steps == toy.n

    def test_hasse(self, toy):
        assert abs(toy.n - (toy.p + 1)) <= 2 * math.sqrt(toy.p)

    def test_points_on_curve(self, toy):
        assert all((y * y - x ** 3 - toy.a * x - toy.b) % toy.p == 0 for x, y in toy.points)
        assert len(set(toy.points)) == toy.n - 1

    def test_cached(self):
        assert load_toy_curve() is load_toy_curve()


class TestExhaustiveOta:
    @pytest.mark.parametrize("alg", ["dbl_add_always", "comb", "ladder"])
    def test_eight_bit(self, alg):
        res = exhaustive_ota(8, alg)
        assert res["ok"], res["failures"][:5]
        assert res["scalars"]["forward"] == (255 if alg == "comb" else 128)

    def test_backward_randomized(self):
        res = exhaustive_ota(8, "dbl_add_always", directions=("backward",), randomize_init=True)
        assert res["ok"] and res["scalars"] == {"backward": 128}

    def test_bounds(self):
        with pytest.raises(UsageError):
            exhaustive_ota(13)
