import random

import pytest
from hypothesis import HealthCheck, settings

from otalab.config import LabConfig, Matcher
from otalab.curve import p256
from otalab.oracle import load_toy_curve
from otalab.scalarmul import AlgoConfig
from otalab.tracer import NoiseModel, bundled_map

settings.register_profile("lab", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

P256_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF


@pytest.fixture(scope="session")
def toy():
    return load_toy_curve()


@pytest.fixture(scope="session")
def tc(toy):
    return toy.params


@pytest.fixture(scope="session")
def c256():
    return p256()


def make_cfg(algorithm="ladder", bits=256, curve=None, region_map="pages17", channel="copycat",
             tracked=None, seed=1, noise=None, matcher=None, **algo):
    rmap = bundled_map(region_map)
    return LabConfig(seed=seed, curve=curve or p256(),
                     algo=AlgoConfig(algorithm, bits, **algo), rmap=rmap, channel=channel,
                     tracked=frozenset(tracked) if tracked is not None else rmap.all_regions,
                     noise=noise or NoiseModel(), matcher=matcher or Matcher())


@pytest.fixture
def rng():
    return random.Random(1234)
