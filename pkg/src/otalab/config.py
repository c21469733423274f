"""Lab configuration: curve, algorithm, region map, channel, noise, matcher, seed."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .curve import CurveParams, make_curve, p256
from .errors import FormatError, UsageError
from .scalarmul import AlgoConfig
from .tracer import CHANNELS, NoiseModel, RegionMap, bundled_map

ENV_CONFIG = "OTALAB_CONFIG"
DEFAULT_BIAS_THRESHOLD = 0.95


@dataclass(frozen=True)
class Matcher:
    kind: str = "exact"
    tau: int = 0

    @classmethod
    def parse(cls, text: str) -> Matcher:
        if text == "exact":
            return cls()
        if text.startswith("edit:"):
            try:
                tau = int(text[5:])
            except ValueError:
                raise UsageError(f"bad edit threshold in {text!r}") from None
            if tau < 0:
                raise UsageError("edit threshold must be >= 0")
            return cls("edit", tau)
        raise UsageError(f"matcher must be 'exact' or 'edit:<tau>', got {text!r}")

    def __str__(self):
        return "exact" if self.kind == "exact" else f"edit:{self.tau}"


def _curve_from(desc) -> CurveParams:
    if desc == "p256":
        return p256()
    if desc == "toy":
        from .oracle import load_toy_curve
        return load_toy_curve().params
    if isinstance(desc, dict):
        try:
            vals = {k: int(str(desc[k]), 0) for k in ("p", "a", "b", "n", "Gx", "Gy")}
        except KeyError as exc:
            raise FormatError(f"inline curve missing {exc}") from None
        except ValueError as exc:
            raise FormatError(f"inline curve: {exc}") from None
        return make_curve(vals["p"], vals["a"], vals["b"], vals["n"], vals["Gx"], vals["Gy"],
                          name=desc.get("name", "inline"))
    raise UsageError(f"unknown curve profile {desc!r}")


def _map_from(desc) -> RegionMap:
    if isinstance(desc, str):
        return bundled_map(desc)
    if isinstance(desc, dict):
        return RegionMap.from_json(desc)
    raise FormatError("region_map must be a bundled name or an inline table")


def resolve_tracked(desc, rmap: RegionMap) -> frozenset[int]:
    """Accept 'all', a bitmask int, or a list of region indices / labels."""
    if desc is None or desc == "all":
        return rmap.all_regions
    if isinstance(desc, int) and not isinstance(desc, bool):
        if not 0 < desc < (1 << rmap.n_regions):
            raise UsageError(f"tracked bitmask {desc:#x} out of range")
        return frozenset(i for i in range(rmap.n_regions) if desc >> i & 1)
    out = set()
    for item in desc:
        out.add(rmap.region_index(item) if isinstance(item, str) else int(item))
    if not out:
        raise UsageError("tracked region set is empty")
    if not out <= rmap.all_regions:
        raise UsageError(f"tracked regions {sorted(out - rmap.all_regions)} not in map")
    return frozenset(out)


@dataclass(frozen=True)
class LabConfig:
    seed: int
    curve: CurveParams
    algo: AlgoConfig
    rmap: RegionMap = field(compare=False)
    channel: str = "copycat"
    tracked: frozenset[int] = frozenset()
    noise: NoiseModel = NoiseModel()
    matcher: Matcher = Matcher()
    bias_threshold: float = DEFAULT_BIAS_THRESHOLD
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise UsageError(f"unknown channel {self.channel!r}")
        if not self.tracked:
            object.__setattr__(self, "tracked", self.rmap.all_regions)
        if not 0 < self.bias_threshold <= 1:
            raise UsageError("bias_threshold must be in (0, 1]")

    @classmethod
    def from_json(cls, d: dict) -> LabConfig:
        if "seed" not in d:
            raise FormatError("config needs a 'seed'")
        known = {"seed", "curve", "algorithm", "region_map", "tracked", "channel", "noise",
                 "matcher", "bias_threshold"}
        extra = set(d) - known
        if extra:
            raise FormatError(f"unknown config fields {sorted(extra)}")
        rmap = _map_from(d.get("region_map", "pages17"))
        noise = d.get("noise", {})
        return cls(
            seed=int(d["seed"]),
            curve=_curve_from(d.get("curve", "p256")),
            algo=AlgoConfig.from_json(d.get("algorithm", {})),
            rmap=rmap,
            channel=d.get("channel", "copycat"),
            tracked=resolve_tracked(d.get("tracked", "all"), rmap),
            noise=NoiseModel(float(noise.get("drop", 0)), float(noise.get("dup", 0)),
                             int(noise.get("seed", d["seed"]))),
            matcher=Matcher.parse(d.get("matcher", "exact")),
            bias_threshold=float(d.get("bias_threshold", DEFAULT_BIAS_THRESHOLD)),
            source=d,
        )

    def to_json(self) -> dict:
        curve = "p256" if self.curve.name == "p256" else self.curve.to_json()
        return {
            "seed": self.seed,
            "curve": curve,
            "algorithm": self.algo.to_json(),
            "region_map": self.rmap.to_json(),
            "tracked": sorted(self.tracked),
            "channel": self.channel,
            "noise": {"drop": self.noise.drop, "dup": self.noise.dup, "seed": self.noise.seed},
            "matcher": str(self.matcher),
            "bias_threshold": self.bias_threshold,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_(self, **kw) -> LabConfig:
        return replace(self, **kw)

    def with_algo(self, **kw) -> LabConfig:
        return replace(self, algo=replace(self.algo, **kw))


def load_config(path: str | os.PathLike | None = None) -> LabConfig:
    """Read a config file; falls back to ``$OTALAB_CONFIG`` when no path is given."""
    path = path or os.environ.get(ENV_CONFIG)
    if not path:
        raise UsageError(f"no config given (pass --config or set {ENV_CONFIG})")
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path}: {exc}") from None
    return LabConfig.from_json(d)
