"""Leak recording and side-channel encodings.

A :class:`Recorder` collects branch-level :class:`LeakEvent` records while the
instrumented stack runs.  A :class:`RegionMap` groups events into synthetic
code "pages" and :func:`encode_channel` degrades a raw trace into what a page
tracer (page transitions only) or a CopyCat-style attacker (pages plus
instruction counts) would observe.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import FormatError, UsageError

CHANNELS = ("branch", "pagetrace", "copycat")
MARKER_SITE = "iter.begin"
MAX_REGIONS = 20

# '.', 'a', 'A', 'D' first so small traces render like hand-drawn page strings
ALPHABET = ".aAD" + "bcefghijklmnopqrstuvwxyz" + "BCEFGHIJKLMNOPQRSTUVWXYZ" + "0123456789"


class LeakEvent(NamedTuple):
    site: str
    payload: int
    scope: str = ""


RawTrace = tuple  # tuple[LeakEvent, ...]


class Recorder:
    """Append-only event sink owned by a single execution context.

    ``scope`` is set by the curve layer while it runs a point operation so that
    region maps can tell apart field calls made from doubling and from addition
    code (mirroring inlined reduction macros landing in the caller's page).
    """

    __slots__ = ("events", "scope")

    def __init__(self):
        self.events: list[LeakEvent] = []
        self.scope = ""

    def emit(self, site: str, payload: int = 0) -> None:
        self.events.append(LeakEvent(site, payload, self.scope))

    def marker(self) -> None:
        self.events.append(LeakEvent(MARKER_SITE, 0, "iter"))

    def snapshot(self, start: int = 0) -> RawTrace:
        return tuple(self.events[start:])

    def __len__(self):
        return len(self.events)


@dataclass
class RegionMap:
    """Declarative assignment of leak sites to synthetic code regions.

    ``assign`` keys are matched most-specific first:
    ``scope/site:arm``, ``scope/site``, ``site:arm``, ``site``.
    ``weights`` uses the same keys; unmatched events weigh ``arm + 1``.
    """

    name: str
    labels: list[str]
    assign: dict[str, int]
    weights: dict[str, int] = field(default_factory=dict)
    marker_region: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.labels)
        if not 1 <= n <= MAX_REGIONS:
            raise UsageError(f"region count must be in [1, {MAX_REGIONS}], got {n}")
        bad = {r for r in self.assign.values() if not 0 <= r < n}
        if bad:
            raise UsageError(f"region indices {sorted(bad)} outside [0, {n})")
        if any(w < 1 for w in self.weights.values()):
            raise UsageError("weights must be >= 1")
        if self.assign.get(MARKER_SITE, self.marker_region) != self.marker_region:
            raise UsageError("iter.begin must map to the marker region")
        self.assign.setdefault(MARKER_SITE, self.marker_region)

    @property
    def n_regions(self) -> int:
        return len(self.labels)

    @property
    def all_regions(self) -> frozenset[int]:
        return frozenset(range(self.n_regions))

    def lookup(self, ev: LeakEvent) -> tuple[int, int]:
        """Return ``(region, weight)`` for an event."""
        key = (ev.scope, ev.site, ev.payload)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        names = (f"{ev.scope}/{ev.site}:{ev.payload}", f"{ev.scope}/{ev.site}",
                 f"{ev.site}:{ev.payload}", ev.site)
        for k in names:
            if k in self.assign:
                region = self.assign[k]
                break
        else:
            raise UsageError(f"site {ev.site!r} (scope {ev.scope!r}) is not mapped by {self.name!r}")
        weight = ev.payload + 1
        for k in names:
            if k in self.weights:
                weight = self.weights[k]
                break
        self._cache[key] = (region, weight)
        return region, weight

    def region_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UsageError(f"unknown region label {label!r}") from None

    def to_json(self) -> dict:
        return {"name": self.name, "labels": list(self.labels), "assign": dict(self.assign),
                "weights": dict(self.weights), "marker": self.marker_region}

    @classmethod
    def from_json(cls, d: dict) -> RegionMap:
        try:
            return cls(name=d.get("name", "inline"), labels=list(d["labels"]),
                       assign={k: int(v) for k, v in d["assign"].items()},
                       weights={k: int(v) for k, v in d.get("weights", {}).items()},
                       marker_region=int(d.get("marker", 0)))
        except KeyError as exc:
            raise FormatError(f"region map missing field {exc}") from None


_ARMS = {"mod_add.reduce": 2, "mod_sub.fixup": 2, "mod_mul.csub": 3}


def _per_function() -> RegionMap:
    labels = ["iter", "mod_add", "mod_sub", "mod_mul", "div2", "special"]
    assign = {"iter.begin": 0, "mod_add.reduce": 1, "mod_sub.fixup": 2,
              "mod_mul.csub": 3, "div2.odd": 4, "madd.special": 5, "add.special": 5}
    return RegionMap("per-function", labels, assign)


def _split_fine() -> RegionMap:
    labels = ["iter"]
    assign = {"iter.begin": 0}
    arms = dict(_ARMS, **{"div2.odd": 2})
    for site, n in arms.items():
        for arm in range(n):
            assign[f"{site}:{arm}"] = len(labels)
            labels.append(f"{site}:{arm}")
    # madd and the full addition share one region per special-case arm
    for arm in (1, 2, 3, 4):
        assign[f"madd.special:{arm}"] = assign[f"add.special:{arm}"] = len(labels)
        labels.append(f"special:{arm}")
    return RegionMap("split-fine", labels, assign)


def _pages17() -> RegionMap:
    labels = ["iter"]
    assign = {"iter.begin": 0}
    for scope in ("dbl", "add"):
        for site, n in _ARMS.items():
            for arm in range(n):
                key = f"{scope}/{site}:{arm}"
                assign[key] = len(labels)
                labels.append(key)
    assign["madd.special"] = assign["add.special"] = len(labels)
    labels.append("special")
    assign["div2.odd"] = len(labels)
    labels.append("div2.odd")
    return RegionMap("pages17", labels, assign)


BUNDLED_MAPS = {"per-function": _per_function, "split-fine": _split_fine, "pages17": _pages17}


def bundled_map(name: str) -> RegionMap:
    try:
        return BUNDLED_MAPS[name]()
    except KeyError:
        raise UsageError(f"unknown region map {name!r}; bundled: {sorted(BUNDLED_MAPS)}") from None


@dataclass(frozen=True)
class ChannelTrace:
    """Observed side-channel trace.

    For ``pagetrace``/``copycat`` each run is ``(region, count)`` (count is 1 for
    pagetrace); for ``branch`` each run is ``(site, payload)``.
    """

    channel: str
    n_regions: int
    runs: tuple

    def __len__(self):
        return len(self.runs)


def _check_channel(channel: str) -> None:
    if channel not in CHANNELS:
        raise UsageError(f"unknown channel {channel!r}; expected one of {CHANNELS}")


def encode_channel(raw: Iterable[LeakEvent], rmap: RegionMap, channel: str = "copycat",
                   tracked: Iterable[int] | None = None) -> ChannelTrace:
    """Filter ``raw`` to the tracked regions and run-length encode it.

    Runs in the marker region are never merged: every iteration marker stays a
    separate run so iterations can be split even when an iteration touches no
    other tracked region.
    """
    _check_channel(channel)
    keep = rmap.all_regions if tracked is None else frozenset(tracked)
    if not keep:
        raise UsageError("tracked region set is empty")
    if not keep <= rmap.all_regions:
        raise UsageError(f"tracked regions {sorted(keep - rmap.all_regions)} not in map")
    lookup = rmap.lookup
    if channel == "branch":
        runs = tuple((ev.site, ev.payload) for ev in raw if lookup(ev)[0] in keep)
        return ChannelTrace(channel, rmap.n_regions, runs)
    marker = rmap.marker_region
    regs: list[int] = []
    counts: list[int] = []
    for ev in raw:
        region, weight = lookup(ev)
        if region not in keep:
            continue
        if regs and regs[-1] == region and region != marker:
            counts[-1] += weight
        else:
            regs.append(region)
            counts.append(weight)
    if channel == "pagetrace":
        runs = tuple((r, 1) for r in regs)
    else:
        runs = tuple(zip(regs, counts))
    return ChannelTrace(channel, rmap.n_regions, runs)


def restrict(t: ChannelTrace, tracked: Iterable[int], marker_region: int = 0) -> ChannelTrace:
    """Drop runs outside ``tracked`` and re-merge (subset re-encoding without re-execution)."""
    keep = frozenset(tracked)
    if t.channel == "branch":
        raise UsageError("branch traces carry no regions to restrict")
    regs: list[int] = []
    counts: list[int] = []
    for region, count in t.runs:
        if region not in keep:
            continue
        if regs and regs[-1] == region and region != marker_region:
            counts[-1] += count
        else:
            regs.append(region)
            counts.append(count)
    if t.channel == "pagetrace":
        return ChannelTrace(t.channel, t.n_regions, tuple((r, 1) for r in regs))
    return ChannelTrace(t.channel, t.n_regions, tuple(zip(regs, counts)))


def strip_counts(t: ChannelTrace, marker_region: int = 0) -> ChannelTrace:
    """PageTracer view of a CopyCat trace."""
    if t.channel != "copycat":
        raise UsageError("only copycat traces carry counts")
    return ChannelTrace("pagetrace", t.n_regions, tuple((r, 1) for r, _ in t.runs))


def split_iterations(t: ChannelTrace, marker_region: int = 0,
                     marker_site: str = MARKER_SITE) -> list[ChannelTrace]:
    """Cut ``t`` into per-iteration slices, each starting at a marker run."""
    if t.channel == "branch":
        starts = [i for i, run in enumerate(t.runs) if run[0] == marker_site]
    else:
        starts = [i for i, run in enumerate(t.runs) if run[0] == marker_region]
    if not starts:
        raise FormatError("no iteration markers in trace")
    bounds = starts + [len(t.runs)]
    return [ChannelTrace(t.channel, t.n_regions, t.runs[a:b]) for a, b in zip(bounds, bounds[1:])]


# -- text formats ----------------------------------------------------------------

def render_compact(t: ChannelTrace) -> str:
    if t.channel == "branch":
        raise UsageError("compact rendering needs a region channel")
    if t.n_regions > len(ALPHABET):
        raise UsageError(f"too many regions ({t.n_regions}) for the compact alphabet")
    if t.channel == "pagetrace":
        return "".join(ALPHABET[r] for r, _ in t.runs)
    return "".join(f"{ALPHABET[r]}:{c}" for r, c in t.runs)


_COMPACT_RUN = re.compile(r"(.):(\d+)")


def parse_compact(text: str, channel: str, n_regions: int) -> ChannelTrace:
    try:
        if channel == "pagetrace":
            runs = tuple((ALPHABET.index(ch), 1) for ch in text)
        elif channel == "copycat":
            pos, runs_l = 0, []
            while pos < len(text):
                m = _COMPACT_RUN.match(text, pos)
                if m is None:
                    raise FormatError(f"bad compact run at offset {pos}")
                runs_l.append((ALPHABET.index(m.group(1)), int(m.group(2))))
                pos = m.end()
            runs = tuple(runs_l)
        else:
            raise FormatError(f"channel {channel!r} has no compact form")
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if any(r >= n_regions for r, _ in runs):
        raise FormatError("compact trace references a region beyond the header count")
    return ChannelTrace(channel, n_regions, runs)


def dumps_trace(t: ChannelTrace, compact: bool = False) -> str:
    """Canonical text form: header line then one run per line."""
    header = f"#channel {t.channel} regions {t.n_regions}"
    if compact:
        return f"{header} compact\n{render_compact(t)}\n"
    if t.channel == "branch":
        body = "".join(f"{site} {payload}\n" for site, payload in t.runs)
    else:
        body = "".join(f"r{r} {c}\n" for r, c in t.runs)
    return header + "\n" + body


_HEADER = re.compile(r"#channel (\w+) regions (\d+)( compact)?$")


def loads_trace(text: str) -> ChannelTrace:
    lines = text.split("\n")
    m = _HEADER.match(lines[0]) if lines else None
    if m is None:
        raise FormatError("missing '#channel <tag> regions <n>' header")
    channel, n = m.group(1), int(m.group(2))
    if channel not in CHANNELS:
        raise FormatError(f"unknown channel {channel!r}")
    body = [ln for ln in lines[1:] if ln]
    if m.group(3):
        return parse_compact(body[0] if body else "", channel, n)
    runs = []
    for ln in body:
        parts = ln.split(" ")
        if len(parts) != 2:
            raise FormatError(f"bad trace line {ln!r}")
        if channel == "branch":
            runs.append((parts[0], int(parts[1])))
        else:
            if not parts[0].startswith("r"):
                raise FormatError(f"bad run line {ln!r}")
            region, count = int(parts[0][1:]), int(parts[1])
            if not 0 <= region < n:
                raise FormatError(f"region {region} outside header count {n}")
            runs.append((region, count))
    return ChannelTrace(channel, n, tuple(runs))


# -- noise and matching ------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    drop: float = 0.0
    dup: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("drop", "dup"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise UsageError(f"{name} probability must be in [0, 1], got {v}")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


def add_noise(t: ChannelTrace, m: NoiseModel, rng: np.random.Generator | None = None,
              marker_region: int = 0) -> ChannelTrace:
    """Independently drop each run with ``m.drop`` and duplicate survivors with ``m.dup``.

    Marker runs pass through untouched: they model a separate start-of-iteration
    signal, not the noisy channel itself.
    """
    if m.drop == 0 and m.dup == 0:
        return t
    rng = m.rng() if rng is None else rng
    n = len(t.runs)
    dropped = rng.random(n) < m.drop
    duped = rng.random(n) < m.dup
    marker = MARKER_SITE if t.channel == "branch" else marker_region
    out = []
    for run, d, u in zip(t.runs, dropped, duped):
        if run[0] == marker:
            out.append(run)
            continue
        if d:
            continue
        out.append(run)
        if u:
            out.append(run)
    return ChannelTrace(t.channel, t.n_regions, tuple(out))


def edit_distance(a: ChannelTrace | Sequence, b: ChannelTrace | Sequence, cap: int | None = None) -> int:
    """Levenshtein distance over runs (counts are part of the symbol).

    With ``cap`` the computation stops early and returns ``cap + 1`` as soon as
    the distance is known to exceed ``cap``.
    """
    x = a.runs if isinstance(a, ChannelTrace) else tuple(a)
    y = b.runs if isinstance(b, ChannelTrace) else tuple(b)
    if len(x) < len(y):
        x, y = y, x
    if cap is not None and len(x) - len(y) > cap:
        return cap + 1
    prev = list(range(len(y) + 1))
    for i, xi in enumerate(x, 1):
        cur = [i] + [0] * len(y)
        best = i
        for j, yj in enumerate(y, 1):
            v = prev[j - 1] + (xi != yj)
            if prev[j] + 1 < v:
                v = prev[j] + 1
            if cur[j - 1] + 1 < v:
                v = cur[j - 1] + 1
            cur[j] = v
            if v < best:
                best = v
        if cap is not None and best > cap:
            return cap + 1
        prev = cur
    d = prev[-1]
    return d if cap is None or d <= cap else cap + 1
