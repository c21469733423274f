"""Extend-and-prune online template attacks.

Forward search replays the victim from a known starting state and keeps the
digit guesses whose template trace matches the next target iteration.
Backward search starts from the final projective state and inverts Process
with modular roots; guesses with no root are refuted without a template.

Call accounting: every candidate extension costs one invocation of the
template implementation.  At the last forward level that invocation yields
the candidate output instead of a trace, so an attack under an ideal pmf
costs exactly ``radix * n_digits`` calls.
"""

from __future__ import annotations

import random
import sys
import time
from dataclasses import dataclass, field
from typing import Sequence

from .config import LabConfig, Matcher
from .curve import (AffinePoint, JacobianPoint, invert_dbl, invert_madd, scalar_mul_ct,
                    to_affine)
from .errors import IntegrityError, UsageError
from .scalarmul import (comb_table, decode, initial_state, process_step, run, successor)
from .tracer import (ChannelTrace, Recorder, add_noise, edit_distance, encode_channel,
                     split_iterations)


@dataclass(frozen=True)
class TargetBundle:
    cfg: LabConfig
    trace: ChannelTrace
    public: AffinePoint
    final_state: JacobianPoint | None = None

    @property
    def tracked(self) -> frozenset[int]:
        return self.cfg.tracked


@dataclass
class CandidateNode:
    direction: str
    index: int                  # digits absorbed so far (forward) / state index R_i (backward)
    state: object
    digits: tuple[int, ...]     # prefix (forward) or suffix (backward)
    outs: object = None         # Process outputs of ``state`` (forward dbl_add_always / comb)


@dataclass
class AttackReport:
    direction: str
    mode: str
    success: bool = False
    k: int | None = None
    template_calls: int = 0
    solutions_tested: int = 0
    wall_time: float = 0.0
    reason: str = ""
    nodes: int = 0

    def to_json(self) -> dict:
        return {"direction": self.direction, "mode": self.mode, "success": self.success,
                "k": None if self.k is None else hex(self.k),
                "template_calls": self.template_calls, "solutions_tested": self.solutions_tested,
                "wall_time_s": round(self.wall_time, 6), "reason": self.reason, "nodes": self.nodes}


class _Budget(Exception):
    pass


def match(template: ChannelTrace, target_slice: ChannelTrace, matcher: Matcher = Matcher()) -> bool:
    if template.channel != target_slice.channel:
        raise UsageError(f"channel mismatch: {template.channel} vs {target_slice.channel}")
    if matcher.kind == "exact":
        return template.runs == target_slice.runs
    return edit_distance(template, target_slice, cap=matcher.tau) <= matcher.tau


def capture_target(cfg: LabConfig, k: int, run_seed: int | None = None,
                   reveal_final_state: bool = False, noise: bool = True):
    """Run the victim once and package what the attacker observes."""
    rec = Recorder()
    res = run(k, cfg.algo, cfg.curve, rec, random.Random(cfg.seed if run_seed is None else run_seed))
    t = encode_channel(res.trace, cfg.rmap, cfg.channel, cfg.tracked)
    if noise and (cfg.noise.drop or cfg.noise.dup):
        t = add_noise(t, cfg.noise, cfg.noise.rng(k & 0xFFFFFFFF), cfg.rmap.marker_region)
    bundle = TargetBundle(cfg, t, res.output, res.final_state if reveal_final_state else None)
    return bundle, res


class OtaEngine:
    """Search state shared by the forward and backward drivers."""

    def __init__(self, target: TargetBundle, matcher: Matcher | None = None,
                 max_calls: int | None = None):
        self.t = target
        self.cfg = cfg = target.cfg
        self.c = cfg.curve
        self.algo = cfg.algo
        self.matcher = cfg.matcher if matcher is None else matcher
        self.max_calls = max_calls
        self.n = self.algo.n_digits
        self.radix = self.algo.radix
        self.table = comb_table(self.c, self.algo.window) if self.algo.algorithm == "comb" else None
        if cfg.rmap.marker_region not in cfg.tracked:
            raise UsageError("the marker region must be tracked to split iterations")
        self.slices = split_iterations(target.trace, cfg.rmap.marker_region)
        if len(self.slices) != self.algo.n_iterations:
            raise IntegrityError(f"target has {len(self.slices)} iterations, "
                                 f"expected {self.algo.n_iterations}")
        self.calls = 0
        self.tested = 0
        self.nodes = 0

    # -- template device -----------------------------------------------------------

    def _tick(self):
        self.calls += 1
        if self.max_calls is not None and self.calls > self.max_calls:
            raise _Budget()

    def encode(self, raw) -> ChannelTrace:
        return encode_channel(raw, self.cfg.rmap, self.cfg.channel, self.cfg.tracked)

    def template(self, state, guess=None):
        """One counted Process invocation: ``(outputs, encoded template)``."""
        self._tick()
        outs, raw = process_step(state, guess, self.algo, self.c, Recorder())
        return outs, self.encode(raw)

    def matches(self, tmpl: ChannelTrace, slice_no: int) -> bool:
        return match(tmpl, self.slices[slice_no - 1], self.matcher)

    def verify(self, k: int) -> bool:
        self.tested += 1
        return 0 < k < self.c.n and scalar_mul_ct(self.c, k, self.c.G) == self.t.public

    # -- forward ------------------------------------------------------------------

    def root(self) -> CandidateNode:
        c = self.c
        if self.algo.algorithm == "dbl_add_always":
            # outputs of Process(O): dbl(O) = O and madd(O, G) = G
            return CandidateNode("forward", 0, c.identity(), (), (c.identity(), c.lift(c.G)))
        if self.algo.algorithm == "ladder":
            return CandidateNode("forward", 0, (c.identity(), c.lift(c.G)), ())
        return CandidateNode("forward", 0, None, ())

    def extend_forward(self, node: CandidateNode, j: int) -> CandidateNode | None:
        """Child for digit ``j`` if its template survives, else None."""
        L = node.index + 1
        digits = node.digits + (j,)
        if self.algo.algorithm == "ladder":
            outs, tmpl = self.template(node.state, j)
            if L == 1:
                ok = outs == initial_state(self.algo, self.c, 1)
            else:
                ok = self.matches(tmpl, L - 1)
            return CandidateNode("forward", L, outs, digits) if ok else None
        if L == 1 and self.algo.algorithm == "comb":
            state = self.c.lift(self.table[j])
        else:
            state = successor(node.outs, j, self.algo, self.c, self.table)
        if L == self.n:
            self._tick()    # final inspection on the template device
            return CandidateNode("forward", L, state, digits)
        outs, tmpl = self.template(state)
        if not self.matches(tmpl, L):
            return None
        return CandidateNode("forward", L, state, digits, outs)

    def final_ok(self, node: CandidateNode) -> bool:
        state = node.state[0] if self.algo.algorithm == "ladder" else node.state
        if to_affine(self.c, state) != self.t.public:
            self.tested += 1
            return False
        return self.verify(decode(node.digits, self.radix))

    def _dfs_forward(self, node: CandidateNode):
        self.nodes += 1
        kids = [ch for j in range(self.radix) if (ch := self.extend_forward(node, j)) is not None]
        if node.index + 1 == self.n:
            for ch in kids:
                if self.final_ok(ch):
                    return ch
            return None
        for ch in kids:
            hit = self._dfs_forward(ch)
            if hit is not None:
                return hit
        return None

    # -- forward, chosen-scalar templates ---------------------------------------------

    def _scalar_template(self, digits: tuple[int, ...], slice_no: int) -> ChannelTrace | None:
        n, r = self.n, self.radix
        k = decode(digits + (0,) * (n - len(digits)), r)
        if k == 0:
            k = 1
        if self.algo.algorithm != "comb" and digits[0] != 1:
            return None
        if k >= self.c.n:
            return None
        self._tick()
        rec = Recorder()
        res = run(k, self.algo, self.c, rec, random.Random(self.calls))
        t = self.encode(res.trace)
        return split_iterations(t, self.cfg.rmap.marker_region)[slice_no - 1]

    def _dfs_scalar(self, digits: tuple[int, ...]):
        self.nodes += 1
        L = len(digits) + 1
        ladder = self.algo.algorithm == "ladder"
        kids = []
        for j in range(self.radix):
            cand = digits + (j,)
            if L == self.n and not ladder:
                if self.algo.algorithm != "comb" and cand[0] != 1:
                    continue
                self._tick()
                kids.append(cand)
                continue
            if ladder and L == 1:
                if j == 1:
                    kids.append(cand)
                continue
            tmpl = self._scalar_template(cand, L - 1 if ladder else L)
            if tmpl is not None and self.matches(tmpl, L - 1 if ladder else L):
                kids.append(cand)
        if L == self.n:
            for cand in kids:
                k = decode(cand, self.radix)
                if self.verify(k):
                    return k
            return None
        for cand in kids:
            hit = self._dfs_scalar(cand)
            if hit is not None:
                return hit
        return None

    # -- backward -------------------------------------------------------------------

    def predecessors(self, state: JacobianPoint, j: int) -> list[JacobianPoint]:
        c = self.c
        if self.algo.algorithm == "dbl_add_always":
            mids = invert_madd(c, state, c.G) if j else {state}
        else:
            mids = invert_madd(c, state, self.table[j])
        if self.algo.algorithm == "dbl_add_always":
            preds = set()
            for D in mids:
                if not D.is_identity:
                    preds |= invert_dbl(c, D)
        else:
            preds = mids
            for _ in range(self.algo.window):
                nxt = set()
                for D in preds:
                    # 2X = O only for X = O
                    nxt |= {D} if D.is_identity else invert_dbl(c, D)
                preds = nxt
        return sorted(preds, key=lambda P: P.coords())

    def extend_backward(self, node: CandidateNode, j: int) -> list[CandidateNode]:
        """Predecessors of ``node`` under digit ``j`` whose templates match."""
        i = node.index
        if node.state.is_identity:
            raise UsageError("identity state has no defined predecessor digit")
        out = []
        for P in self.predecessors(node.state, j):
            _, tmpl = self.template(P)
            if self.matches(tmpl, i - 1):
                out.append(CandidateNode("backward", i - 1, P, (j,) + node.digits))
        return out

    def anchor_digit(self, node: CandidateNode) -> int | None:
        A = to_affine(self.c, node.state)
        if self.algo.algorithm == "dbl_add_always":
            return 1 if A == self.c.G else None
        try:
            return self.table.index(A)
        except ValueError:
            return None

    def _dfs_backward(self, node: CandidateNode):
        self.nodes += 1
        if node.state.is_identity:
            # R_i = O forces every earlier digit to zero
            k = decode((0,) * node.index + node.digits, self.radix)
            return k if self.verify(k) else None
        if node.index == 1:
            d1 = self.anchor_digit(node)
            if d1 is None:
                return None
            k = decode((d1,) + node.digits, self.radix)
            return k if self.verify(k) else None
        kids = []
        for j in range(self.radix):
            kids.extend(self.extend_backward(node, j))
        for ch in kids:
            hit = self._dfs_backward(ch)
            if hit is not None:
                return hit
        return None


def _finish(rep: AttackReport, eng: OtaEngine, k: int | None, t0: float, reason: str = ""):
    rep.template_calls = eng.calls
    rep.solutions_tested = eng.tested
    rep.nodes = eng.nodes
    rep.wall_time = time.perf_counter() - t0
    rep.k = k
    rep.success = k is not None
    rep.reason = reason or ("recovered" if k is not None else "search exhausted")
    return rep


def _deep(fn, *args):
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10000))
    try:
        return fn(*args)
    finally:
        sys.setrecursionlimit(limit)


def run_forward(target: TargetBundle, mode: str = "state", matcher: Matcher | None = None,
                strict: bool = True, max_calls: int | None = None) -> AttackReport:
    """Depth-first extend-and-prune from the known initial state (or chosen scalars)."""
    if mode not in ("state", "scalar"):
        raise UsageError(f"mode must be 'state' or 'scalar', got {mode!r}")
    t0 = time.perf_counter()
    eng = OtaEngine(target, matcher, max_calls)
    rep = AttackReport("forward", mode)
    try:
        if mode == "state":
            hit = _deep(eng._dfs_forward, eng.root())
            k = None if hit is None else decode(hit.digits, eng.radix)
        else:
            k = _deep(eng._dfs_scalar, ())
    except _Budget:
        return _finish(rep, eng, None, t0, f"call budget {max_calls} exhausted")
    _finish(rep, eng, k, t0)
    if k is None and strict and eng.matcher.kind == "exact":
        raise IntegrityError("no candidate survived exact matching; target and template "
                             "implementation are inconsistent")
    return rep


def run_backward(target: TargetBundle, matcher: Matcher | None = None,
                 max_calls: int | None = None) -> AttackReport:
    """Invert Process from the final projective state, last iteration first."""
    if target.final_state is None:
        raise UsageError("backward attack needs the final projective state")
    if target.cfg.algo.algorithm not in ("dbl_add_always", "comb"):
        raise UsageError("backward attack supports dbl_add_always and comb only")
    t0 = time.perf_counter()
    eng = OtaEngine(target, matcher, max_calls)
    # iterations are consumed last to first
    rep = AttackReport("backward", "state")
    root = CandidateNode("backward", eng.n, target.final_state, ())
    try:
        k = _deep(eng._dfs_backward, root)
    except _Budget:
        return _finish(rep, eng, None, t0, f"call budget {max_calls} exhausted")
    return _finish(rep, eng, k, t0)


def reversed_slices(target: TargetBundle) -> list[ChannelTrace]:
    """Iteration slices in the order the backward search consumes them."""
    return split_iterations(target.trace, target.cfg.rmap.marker_region)[::-1]
