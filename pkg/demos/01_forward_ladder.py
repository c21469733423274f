"""
Forward attack on a Montgomery ladder
=====================================

Capture one copycat trace of a P-256 ladder run, then recover the scalar
bit by bit by replaying candidate Process steps and comparing traces.
"""

import random

from otalab.attack import capture_target, run_forward
from otalab.config import load_config
from otalab.scalarmul import random_scalar

cfg = load_config("configs/ladder.json")
k = random_scalar(cfg.algo, cfg.curve.n, random.Random(7))
print("secret  ", hex(k))

# %%
# One run of the victim; the attacker keeps the trace and the public output.
target, run = capture_target(cfg, k)
print("events  ", len(target.trace))
print("public x", hex(run.output.x.value))

# %%
# Two candidates per bit, 256 bits: 512 template runs in total.
rep = run_forward(target)
print("found   ", hex(rep.k), rep.k == k)
print("calls   ", rep.template_calls, "time %.2fs" % rep.wall_time)
