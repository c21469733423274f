"""
Backward attack past a randomized start
=======================================

Randomizing the initial projective state hides R_0 from a forward search, but
the final state still pins every earlier one.  Randomizing the final state
as well closes that route.
"""

import random

from otalab.attack import capture_target, run_backward, run_forward
from otalab.config import load_config
from otalab.scalarmul import random_scalar

cfg = load_config("configs/dac_randomized.json")
k = random_scalar(cfg.algo, cfg.curve.n, random.Random(11))

target, _ = capture_target(cfg, k, reveal_final_state=True)

# %%
# Forward first: the very first template already disagrees with the target.
fwd = run_forward(target, strict=False)
print("forward  success", fwd.success, "calls", fwd.template_calls, fwd.reason)

# %%
# Backward: invert each Process through square, cube and fourth roots.
back = run_backward(target)
print("backward success", back.success, "k ok", back.k == k, "calls", back.template_calls)

# %%
# Same victim with the final state rerandomized before conversion.
hard = load_config("configs/dac_final_randomized.json")
target, _ = capture_target(hard, k, reveal_final_state=True)
rep = run_backward(target)
print("final-randomized success", rep.success, "k", rep.k, "reason", rep.reason)
