"""The search MDP: states, actions, rewards, and the bound cache.

The reward of a state compares its bound and cost against running
references (best/worst bound, cheapest/costliest attainment of the best
bound).  The first state to improve the best bound scores 1; matching
states are ranked by cheapness; everything else by the shaped distance
to the best bound.
"""

import numpy as np

from certbound import Geometry, RelaxationEnv, build_xx, candidate_pool
from certbound.environment import RewardLedger

# the ledger in isolation
led = RewardLedger(d=2.0)
for beta, p in [(-18.0, 18), (-14.5, 33), (-12.0, 90), (-12.0, 126)]:
    led.update(beta, p)
    print(f"after ({beta:6.1f}, p={p:3d}): "
          f"R = {led.reward(beta, p):.3f}  refs = {led.snapshot()}")

# a short scripted walk through the environment
h = build_xx(6, 1.0, 1.0)
pool = candidate_pool(6, 189, Geometry.RING, 3)
env = RelaxationEnv(h, pool)
bits = env.reset()
print("\ninitial state:", pool.bits_to_text(bits))

rng = np.random.default_rng(0)
for step in range(8):
    mask = env.valid_mask()
    choices = [i for i, ok in enumerate(mask) if ok]
    rec = env.step(int(rng.choice(choices)))
    print(f"step {step}: -> {pool.bits_to_text(rec.state_after)}  "
          f"beta = {rec.beta:9.5f}  p = {rec.p:3d}  R = {rec.reward:.3f}  "
          f"cached = {rec.cache_hit}")

print(f"\nunique states visited: {env.unique_visits}, "
      f"actual SDP solves: {env.solve_count}")
print("the gap between the two is the bound cache at work")
