"""Drive the episodic environment by hand: a random policy vs a fixed plan.

Shows the observation layout, the reward stream, and the frozen info keys.
The same API hosts multi-agent control, where each intersection of a grid
observes its own neighborhood.  Run:  python demos/03_environment_rollout.py
"""

import numpy as np

from ctmsim import make_env

env = make_env("single-intersection-v0", reward_kind="queue", horizon=120)
obs, info = env.reset(seed=0)
print(f"observation ({len(obs)} dims): one-hot phase, per-approach density, "
      f"queue flags")
print("  t=0:", np.round(obs, 3))

rng = np.random.default_rng(0)
total_random = 0.0
for _ in range(120):
    action = [int(rng.integers(0, 2))]
    obs, reward, terminated, truncated, info = env.step(action)
    total_random += reward
print(f"random policy:     episode reward {total_random:9.1f}, "
      f"throughput {info['throughput']:.0f}")

env.reset(seed=0)
total_plan = 0.0
for k in range(120):
    phase = (k * 5 // 30) % 2          # a 30 s fixed split, as a policy
    _, reward, _, _, info = env.step([phase])
    total_plan += reward
print(f"fixed-split plan:  episode reward {total_plan:9.1f}, "
      f"throughput {info['throughput']:.0f}")

print("\nmulti-agent view of a 4x4 grid:")
menv = make_env("grid-4x4-v0", multi_agent=True)
obs, _ = menv.reset()
dims = {aid: len(v) for aid, v in obs.items()}
print(f"  {menv.n_agents} agents; observation dims by node kind: "
      f"corners 14, edges 12, centers 10")
print("  example:", dict(list(dims.items())[:4]))
