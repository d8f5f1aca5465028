"""How fast does the maze agent learn as the eligibility retention changes?

With no retention the agent only credits the last move before a reward, so the
path to the cheese has to be rediscovered step by step.  With full retention
every move of a long wandering episode gets the same credit, including the
detours.  Somewhere in between the credit fades just fast enough.
"""

import numpy as np

from neoheb.tasks import maze as mz

SEEDS = range(20)

for n in (5, 7):
    print(f"{n}x{n} grid, crossbar synapses, {len(SEEDS)} seeds")
    for gamma in (0.0, 0.25, 0.5, 0.75, 1.0):
        cfg = mz.MazeConfig(n=n, gamma=gamma)
        eps = [mz.run_training(cfg, "hardware", seed=s, layout_seed=s).episodes_to_benchmark
               for s in SEEDS]
        print(f"  gamma={gamma:4.2f}  episodes to benchmark {np.mean(eps):6.1f} +- {np.std(eps, ddof=1):5.1f}")

# device spread slows learning down
print("5x5, gamma=0.75, growing device-to-device and cycle-to-cycle spread")
for v in (0.0, 0.5, 1.0):
    hw = mz.HardwareMaze(variability=v)
    eps = [mz.run_training(mz.MazeConfig(n=5, gamma=0.75), "hardware", seed=s, hw=hw,
                           layout_seed=s).episodes_to_benchmark for s in SEEDS]
    print(f"  spread={v:3.1f}  episodes to benchmark {np.mean(eps):6.1f}")
