"""Train the synthetic sequence classifier with float weights and on a
crossbar, then degrade the crossbar one non-ideality at a time."""

import numpy as np

from neoheb import device as dv
from neoheb.tasks import sequence as sq

cfg = sq.SeqTaskConfig()
ds = sq.generate_sequence_dataset(cfg)
SEEDS = range(5)


def mean_acc(mode, hw=None):
    return 100 * np.mean([sq.run_sequence(cfg, mode, hw, seed=s, dataset=ds).final_test for s in SEEDS])


print(f"{cfg.n_out} classes, {cfg.frames} frames per sample, {len(SEEDS)} seeds")
print(f"float weights           {mean_acc('ideal'):6.2f} %")
for bits in (None, 8, 6, 4):
    hw = sq.HardwareConfig(device=dv.DeviceParams(bits=bits))
    label = "continuous" if bits is None else f"{bits} bits"
    print(f"crossbar, {label:12s}  {mean_acc('hardware', hw):6.2f} %")

# the thermal trace forgets: lambda is the per-step retention of a heater
for lam in (0.5, 0.9, 0.99, 1.0):
    print(f"retention {lam:5.3f}         {mean_acc('hardware', sq.HardwareConfig(gamma=lam)):6.2f} %")

# heat leaking into the four nearest neighbours
for c in (0.05, 0.1):
    print(f"crosstalk {c:4.2f}          {mean_acc('hardware', sq.HardwareConfig(crosstalk=c)):6.2f} %")
