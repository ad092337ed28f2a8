"""
The window of good trade-off parameters
=======================================

For a fixed support the minimum coefficient condition caps gamma from above
(large penalties shrink true atoms to zero) while the subset coherence
condition bounds it from below (small penalties let the distortion recruit
outside atoms). We compute that window exactly and check it against a sweep.
"""

import numpy as np

from nnsparse import DistortionSpec, InstanceSpec, gamma_sweep, generate

inst = generate(InstanceSpec(
    L=40, N=8, J=3, coherence_target=0.6, seed=4,
    distortion=DistortionSpec.parse("gaussian:sigma=0.01"),
))
A, y = inst.dictionary, inst.observation
print("true support:", inst.support.tolist())

scale = np.max(np.abs(A.T @ y))
grid = scale * np.linspace(1e-3, 1.0, 1000)
sw = gamma_sweep(inst, grid)

###############################################################################
# The predicted interval and the first and last grid values where the
# solver returns exactly the true support.
print("predicted interval:", sw.interval)
print("empirical success :", (sw.success_lower, sw.success_upper))
print("grid step         :", grid[1] - grid[0])

###############################################################################
# A coarse text plot: '#' where recovery succeeds, 'f' for false alarms,
# 'm' for missed atoms.
row = []
for k in range(0, grid.size, 20):
    row.append("#" if sw.correct[k] else ("f" if sw.false_alarm[k] else "m"))
print("".join(row))
