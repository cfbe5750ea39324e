"""Split a collection of query sets into daisies.

A daisy is a group of sets that share a small kernel and whose remaining
coordinates (petals) rarely overlap. The sampler counts votes one daisy at a
time, so low petal overlap keeps those counts concentrated.
"""

import numpy as np

from robustlocal.daisy import check_partition, partition

rng = np.random.default_rng(1)
n, q = 40, 3
hub = [0, 1]
sets = [tuple(sorted(set(hub[: rng.integers(0, 3)]) | set(rng.choice(range(2, n), q, replace=False).tolist())))[:q]
        for _ in range(120)]
part = partition(sets, n, q)
for j in range(q + 1):
    print(f"D_{j}: {len(part.daisies[j]):3d} sets, kernel K_{j} has {len(part.kernels[j])} coordinates")
print("invariants hold:", check_partition(part)["ok"])
