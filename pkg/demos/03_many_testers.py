"""Test several properties at once with one shared sample stream.

Each partial tester is first made sample-based. The composite tester then
draws a single sample per round and feeds it to all of them, so the sample
cost does not grow with the number of properties.
"""

from robustlocal.sampler import WordOracle
from robustlocal.zoo import get_instance, map_to_tester

group = [get_instance(n) for n in ("matching_a_n6", "matching_b_n6", "matching_c_n6")]
ct = map_to_tester(group)
print(f"{len(group)} properties, m={ct.m}, {ct.repetitions} rounds")

for x in [(1, 1, 0, 0, 1, 1), (1, 0, 0, 1, 1, 1), (0, 1, 0, 1, 0, 1)]:
    oracle = WordOracle(x)
    res = ct.run(oracle, seed=0)
    print(f"  x={''.join(map(str, x))}: label={ct.label(x)}, accept={res.accept}, samples drawn={oracle.sampling_steps}")
