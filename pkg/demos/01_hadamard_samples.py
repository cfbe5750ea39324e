"""Decode a Hadamard codeword bit from random samples instead of adaptive queries.

The local decoder for the Hadamard code reads two positions x[a] and x[a ^ e_i].
We turn it into a sample-based algorithm. Each coordinate is revealed
independently with probability p, and the algorithm votes with every decision
path that the revealed coordinates complete.
"""

from collections import Counter

from robustlocal.sampler import preprocess, run_sample_based
from robustlocal.zoo import get_instance, hadamard_encode

inst = get_instance("hadamard_k3")
pre = preprocess(inst.algorithm)
cfg = pre.config
print(f"{inst.name}: n={cfg.n}, q={cfg.q}, sampling probability p={cfg.p:.3f} (uncapped {cfg.p_raw:.2f})")

# At n=8 the decoding radius rounds down to zero, so only exact codewords carry a label.
for message in [(1, 0, 1), (0, 1, 1)]:
    word = hadamard_encode(message)
    print("message", message, "codeword", "".join(map(str, word)))
    for z in pre.zs:
        outs = Counter(run_sample_based(pre, word, z, seed=s).output for s in range(300))
        print(f"  bit {z}: expected {message[z]}, correct in {outs[message[z]]}/300 runs")

corrupted = list(hadamard_encode((1, 0, 1)))
corrupted[5] ^= 1
print("one flipped position gives label", inst.spec.membership(0, tuple(corrupted)), "(outside the promise)")
