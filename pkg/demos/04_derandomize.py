"""Shrink the randomness of a local algorithm to a small explicit support.

prepare() amplifies the success probability and then keeps a random subset of
the decision trees that is checked against every input. The result is an
algorithm with a few thousand trees and error at most 2 sigma.
"""

from fractions import Fraction

from robustlocal.core import all_words
from robustlocal.oracle import exact_output_dist
from robustlocal.transforms import prepare
from robustlocal.zoo import get_instance

inst = get_instance("all_equal_n8")
red, rep = prepare(inst.algorithm, seed=0)
print(f"support {red.support_size(0)} trees, query complexity {rep.query_complexity}")
worst = Fraction(0)
for row in all_words(inst.n):
    x = tuple(int(a) for a in row)
    label = inst.spec.membership(0, x)
    if label >= 0:
        worst = max(worst, 1 - Fraction(exact_output_dist(red, 0, x).get(label, 0)))
print(f"worst exact error over all labelled inputs: {worst}")
