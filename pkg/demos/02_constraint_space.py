"""The space of constraint sets: encoding, simplification, cost, actions.

A constraint set C is a collection of qubit subsets; each subset becomes
one PSD block of the relaxation.  States of the search MDP are bit
vectors over a candidate pool, the cost p counts the free parameters of
the SDP, and a budget bounds which states are admissible.
"""

from certbound import (
    ActionKind, ActionSpec, ConstraintSet, Geometry, apply_action,
    candidate_pool, cost, encode, minimal_set, partial_order_leq, simplify,
)

n = 6
budget = 189  # "half of the 3-body windows" preset at n = 6
pool = candidate_pool(n, budget, Geometry.RING, max_body=3)
print(f"candidates ({pool.size}):", list(pool.candidates))

# the initial state activates nothing: one-body marginals only, 3 free
# parameters per qubit
c0 = minimal_set(n)
print("minimal set encodes to", pool.bits_to_text(encode(c0, pool)),
      "with cost", cost(c0))

# adding a window sets its bit; contained subsets are absorbed at cost time
c1 = ConstraintSet(n, [(0, 1), (0, 1, 2)])
print("{01, 012} simplifies to", simplify(c1).sorted_subsets(), "cost", cost(c1))

# removing a 3-body window splits it into its 2-body pieces
c2 = ConstraintSet(n, [(1, 2, 3)])
after = apply_action(c2, ActionSpec(ActionKind.REMOVE, pool.index((1, 2, 3))), pool)
print("remove {123} ->", after.sorted_subsets())

# the containment order: bounds are monotone along it
weak = ConstraintSet(n, [(0, 1), (2, 3)])
strong = ConstraintSet(n, [(0, 1, 2), (2, 3, 4)])
print("weak <= strong:", partial_order_leq(weak, strong))
print("strong <= weak:", partial_order_leq(strong, weak))

# serialisation round trip
text = strong.to_text()
print("text form:", text, "->", ConstraintSet.from_text(n, text) == strong)
