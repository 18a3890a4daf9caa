"""The constraint space: sets of qubit subsets, their poset, cost and actions.

A constraint set C is a collection of qubit subsets S with |S| >= 2; the
one-body sets are always implicit.  Constraint sets are the states of
the search MDP: actions flip candidate subsets on and off, subject to a
budget on the free-parameter count of the resulting SDP.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

COST_ONE_BODY = 3  # free real parameters of a Hermitian unit-trace qubit state


class Geometry(enum.Enum):
    CHAIN = "chain"
    RING = "ring"
    ALL_SUBSETS = "all_subsets"


class ActionKind(enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    STAY = "stay"


@dataclass(frozen=True)
class ActionSpec:
    kind: ActionKind
    target: int | None = None  # candidate index; absent for STAY

    def __post_init__(self):
        if self.kind is ActionKind.STAY:
            if self.target is not None:
                raise ValueError("stay takes no target")
        elif self.target is None or self.target < 0:
            raise ValueError("add/remove need a candidate index")


class ConstraintSet:
    """An immutable set of sorted qubit subsets on an n-qubit system."""

    __slots__ = ("n", "subsets", "_hash")

    def __init__(self, n: int, subsets=()):
        canon = []
        for s in subsets:
            s = tuple(sorted(set(s)))
            if len(s) < 2:
                raise ValueError(f"subset {s} has fewer than 2 sites (1-body sets are implicit)")
            if s[0] < 0 or s[-1] >= n:
                raise ValueError(f"subset {s} outside [0, {n})")
            canon.append(s)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "subsets", frozenset(canon))
        object.__setattr__(self, "_hash", hash((n, self.subsets)))

    def __setattr__(self, *a):
        raise AttributeError("ConstraintSet is immutable")

    def __eq__(self, other):
        return isinstance(other, ConstraintSet) and self.n == other.n \
            and self.subsets == other.subsets

    def __hash__(self):
        return self._hash

    def __iter__(self):
        return iter(self.sorted_subsets())

    def __len__(self):
        return len(self.subsets)

    def __repr__(self):
        return f"ConstraintSet(n={self.n}, {self.sorted_subsets()})"

    def sorted_subsets(self):
        return sorted(self.subsets, key=lambda s: (len(s), s))

    def covered(self) -> set:
        out = set()
        for s in self.subsets:
            out.update(s)
        return out

    def to_text(self) -> str:
        """Serialise as a JSON-style nested list, e.g. "[[0,1,2],[2,3]]"."""
        return json.dumps([list(s) for s in self.sorted_subsets()], separators=(",", ":"))

    @classmethod
    def from_text(cls, n: int, text: str) -> "ConstraintSet":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed subset list: {exc}") from exc
        if not isinstance(data, list) or not all(isinstance(s, list) for s in data):
            raise ValueError("subset list must be a list of lists")
        return cls(n, [tuple(int(q) for q in s) for s in data])


def minimal_set(n: int) -> ConstraintSet:
    """The smallest allowed constraint set (1-body marginals only)."""
    return ConstraintSet(n, ())


def simplify(c: ConstraintSet) -> ConstraintSet:
    """Drop every subset contained in another subset of the collection."""
    subs = list(c.subsets)
    keep = [s for s in subs
            if not any(s != t and set(s) <= set(t) for t in subs)]
    return ConstraintSet(c.n, keep)


def cost(c: ConstraintSet) -> int:
    """Free-parameter count p of the associated SDP.

    Every simplified subset S contributes the 4^|S| - 1 real degrees of
    freedom of a Hermitian unit-trace block; every qubit not covered by
    any subset contributes the 3 parameters of its implicit 1-body RDM.
    """
    simp = simplify(c)
    p = sum(4 ** len(s) - 1 for s in simp.subsets)
    return p + COST_ONE_BODY * (c.n - len(simp.covered()))


def partial_order_leq(c1: ConstraintSet, c2: ConstraintSet) -> bool:
    """C <= C' iff every S in C is contained in some S' in C'.

    The minimal (empty) set precedes everything.  Bounds are monotone
    along this order.
    """
    if c1.n != c2.n:
        raise ValueError("constraint sets live on different system sizes")
    return all(any(set(s) <= set(t) for t in c2.subsets) for s in c1.subsets)


@dataclass(frozen=True)
class CandidatePool:
    """The ordered candidate basis for state encoding, plus the budget.

    Candidates are ordered by size then lexicographically; the pool
    excludes 1-body sets and any subset whose solo block cost 4^|S| - 1
    already exceeds the budget.
    """

    n: int
    candidates: tuple
    budget: int
    geometry: Geometry
    max_body: int

    @property
    def size(self) -> int:
        return len(self.candidates)

    def index(self, subset) -> int:
        subset = tuple(sorted(subset))
        try:
            return self.candidates.index(subset)
        except ValueError:
            raise KeyError(f"{subset} is not in the candidate pool") from None

    def encode(self, c: ConstraintSet):
        """One bit per candidate; all-zeros encodes the minimal set."""
        bits = [0] * self.size
        for s in c.subsets:
            bits[self.index(s)] = 1
        return tuple(bits)

    def decode(self, bits) -> ConstraintSet:
        if len(bits) != self.size:
            raise ValueError(f"bit-vector length {len(bits)} != pool size {self.size}")
        return ConstraintSet(self.n, [self.candidates[i] for i, b in enumerate(bits) if b])

    @staticmethod
    def bits_to_text(bits) -> str:
        return "".join("1" if b else "0" for b in bits)

    @staticmethod
    def bits_from_text(text: str):
        if set(text) - {"0", "1"}:
            raise ValueError(f"invalid bit string {text!r}")
        return tuple(int(ch) for ch in text)


def _windows(n: int, size: int, wrap: bool):
    if size > n:
        return []
    starts = range(n) if wrap else range(n - size + 1)
    seen, out = set(), []
    for s in starts:
        w = tuple(sorted((s + k) % n for k in range(size)))
        if len(set(w)) == size and w not in seen:
            seen.add(w)
            out.append(w)
    return out


def candidate_pool(n: int, budget: int, geometry: Geometry = Geometry.RING,
                   max_body: int = 4) -> CandidatePool:
    """Enumerate the allowed candidate subsets for a system and budget.

    Chain/Ring geometries use contiguous windows of sizes 2..max_body
    (wrapping only for Ring); AllSubsets uses every subset of those
    sizes.  A candidate whose solo cost exceeds the budget is excluded.
    """
    if n < 2:
        raise ValueError("need at least two sites")
    if max_body > 4:
        raise ValueError("max_body above 4 is outside dense-block reach")
    cands = []
    for size in range(2, max_body + 1):
        if 4**size - 1 > budget:
            continue
        if geometry is Geometry.ALL_SUBSETS:
            import itertools
            cands.extend(itertools.combinations(range(n), size))
        else:
            cands.extend(_windows(n, size, wrap=(geometry is Geometry.RING)))
    cands.sort(key=lambda s: (len(s), s))
    if not cands:
        raise ValueError(f"budget {budget} admits no 2-body constraint (needs >= 15)")
    return CandidatePool(n, tuple(cands), budget, geometry, max_body)


def encode(c: ConstraintSet, pool: CandidatePool):
    return pool.encode(c)


def decode(bits, pool: CandidatePool) -> ConstraintSet:
    return pool.decode(bits)


def apply_action(c: ConstraintSet, a: ActionSpec, pool: CandidatePool) -> ConstraintSet:
    """Deterministic MDP transition.

    Add inserts a candidate (respecting the budget); Remove deletes an
    active subset and re-inserts its immediate lower-degree components,
    i.e. every size-(|S|-1) subset of S that exists in the pool and is
    not already absorbed by some other active subset; Stay does nothing.
    """
    if a.kind is ActionKind.STAY:
        return c
    target = pool.candidates[a.target]
    active = set(c.subsets)
    if a.kind is ActionKind.ADD:
        if target in active:
            raise ValueError(f"add of already-active constraint {target}")
        new = ConstraintSet(c.n, active | {target})
        if cost(new) > pool.budget:
            raise ValueError(
                f"adding {target} gives cost {cost(new)} above budget {pool.budget}")
        return new
    if target not in active:
        raise ValueError(f"remove of inactive constraint {target}")
    active.discard(target)
    if len(target) > 2:
        import itertools
        others = list(active)
        for piece in itertools.combinations(target, len(target) - 1):
            if piece not in pool.candidates:
                continue
            if any(set(piece) <= set(t) for t in others):
                continue  # absorbed: some active subset already contains it
            active.add(piece)
    return ConstraintSet(c.n, active)


def valid_action_mask(bits, pool: CandidatePool):
    """Boolean mask over the flip actions 0..size-1 plus stay at index size.

    A flip of an inactive candidate is an Add (valid if within budget);
    a flip of an active candidate is a Remove (always valid).
    """
    c = pool.decode(bits)
    mask = [False] * (pool.size + 1)
    mask[pool.size] = True  # stay
    base = set(c.subsets)
    for i, cand in enumerate(pool.candidates):
        if bits[i]:
            mask[i] = True
        else:
            mask[i] = cost(ConstraintSet(pool.n, base | {cand})) <= pool.budget
    return mask


def flip_action(bits, index: int, pool: CandidatePool) -> ActionSpec:
    """Interpret "flip candidate index" (or stay) as an ActionSpec."""
    if index == pool.size:
        return ActionSpec(ActionKind.STAY)
    kind = ActionKind.REMOVE if bits[index] else ActionKind.ADD
    return ActionSpec(kind, index)
