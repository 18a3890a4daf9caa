"""The search MDP: states are constraint sets, actions flip candidates,
and the reward scores a state's certified bound against running references.

Rewards follow the best/worst referencing scheme: the ledger tracks the
best and worst bounds seen (beta_max, beta_min) and the cheapest and
costliest parameter counts at which beta_max was attained (p_best,
p_worst).  A state is scored after the ledger has absorbed it, so the
first state to improve the best bound always scores 1.

Every distinct (simplified) constraint set is solved once; repeat visits
are served from a cache that may be shared between environments working
on the same Hamiltonian and options.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    ActionSpec, CandidatePool, apply_action, cost, decode, encode, flip_action,
    minimal_set, simplify, valid_action_mask,
)
from .hamiltonian import LocalHamiltonian
from .relaxation import RelaxationOptions, solve_bound
from .solver import SolveStatus

DEFAULT_SHAPE_EXPONENT = 2.0
BETA_TIE_TOL = 1e-7
FAILED_BETA = -math.inf


class StopSearch(Exception):
    """Raised by a visit hook to end a search early."""


@dataclass
class RewardLedger:
    """Running references for the reward function."""

    d: float = DEFAULT_SHAPE_EXPONENT
    tie_tol: float = BETA_TIE_TOL
    beta_max: float = -math.inf
    beta_min: float = math.inf
    p_best: int = 0
    p_worst: int = 0

    @property
    def empty(self) -> bool:
        return not math.isfinite(self.beta_max)

    def update(self, beta: float, p: int) -> None:
        """Absorb an observed (bound, cost) pair.  beta_max never decreases,
        beta_min never increases; the p references reset on a strict
        improvement of the best bound and widen on ties."""
        if not math.isfinite(beta):
            return
        if self.empty:
            self.beta_max = self.beta_min = beta
            self.p_best = self.p_worst = p
            return
        if beta > self.beta_max + self.tie_tol:
            self.beta_max = beta
            self.p_best = self.p_worst = p
        elif beta >= self.beta_max - self.tie_tol:
            self.beta_max = max(self.beta_max, beta)
            self.p_best = min(self.p_best, p)
            self.p_worst = max(self.p_worst, p)
        self.beta_min = min(self.beta_min, beta)

    def reward(self, beta: float, p: int) -> float:
        """Score in [0, 1].  States matching the best bound are ranked by
        cheapness (p_best/p); the rest by the shaped gap to the best bound.
        Failed solves (non-finite beta) score 0."""
        if not math.isfinite(beta) or self.empty or p <= 0:
            return 0.0
        prefactor = self.p_best / self.p_worst
        if beta >= self.beta_max - self.tie_tol:
            return prefactor * (self.p_worst / p)
        # beta < beta_max - tie_tol implies a nondegenerate denominator
        ratio = (beta - self.beta_min) / (self.beta_max - self.beta_min)
        return prefactor * max(0.0, ratio) ** self.d

    def snapshot(self) -> dict:
        return {"beta_max": self.beta_max, "beta_min": self.beta_min,
                "p_best": self.p_best, "p_worst": self.p_worst, "d": self.d}


@dataclass
class EpisodeConfig:
    """Per-run knobs: episode length, reward shape, cache policy."""

    length: int
    d: float = DEFAULT_SHAPE_EXPONENT
    use_cache: bool = True

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("episode length must be at least 1")


def episode_length(n: int, high_budget: bool) -> int:
    """Length of the order of the system size: 0.7n at a low budget,
    1.2n at a high one."""
    factor = 1.2 if high_budget else 0.7
    return max(2, round(factor * n))


@dataclass
class StepRecord:
    state_before: tuple
    action: ActionSpec
    state_after: tuple
    beta: float
    p: int
    reward: float
    cache_hit: bool

    def to_json(self) -> str:
        return json.dumps({
            "before": "".join(map(str, self.state_before)),
            "action": self.action.kind.value,
            "target": self.action.target,
            "after": "".join(map(str, self.state_after)),
            "beta": self.beta if math.isfinite(self.beta) else None,
            "p": self.p,
            "reward": self.reward,
            "cache_hit": self.cache_hit,
        })


@dataclass
class VisitRecord:
    bits: tuple
    beta: float
    p: int
    first_visit: bool


class BoundCache:
    """Bound memo keyed by the simplified constraint set; shareable across
    environments exploring the same Hamiltonian and options."""

    def __init__(self):
        self._store = {}

    def __len__(self):
        return len(self._store)

    @staticmethod
    def key(c) -> tuple:
        return tuple(simplify(c).sorted_subsets())

    def get(self, key):
        return self._store.get(key)

    def put(self, key, value):
        self._store[key] = value


class RelaxationEnv:
    """Deterministic MDP over a candidate pool with memoised bound solves."""

    def __init__(self, h: LocalHamiltonian, pool: CandidatePool,
                 opts: RelaxationOptions = RelaxationOptions(),
                 d: float = DEFAULT_SHAPE_EXPONENT, cache: BoundCache | None = None,
                 use_cache: bool = True, log_stream=None, visit_hook=None):
        if h.n != pool.n:
            raise ValueError("pool and Hamiltonian disagree on system size")
        self.h = h
        self.pool = pool
        self.opts = opts
        self.ledger = RewardLedger(d=d)
        self.cache = cache if cache is not None else BoundCache()
        self.use_cache = use_cache
        self.log_stream = log_stream
        self.visit_hook = visit_hook
        self.visit_log: list = []
        self._seen: set = set()
        self._bits = None
        self.solve_count = 0
        self._key_memo: dict = {}
        self._mask_memo: dict = {}
        self._neighbor_memo: dict = {}

    # -- state handling ------------------------------------------------------

    @property
    def zero_state(self) -> tuple:
        return (0,) * self.pool.size

    @property
    def state(self) -> tuple:
        return self._bits

    @property
    def n_actions(self) -> int:
        return self.pool.size + 1

    def reset(self) -> tuple:
        """Move to the minimal constraint set.  The ledger, cache and visit
        log persist across episodes within this environment's lifetime."""
        self._bits = self.zero_state
        self.evaluate(self._bits)
        return self._bits

    def valid_mask(self, bits=None):
        bits = self._bits if bits is None else tuple(bits)
        mask = self._mask_memo.get(bits)
        if mask is None:
            mask = tuple(valid_action_mask(bits, self.pool))
            self._mask_memo[bits] = mask
        return mask

    def neighbor(self, bits, idx: int) -> tuple:
        """State reached by flipping candidate `idx` (memoised; adds are a
        plain bit set, removes go through the splitting rule)."""
        bits = tuple(bits)
        key = (bits, idx)
        out = self._neighbor_memo.get(key)
        if out is None:
            if bits[idx]:
                c = apply_action(decode(bits, self.pool),
                                 flip_action(bits, idx, self.pool), self.pool)
                out = encode(c, self.pool)
            else:
                out = bits[:idx] + (1,) + bits[idx + 1:]
            self._neighbor_memo[key] = out
        return out

    # -- solving and scoring --------------------------------------------------

    def evaluate(self, bits) -> tuple:
        """Bound, cost and cache status for a state; updates ledger and logs
        the visit.  Failed solves are memoised with a -inf sentinel and are
        never absorbed into the ledger."""
        bits = tuple(bits)
        key = self._key_memo.get(bits)
        if key is None:
            key = BoundCache.key(decode(bits, self.pool))
            self._key_memo[bits] = key
        hit = False
        entry = self.cache.get(key) if self.use_cache else None
        if entry is not None:
            beta, p = entry
            hit = True
        else:
            res = solve_bound(self.h, decode(bits, self.pool), self.opts)
            self.solve_count += 1
            ok = res.status is not SolveStatus.FAILED and res.dual_certified \
                and math.isfinite(res.beta)
            beta = res.beta if ok else FAILED_BETA
            p = res.p
            if self.use_cache:
                self.cache.put(key, (beta, p))
        self.ledger.update(beta, p)
        first = bits not in self._seen
        if first:
            self._seen.add(bits)
        self.visit_log.append(VisitRecord(bits, beta, p, first))
        if self.visit_hook is not None:
            self.visit_hook(bits, beta, p, first)
        return beta, p, hit

    @property
    def unique_visits(self) -> int:
        return len(self._seen)

    def step(self, action) -> StepRecord:
        """Apply an action (ActionSpec or flat index), land on the next
        state, refresh the ledger with its bound, then score it."""
        if self._bits is None:
            raise RuntimeError("environment must be reset before stepping")
        if not isinstance(action, ActionSpec):
            action = flip_action(self._bits, int(action), self.pool)
        before = self._bits
        c_after = apply_action(decode(before, self.pool), action, self.pool)
        after = encode(c_after, self.pool)
        beta, p, hit = self.evaluate(after)
        reward = self.ledger.reward(beta, p)
        rec = StepRecord(before, action, after, beta, p, reward, hit)
        self._bits = after
        if self.log_stream is not None:
            self.log_stream.write(rec.to_json() + "\n")
        return rec

    def state_cost(self, bits) -> int:
        return cost(decode(bits, self.pool))

    def spawn(self, **overrides) -> "RelaxationEnv":
        """Fresh environment on the same problem (own ledger and visit log),
        sharing the bound cache unless overridden."""
        kw = dict(h=self.h, pool=self.pool, opts=self.opts, d=self.ledger.d,
                  cache=self.cache, use_cache=self.use_cache)
        kw.update(overrides)
        return RelaxationEnv(**kw)


def reset_state(pool: CandidatePool):
    """The encoded initial state (all candidates inactive)."""
    return encode(minimal_set(pool.n), pool)
