"""Certified ground-state energy bounds from marginal-compatibility SDP
relaxations, with reinforcement-learning, breadth-first and Monte-Carlo
search over the space of relaxations.

The pipeline: build a :class:`~certbound.hamiltonian.LocalHamiltonian`,
pick a constraint set (a collection of qubit subsets), and
:func:`~certbound.relaxation.solve_bound` returns a certified lower
bound on the ground-state energy together with its free-parameter cost.
The search layer explores the space of constraint sets under a budget.
"""

from .constraints import (
    ActionKind, ActionSpec, CandidatePool, ConstraintSet, Geometry,
    apply_action, candidate_pool, cost, decode, encode, minimal_set,
    partial_order_leq, simplify,
)
from .environment import (
    BoundCache, EpisodeConfig, RelaxationEnv, RewardLedger, StepRecord,
    episode_length,
)
from .hamiltonian import (
    LocalHamiltonian, LocalTerm, PauliString, build_xx, build_zz_graph,
    exact_ground_energy, hamiltonian_from_config, load_hamiltonian,
    term_min_eigenvalue,
)
from .relaxation import (
    BoundResult, CompatMode, RelaxationOptions, compile_relaxation,
    full_system_set, pair_union_set, partial_trace_map, solve_bound,
    term_support_set, trivial_set, verify_certificate,
)
from .solver import SdpProblem, SdpSolution, SolveStatus, min_eig_check, solve

__version__ = "0.1.0"
