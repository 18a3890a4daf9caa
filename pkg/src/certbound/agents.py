"""Search strategies over the constraint space: double deep Q-learning
with a small fully connected network, randomized breadth-first search,
and Metropolis Monte-Carlo, plus transfer of trained networks between
environments.

The Q-network is a plain numpy MLP with layer sizes
[s, 3s, 2a, 2a, a] (ReLU activations, linear output) where s is the
state-vector size and a = s + 1 counts the flip actions plus "stay".
Gradients are computed by exact backpropagation and checked against
finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


from .environment import RelaxationEnv, StepRecord, StopSearch

WEIGHTS_FORMAT = "certbound-qnet"
WEIGHTS_VERSION = 1


# -- network -------------------------------------------------------------------


class QNetwork:
    """MLP mapping state bit-vectors to Q-values, one per action."""

    def __init__(self, weights, biases):
        self.W = [np.asarray(w, dtype=float) for w in weights]
        self.b = [np.asarray(v, dtype=float) for v in biases]
        if len(self.W) != len(self.b):
            raise ValueError("weight/bias count mismatch")

    @classmethod
    def create(cls, state_size: int, rng) -> "QNetwork":
        s = state_size
        a = s + 1
        dims = [s, 3 * s, 2 * a, 2 * a, a]
        W, b = [], []
        for din, dout in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(din)
            W.append(rng.uniform(-bound, bound, size=(din, dout)))
            b.append(rng.uniform(-bound, bound, size=dout))
        return cls(W, b)

    @property
    def state_size(self) -> int:
        return self.W[0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.W[-1].shape[1]

    def forward(self, x: np.ndarray):
        """Batched forward pass; returns (q_values, layer activations)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        h = x
        for i, (w, v) in enumerate(zip(self.W, self.b)):
            h = h @ w + v
            if i < len(self.W) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def q_values(self, bits) -> np.ndarray:
        q, _ = self.forward(np.asarray(bits, dtype=float))
        return q[0]

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.W], [v.copy() for v in self.b])

    def copy_from(self, other: "QNetwork") -> None:
        if self.state_size != other.state_size:
            raise ValueError("network dimensions differ")
        self.W = [w.copy() for w in other.W]
        self.b = [v.copy() for v in other.b]

    def save(self, path, meta: dict | None = None) -> None:
        """Versioned binary file: one JSON header line, then raw arrays."""
        header = {"format": WEIGHTS_FORMAT, "version": WEIGHTS_VERSION,
                  "layers": [list(w.shape) for w in self.W],
                  "meta": meta or {}}
        with open(path, "wb") as f:
            f.write((json.dumps(header) + "\n").encode())
            for w, v in zip(self.W, self.b):
                np.save(f, w)
                np.save(f, v)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            if header.get("format") != WEIGHTS_FORMAT:
                raise ValueError(f"{path} is not a Q-network weights file")
            if header.get("version") != WEIGHTS_VERSION:
                raise ValueError(f"unsupported weights version {header.get('version')}")
            W, b = [], []
            for _ in header["layers"]:
                W.append(np.load(f))
                b.append(np.load(f))
        return cls(W, b), header["meta"]


class Adam:
    """Adaptive moment estimation for the network parameters."""

    def __init__(self, net: QNetwork, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.mW = [np.zeros_like(w) for w in net.W]
        self.vW = [np.zeros_like(w) for w in net.W]
        self.mb = [np.zeros_like(v) for v in net.b]
        self.vb = [np.zeros_like(v) for v in net.b]

    def step(self, net: QNetwork, gW, gb) -> None:
        self.t += 1
        corr1 = 1.0 - self.b1**self.t
        corr2 = 1.0 - self.b2**self.t
        for i in range(len(net.W)):
            self.mW[i] = self.b1 * self.mW[i] + (1 - self.b1) * gW[i]
            self.vW[i] = self.b2 * self.vW[i] + (1 - self.b2) * gW[i] ** 2
            net.W[i] -= self.lr * (self.mW[i] / corr1) / (np.sqrt(self.vW[i] / corr2) + self.eps)
            self.mb[i] = self.b1 * self.mb[i] + (1 - self.b1) * gb[i]
            self.vb[i] = self.b2 * self.vb[i] + (1 - self.b2) * gb[i] ** 2
            net.b[i] -= self.lr * (self.mb[i] / corr1) / (np.sqrt(self.vb[i] / corr2) + self.eps)


def q_loss_and_grads(net: QNetwork, states, action_idx, targets):
    """Mean squared error on the chosen actions' Q-values, with exact
    backpropagated gradients."""
    states = np.asarray(states, dtype=float)
    action_idx = np.asarray(action_idx, dtype=int)
    targets = np.asarray(targets, dtype=float)
    q, acts = net.forward(states)
    B = states.shape[0]
    picked = q[np.arange(B), action_idx]
    err = picked - targets
    loss = float(np.mean(err**2))

    dout = np.zeros_like(q)
    dout[np.arange(B), action_idx] = 2.0 * err / B
    gW = [None] * len(net.W)
    gb = [None] * len(net.b)
    delta = dout
    for i in reversed(range(len(net.W))):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.W[i].T) * (acts[i] > 0)
    return loss, gW, gb


# -- policies and schedules ------------------------------------------------------


@dataclass(frozen=True)
class ExplorationSchedule:
    """Exponentially decaying epsilon with a floor."""

    eps0: float = 0.9
    floor: float = 0.1
    decay: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")

    def value(self, episode: int) -> float:
        return max(self.floor, self.eps0 * self.decay**episode)


def default_decay(n: int) -> float:
    """0.5 for small systems (n <= 7), 0.95 for larger ones."""
    return 0.5 if n <= 7 else 0.95


def dqn_select_action(bits, net: QNetwork, eps: float, mask, rng) -> int:
    """Epsilon-greedy over the valid actions: argmax of the masked Q-values
    with probability 1 - eps, uniform over valid actions otherwise."""
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise ValueError("no valid action")
    if rng.random() < eps:
        return int(rng.choice(valid))
    q = net.q_values(bits)
    q_masked = np.where(np.asarray(mask, dtype=bool), q, -np.inf)
    return int(np.argmax(q_masked))


class ReplayBuffer:
    """Ring of transitions with uniform sampling without replacement."""

    def __init__(self, capacity: int):
        self._buf = deque(maxlen=capacity)

    def push(self, rec: StepRecord) -> None:
        self._buf.append(rec)

    def __len__(self):
        return len(self._buf)

    def sample(self, k: int, rng):
        k = min(k, len(self._buf))
        idx = rng.choice(len(self._buf), size=k, replace=False)
        return [self._buf[i] for i in idx]


# -- DQN training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    episodes: int
    episode_length: int
    learning_rate: float = 5e-3
    discount: float = 0.9
    batch_episodes: int = 20           # replay batch, in units of episodes
    learn_start_episodes: int = 5      # a quarter of the batch
    target_update_every: int = 5
    schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    buffer_capacity: int = 10000
    train_steps_per_episode: int = 1
    convergence_threshold: float = 0.95
    stop_on_convergence: bool = True
    evaluate: bool = True       # greedy evaluation episode after each episode
    seed: int = 0


@dataclass
class TrainResult:
    net: QNetwork
    target_net: QNetwork
    eval_rewards: list
    converged_episode: int | None
    episodes_run: int
    final_state: tuple
    best_beta: float
    best_state: tuple


def _action_index(action, pool) -> int:
    return pool.size if action.target is None else action.target


def double_dqn_targets(batch, net: QNetwork, target_net: QNetwork,
                       discount: float, mask_fn):
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)) over valid actions."""
    next_states = np.array([rec.state_after for rec in batch], dtype=float)
    q_online, _ = net.forward(next_states)
    q_target, _ = target_net.forward(next_states)
    targets = np.empty(len(batch))
    for i, rec in enumerate(batch):
        mask = np.asarray(mask_fn(rec.state_after), dtype=bool)
        qo = np.where(mask, q_online[i], -np.inf)
        a_star = int(np.argmax(qo))
        targets[i] = rec.reward + discount * q_target[i, a_star]
    return targets


def dqn_train_step(net: QNetwork, target_net: QNetwork, batch, lr_or_adam,
                   discount: float, mask_fn, pool) -> float:
    """One gradient step on the double-DQN regression target."""
    if not batch:
        raise ValueError("empty batch")
    states = np.array([rec.state_before for rec in batch], dtype=float)
    actions = np.array([_action_index(rec.action, pool) for rec in batch])
    targets = double_dqn_targets(batch, net, target_net, discount, mask_fn)
    loss, gW, gb = q_loss_and_grads(net, states, actions, targets)
    if not math.isfinite(loss):
        raise RuntimeError(
            f"non-finite training loss {loss}; "
            f"|W|_max={max(np.abs(w).max() for w in net.W):.3e}")
    if isinstance(lr_or_adam, Adam):
        lr_or_adam.step(net, gW, gb)
    else:
        for i in range(len(net.W)):
            net.W[i] -= lr_or_adam * gW[i]
            net.b[i] -= lr_or_adam * gb[i]
    return loss


def greedy_episode(env: RelaxationEnv, net: QNetwork, length: int, rng) -> float:
    """One evaluation episode at epsilon = 0; returns the final state's reward."""
    bits = env.reset()
    reward = 0.0
    for _ in range(length):
        a = dqn_select_action(bits, net, 0.0, env.valid_mask(bits), rng)
        rec = env.step(a)
        bits = rec.state_after
        reward = rec.reward
    return reward


def train(env: RelaxationEnv, config: TrainConfig,
          net: QNetwork | None = None, target_net: QNetwork | None = None) -> TrainResult:
    """Episodic double-DQN training; after each training episode one greedy
    evaluation episode is run and its final-state reward logged.
    Convergence is the first episode whose evaluation reward reaches the
    configured threshold."""
    rng = np.random.default_rng(config.seed)
    if net is None:
        net = QNetwork.create(env.pool.size, rng)
    if target_net is None:
        target_net = net.copy()
    adam = Adam(net, config.learning_rate)
    buffer = ReplayBuffer(config.buffer_capacity)
    batch_size = config.batch_episodes * config.episode_length
    learn_start = config.learn_start_episodes * config.episode_length
    eval_rewards = []
    converged = None
    episodes_run = 0
    best = (-math.inf, None)

    try:
        for e in range(config.episodes):
            episodes_run = e + 1
            eps = config.schedule.value(e)
            bits = env.reset()
            for _ in range(config.episode_length):
                a = dqn_select_action(bits, net, eps, env.valid_mask(bits), rng)
                rec = env.step(a)
                buffer.push(rec)
                bits = rec.state_after
                if rec.beta > best[0]:
                    best = (rec.beta, rec.state_after)
            if len(buffer) >= learn_start:
                for _ in range(config.train_steps_per_episode):
                    batch = buffer.sample(batch_size, rng)
                    dqn_train_step(net, target_net, batch, adam,
                                   config.discount, env.valid_mask, env.pool)
            if (e + 1) % config.target_update_every == 0:
                target_net.copy_from(net)
            if config.evaluate:
                ev = greedy_episode(env, net, config.episode_length, rng)
                eval_rewards.append(ev)
                if converged is None and ev >= config.convergence_threshold:
                    converged = e
                    if config.stop_on_convergence:
                        break
    except StopSearch:
        pass
    return TrainResult(net, target_net, eval_rewards, converged, episodes_run,
                       env.state, best[0], best[1])


def transfer(trained: TrainResult | QNetwork, new_env: RelaxationEnv,
             config: TrainConfig) -> TrainResult:
    """Warm-start training on a new environment from trained weights.

    Both the online and the target network start from the source weights;
    the pools must have identical sizes (same n, same candidates)."""
    src = trained.net if isinstance(trained, TrainResult) else trained
    if src.state_size != new_env.pool.size:
        raise ValueError(
            f"trained network expects {src.state_size} candidates, "
            f"environment has {new_env.pool.size}")
    return train(new_env, config, net=src.copy(), target_net=src.copy())


# -- blind searches ---------------------------------------------------------------


@dataclass
class SearchResult:
    best_bits: tuple
    best_beta: float
    best_p: int
    visited: int
    steps: int
    acceptance_ratio: float | None = None


def _better(beta, p, cur_beta, cur_p) -> bool:
    return beta > cur_beta + 1e-12 or (abs(beta - cur_beta) <= 1e-12 and p < cur_p)


def bfs_search(env: RelaxationEnv, max_states: int, rng) -> SearchResult:
    """FIFO exploration from the initial state with randomized expansion
    order; states already visited or enqueued are skipped."""
    if max_states < 1:
        raise ValueError("max_states must be positive")
    start = env.zero_state
    queue = deque([start])
    enqueued = {start}
    visited = set()
    best = (-math.inf, None, 0)
    steps = 0
    try:
        while queue and len(visited) < max_states:
            bits = queue.popleft()
            assert bits not in visited, "breadth-first search revisited a state"
            visited.add(bits)
            beta, p, _ = env.evaluate(bits)
            steps += 1
            if _better(beta, p, best[0], best[2]):
                best = (beta, bits, p)
            children = []
            mask = env.valid_mask(bits)
            for idx in range(env.pool.size):  # flips only; stay loops back
                if not mask[idx]:
                    continue
                child = env.neighbor(bits, idx)
                if child not in enqueued and child not in visited:
                    children.append(child)
            order = rng.permutation(len(children))
            for k in order:
                queue.append(children[k])
                enqueued.add(children[k])
    except StopSearch:
        pass
    return SearchResult(best[1], best[0], best[2], len(visited), steps)


@dataclass(frozen=True)
class McConfig:
    """Metropolis acceptance temperature, in reward units."""

    temperature: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


MC_TEMPERATURE_HALF_BUDGET = 0.084
MC_TEMPERATURE_FULL_BUDGET = 0.097


def mc_search(env: RelaxationEnv, cfg: McConfig, max_states: int, rng,
              max_steps: int | None = None) -> SearchResult:
    """Random walk proposing uniform valid flips, accepted with probability
    min{1, exp((R_new - R_old) / T)}.  Rewards are recomputed against the
    current ledger at each comparison; repeat states cost no new solve.

    Stops after visiting ``max_states`` distinct states or after
    ``max_steps`` proposals (default 100x max_states), whichever is first;
    the walk may revisit states freely, so a step cap is needed when the
    reachable space is smaller than the visit target."""
    if max_steps is None:
        max_steps = 100 * max_states
    bits = env.zero_state
    beta, p, _ = env.evaluate(bits)
    best = (beta, bits, p)
    steps = 0
    accepted = 0
    try:
        while env.unique_visits < max_states and steps < max_steps:
            mask = env.valid_mask(bits)
            flips = [i for i in range(env.pool.size) if mask[i]]
            if not flips:
                break
            idx = int(rng.choice(flips))
            cand = env.neighbor(bits, idx)
            beta_new, p_new, _ = env.evaluate(cand)
            steps += 1
            r_old = env.ledger.reward(beta, p)
            r_new = env.ledger.reward(beta_new, p_new)
            if _better(beta_new, p_new, best[0], best[2]):
                best = (beta_new, cand, p_new)
            if rng.random() < min(1.0, math.exp((r_new - r_old) / cfg.temperature)):
                bits, beta, p = cand, beta_new, p_new
                accepted += 1
    except StopSearch:
        pass
    ratio = accepted / steps if steps else None
    return SearchResult(best[1], best[0], best[2], env.unique_visits, steps, ratio)
