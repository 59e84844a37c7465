"""Exact machinery for the chain-walk benchmark MDP.

The default model has 20 states in a line, two actions ("left" and
"right"), success probability 0.9 (a failed action moves the opposite
way), and moves past either end clamped to the boundary state. Payoffs use
the cost convention throughout the package: the benchmark's reward of 1 at
the two end states enters as a one-step cost of -1, so every solver
minimizes. States are numbered 1..n_states in all public interfaces;
arrays are indexed from 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_vector

LEFT, RIGHT = 0, 1
ACTION_NAMES = ("left", "right")

_BELLMAN_TOL = 1e-10


@dataclass(frozen=True)
class ChainMdpModel:
    """Chain-walk MDP with exact transition kernel and payoff table."""

    n_states: int = 20
    success_prob: float = 0.9
    gamma: float = 0.9

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError(f"n_states must be at least 1, got {self.n_states}")
        if not 0.0 < self.success_prob < 1.0:
            raise ValueError(
                f"success_prob must lie in (0, 1), got {self.success_prob}"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")

    def payoff(self, state: int, action: int) -> float:
        """One-step cost of (state, action): -1 at both end states, else 0."""
        self._check_state(state)
        return -1.0 if state in (1, self.n_states) else 0.0

    def payoff_table(self) -> np.ndarray:
        """Cost table of shape (n_states, 2)."""
        table = np.zeros((self.n_states, 2))
        table[0, :] = -1.0
        table[-1, :] = -1.0
        return table

    def _check_state(self, state: int):
        if not 1 <= state <= self.n_states:
            raise ValueError(
                f"state {state} outside the range 1..{self.n_states}"
            )

    def transition_tensor(self) -> np.ndarray:
        """Kernel P[s-1, a, s'-1] for all states and both actions."""
        n = self.n_states
        kernel = np.zeros((n, 2, n))
        for s in range(1, n + 1):
            for a in (LEFT, RIGHT):
                kernel[s - 1, a] = chain_transition(s, a, self)
        return kernel


def chain_transition(s: int, a: int, model: ChainMdpModel) -> np.ndarray:
    """Distribution over successor states for (s, a).

    The intended neighbour is reached with probability ``success_prob`` and
    the opposite neighbour otherwise; moves past either end stay at the
    boundary state. Index i of the returned vector is state i+1.
    """
    model._check_state(s)
    if a not in (LEFT, RIGHT):
        raise ValueError(f"action must be {LEFT} (left) or {RIGHT} (right), got {a}")
    n = model.n_states
    step = -1 if a == LEFT else 1
    intended = min(max(s + step, 1), n)
    opposite = min(max(s - step, 1), n)
    dist = np.zeros(n)
    dist[intended - 1] += model.success_prob
    dist[opposite - 1] += 1.0 - model.success_prob
    return dist


@dataclass(frozen=True)
class SampleBatch:
    """A batch of i.i.d. transition samples (state, action, cost, successor)."""

    states: np.ndarray
    actions: np.ndarray
    payoffs: np.ndarray
    next_states: np.ndarray
    rng_seed: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=int)
        actions = np.asarray(self.actions, dtype=int)
        payoffs = as_float_vector(self.payoffs, "payoffs")
        next_states = np.asarray(self.next_states, dtype=int)
        m = states.shape[0]
        if not (actions.shape[0] == payoffs.shape[0] == next_states.shape[0] == m):
            raise ValueError("batch arrays must all have the same length")
        if m and not np.isin(actions, (LEFT, RIGHT)).all():
            raise ValueError("actions must take values 0 (left) or 1 (right)")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "next_states", next_states)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class ExactSolution:
    """Exact Q table (n_states x 2), state values, and the greedy policy."""

    q_values: np.ndarray
    v_values: np.ndarray
    policy: np.ndarray


def _as_policy(policy, n_states: int) -> np.ndarray:
    arr = np.asarray(policy, dtype=int)
    if arr.shape != (n_states,):
        raise ValueError(
            f"policy must have shape ({n_states},), got {arr.shape}"
        )
    if not np.isin(arr, (LEFT, RIGHT)).all():
        raise ValueError("policy entries must be 0 (left) or 1 (right)")
    return arr


def bellman_backup(model: ChainMdpModel, q_table, policy) -> np.ndarray:
    """One-step backup of a Q table under a fixed policy."""
    q = np.asarray(q_table, dtype=float)
    policy = _as_policy(policy, model.n_states)
    kernel = model.transition_tensor()
    successor = q[np.arange(model.n_states), policy]
    return model.payoff_table() + model.gamma * kernel @ successor


def optimal_bellman_backup(model: ChainMdpModel, q_table) -> np.ndarray:
    """One-step backup of a Q table under the action-minimizing policy."""
    q = np.asarray(q_table, dtype=float)
    kernel = model.transition_tensor()
    return model.payoff_table() + model.gamma * kernel @ q.min(axis=1)


def exact_q_policy(model: ChainMdpModel, policy) -> ExactSolution:
    """Exact Q-function of a fixed policy by solving the linear Bellman system.

    Solves ``Q = g + gamma * P_pi Q`` over all state-action pairs; the value
    at a state is ``Q(s, pi(s))``.
    """
    policy = _as_policy(policy, model.n_states)
    n = model.n_states
    kernel = model.transition_tensor()
    dim = 2 * n
    # Column of the coupled system for entry (s', pi(s')).
    coupling = np.zeros((dim, dim))
    for s in range(n):
        for a in (LEFT, RIGHT):
            row = 2 * s + a
            for s_next in range(n):
                p = kernel[s, a, s_next]
                if p:
                    coupling[row, 2 * s_next + policy[s_next]] += p
    payoff_flat = model.payoff_table().reshape(-1)
    q_flat = np.linalg.solve(np.eye(dim) - model.gamma * coupling, payoff_flat)
    q = q_flat.reshape(n, 2)
    v = q[np.arange(n), policy]
    return ExactSolution(q_values=q, v_values=v, policy=policy)


def exact_optimal(model: ChainMdpModel) -> ExactSolution:
    """Optimal Q, values, and policy via exact policy iteration.

    Iterates exact evaluation and greedy (cost-minimizing) improvement
    until the policy is stable; finiteness and gamma < 1 guarantee
    termination.
    """
    policy = np.zeros(model.n_states, dtype=int)
    for _ in range(2 ** model.n_states + 1):
        solution = exact_q_policy(model, policy)
        improved = solution.q_values.argmin(axis=1)
        if np.array_equal(improved, policy):
            v = solution.q_values.min(axis=1)
            return ExactSolution(
                q_values=solution.q_values, v_values=v, policy=policy
            )
        policy = improved
    raise RuntimeError("exact policy iteration failed to stabilize")


def sample_batch(model: ChainMdpModel, m: int, seed: int) -> SampleBatch:
    """Draw ``m`` i.i.d. samples: (s, a) uniform over states x actions, the
    cost of the pair, and a successor from the transition kernel.

    Deterministic for a fixed seed (PCG64); callers running several trials
    should derive one integer seed per trial, e.g. through
    ``numpy.random.SeedSequence(trial_seed).generate_state(...)``.
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    rng = np.random.default_rng(seed)
    n = model.n_states
    states = rng.integers(1, n + 1, size=m)
    actions = rng.integers(0, 2, size=m)
    payoffs = model.payoff_table()[states - 1, actions]
    step = np.where(actions == LEFT, -1, 1)
    intended = np.clip(states + step, 1, n)
    opposite = np.clip(states - step, 1, n)
    success = rng.random(m) < model.success_prob
    next_states = np.where(success, intended, opposite)
    return SampleBatch(
        states=states,
        actions=actions,
        payoffs=payoffs,
        next_states=next_states,
        rng_seed=int(seed),
    )
