"""Feature map for the chain-walk benchmark.

A feature vector for (s, a) stacks two equal blocks, one per action: the
active block holds a bias term, Gaussian radial basis functions of the
state, and a draw of irrelevant Gaussian noise coordinates; the other
block is zero. The total dimension is ``2 (1 + n_rbf + n_noise)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector
from .lstd import LstdData
from .mdp import LEFT, RIGHT, SampleBatch, _as_policy

DEFAULT_NOISE_STD = float(np.sqrt(0.1))


@dataclass(frozen=True)
class FeatureMapSpec:
    """Layout of the feature map.

    ``centers`` default to ``n_rbf`` points evenly spaced over
    ``[1, n_states]`` and ``width`` to the squared center spacing divided
    by ln 2, which makes adjacent kernels cross at value 0.5. Noise
    coordinates are drawn i.i.d. N(0, noise_std**2), freshly for every
    feature-matrix row, deterministically from ``seed``.
    """

    n_rbf: int = 10
    n_noise: int = 0
    n_states: int = 20
    centers: np.ndarray | None = None
    width: float | None = None
    noise_std: float = DEFAULT_NOISE_STD
    seed: int = 0

    def __post_init__(self):
        if self.n_rbf < 0 or self.n_noise < 0:
            raise ValueError("n_rbf and n_noise must be nonnegative")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        centers = self.centers
        if centers is None:
            centers = (
                np.linspace(1.0, float(self.n_states), self.n_rbf)
                if self.n_rbf
                else np.zeros(0)
            )
        centers = as_float_vector(centers, "centers")
        if centers.shape[0] != self.n_rbf:
            raise ValueError(
                f"expected {self.n_rbf} centers, got {centers.shape[0]}"
            )
        width = self.width
        if width is None:
            if self.n_rbf >= 2:
                width = (centers[1] - centers[0]) ** 2 / np.log(2.0)
            else:
                width = 1.0
        if width <= 0:
            raise ValueError(f"width must be positive, got {width}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "width", float(width))

    @property
    def block_dim(self) -> int:
        return 1 + self.n_rbf + self.n_noise

    @property
    def dim(self) -> int:
        return 2 * self.block_dim

    def state_block(self, s) -> np.ndarray:
        """Deterministic part [1, rbf_1(s), ..., rbf_k(s)] of one block."""
        s = np.asarray(s, dtype=float)
        out = np.ones(s.shape + (1 + self.n_rbf,))
        if self.n_rbf:
            diff = s[..., None] - self.centers
            out[..., 1:] = np.exp(-(diff ** 2) / self.width)
        return out


def evaluate_features(spec: FeatureMapSpec, s: int, a: int, noise_draw) -> np.ndarray:
    """Feature vector for (s, a) with an explicit noise realization.

    The "left" block occupies the first half of the vector and the "right"
    block the second half; the inactive half is zero.
    """
    if not 1 <= s <= spec.n_states:
        raise ValueError(f"state {s} outside the range 1..{spec.n_states}")
    if a not in (LEFT, RIGHT):
        raise ValueError(f"action must be {LEFT} (left) or {RIGHT} (right), got {a}")
    noise = as_float_vector(noise_draw, "noise_draw")
    if noise.shape[0] != spec.n_noise:
        raise ValueError(
            f"noise_draw has length {noise.shape[0]}, expected {spec.n_noise}"
        )
    block = np.concatenate([spec.state_block(s), noise])
    out = np.zeros(spec.dim)
    half = spec.block_dim
    if a == LEFT:
        out[:half] = block
    else:
        out[half:] = block
    return out


def feature_table(spec: FeatureMapSpec) -> np.ndarray:
    """Noise-free feature vectors for every (state, action) pair.

    Returns an array of shape (n_states, 2, dim) with noise coordinates at
    their mean 0; this is the evaluation convention for fitted Q tables.
    """
    table = np.zeros((spec.n_states, 2, spec.dim))
    blocks = spec.state_block(np.arange(1, spec.n_states + 1))
    k = 1 + spec.n_rbf
    half = spec.block_dim
    table[:, LEFT, :k] = blocks
    table[:, RIGHT, half:half + k] = blocks
    return table


def _place_rows(spec, states, actions, signal, noise):
    m = states.shape[0]
    out = np.zeros((m, spec.dim))
    k = 1 + spec.n_rbf
    half = spec.block_dim
    left = actions == LEFT
    out[left, :k] = signal[left]
    out[~left, half:half + k] = signal[~left]
    if spec.n_noise:
        out[left, k:half] = noise[left]
        out[~left, half + k:] = noise[~left]
    return out


def build_lstd_data(
    spec: FeatureMapSpec,
    batch: SampleBatch,
    policy,
    gamma: float,
) -> LstdData:
    """Assemble the LSTD data matrices from a sample batch.

    Row i of the first matrix is the feature vector of (s_i, a_i); row i of
    the second is the feature vector of the sampled successor under
    ``policy``. Noise coordinates are redrawn independently for every row
    of each matrix, deterministically from ``spec.seed`` and the row index.
    """
    if len(batch) == 0:
        raise ValueError("sample batch is empty")
    policy = _as_policy(policy, spec.n_states)
    states = batch.states
    next_states = batch.next_states
    if states.min() < 1 or states.max() > spec.n_states:
        raise ValueError("batch states outside the feature map's state range")
    if next_states.min() < 1 or next_states.max() > spec.n_states:
        raise ValueError("batch successors outside the feature map's state range")
    m = len(batch)
    rng = np.random.default_rng(spec.seed)
    if spec.n_noise:
        noise_now = rng.standard_normal((m, spec.n_noise)) * spec.noise_std
        noise_next = rng.standard_normal((m, spec.n_noise)) * spec.noise_std
    else:
        noise_now = noise_next = np.zeros((m, 0))
    signal_now = spec.state_block(states.astype(float))
    signal_next = spec.state_block(next_states.astype(float))
    phi = _place_rows(spec, states, batch.actions, signal_now, noise_now)
    phi_next = _place_rows(
        spec, next_states, policy[next_states - 1], signal_next, noise_next
    )
    return LstdData(phi=phi, phi_next=phi_next, payoffs=batch.payoffs, gamma=gamma)
