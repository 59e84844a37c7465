"""LSTD operator assembly and the penalized policy-evaluation solver.

Builds the matrix/vector pair underlying least-squares temporal-difference
policy evaluation, the eigendecomposition of the feature Gram matrix used
to pick the debiasing subspace, the fixed-point operator of the penalized
problem, and drivers that solve it through the splitting solver. Also
provides the closed-form (pseudoinverse / ridge) baseline and thin
scikit-learn style estimator wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from sklearn.base import BaseEstimator

from ._validation import as_float_matrix, as_float_vector, check_finite
from .prox import SubspaceBasis, resolvent_l1_minus_id, soft_threshold
from .splitting import (
    LipschitzMonotoneMap,
    ResolventOperator,
    SolveReport,
    StepSchedule,
    frbs_solve,
    validate_step_schedule,
)

# Eigenvalues at or below n * RANK_TOL_FACTOR * l_1 count as numerically zero.
RANK_TOL_FACTOR = 1e-12

# Above this dimension the spectral norm uses a deterministic Lanczos solve
# instead of a full SVD.
_EXACT_NORM_MAX_DIM = 400


@dataclass(frozen=True)
class LstdData:
    """Sampled transition data for policy evaluation.

    ``phi`` holds one feature row per sampled state-action pair,
    ``phi_next`` the feature row of the sampled successor state under the
    evaluated policy, and ``payoffs`` the one-step payoffs in the cost
    convention (losses; rewards enter negated).
    """

    phi: np.ndarray
    phi_next: np.ndarray
    payoffs: np.ndarray
    gamma: float

    def __post_init__(self):
        phi = as_float_matrix(self.phi, "phi")
        phi_next = as_float_matrix(self.phi_next, "phi_next")
        payoffs = as_float_vector(self.payoffs, "payoffs")
        if phi.shape != phi_next.shape:
            raise ValueError(
                f"phi and phi_next must have equal shapes, got {phi.shape} "
                f"and {phi_next.shape}"
            )
        if payoffs.shape[0] != phi.shape[0]:
            raise ValueError(
                f"payoffs has length {payoffs.shape[0]} but phi has "
                f"{phi.shape[0]} rows"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name, arr in (("phi", phi), ("phi_next", phi_next), ("payoffs", payoffs)):
            check_finite(arr, name)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_next", phi_next)
        object.__setattr__(self, "payoffs", payoffs)

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class LstdOperatorData:
    """Assembled LSTD quantities.

    ``a_matrix = phi^T (phi - gamma * phi_next)`` and
    ``b_vector = phi^T payoffs``; the Gram matrix ``phi^T phi`` is stored
    through its symmetric eigendecomposition with eigenvalues sorted
    descending. ``lambda_min_pos`` is the smallest eigenvalue above the
    numerical-rank cutoff and ``spectral_norm`` the largest singular value
    of ``a_matrix``.
    """

    a_matrix: np.ndarray
    b_vector: np.ndarray
    gram_eigvecs: np.ndarray
    gram_eigvals: np.ndarray
    lambda_min_pos: float
    spectral_norm: float
    rank: int

    @property
    def n_features(self) -> int:
        return self.a_matrix.shape[0]

    def basis(self, q: int) -> SubspaceBasis:
        """Subspace spanned by the ``q`` leading Gram eigenvectors."""
        if not 0 <= q <= self.n_features:
            raise ValueError(
                f"q must lie in 0..{self.n_features}, got {q}"
            )
        return SubspaceBasis(self.gram_eigvecs[:, :q])


def _spectral_norm(a: np.ndarray) -> float:
    n = a.shape[0]
    if n <= _EXACT_NORM_MAX_DIM:
        return float(np.linalg.norm(a, 2))
    v0 = np.full(min(a.shape), 1.0 / np.sqrt(min(a.shape)))
    try:
        sigma = scipy.sparse.linalg.svds(
            a, k=1, v0=v0, return_singular_vectors=False
        )
        return float(sigma[0])
    except Exception:  # ARPACK breakdowns on degenerate inputs
        return float(np.linalg.norm(a, 2))


def assemble_operator(data: LstdData) -> LstdOperatorData:
    """Assemble the LSTD operator data from sampled transitions.

    Raises ValueError when every Gram eigenvalue falls below the
    numerical-rank cutoff (degenerate features).
    """
    phi, phi_next, payoffs = data.phi, data.phi_next, data.payoffs
    a_matrix = phi.T @ (phi - data.gamma * phi_next)
    b_vector = phi.T @ payoffs
    gram = phi.T @ phi
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.maximum(eigvals[::-1], 0.0)
    eigvecs = eigvecs[:, ::-1]
    cutoff = data.n_features * RANK_TOL_FACTOR * eigvals[0]
    positive = eigvals > cutoff
    if not positive.any():
        raise ValueError(
            "all Gram eigenvalues fall below the rank tolerance; "
            "the feature matrix is degenerate"
        )
    rank = int(np.count_nonzero(positive))
    return LstdOperatorData(
        a_matrix=a_matrix,
        b_vector=b_vector,
        gram_eigvecs=eigvecs,
        gram_eigvals=eigvals,
        lambda_min_pos=float(eigvals[rank - 1]),
        spectral_norm=_spectral_norm(a_matrix),
        rank=rank,
    )


@dataclass(frozen=True)
class PmcSolverConfig:
    """Parameters of the penalized solve.

    ``mu`` is the penalty weight (0 switches the penalty off), ``tau`` the
    concavity index, ``q`` the debiasing-subspace dimension (0 reduces the
    penalty to plain l1), ``alpha`` the recast scaling, and
    ``epsilon`` / ``eta`` the step-schedule parameters.
    """

    mu: float
    tau: float
    q: int
    alpha: float
    epsilon: float
    eta: float | Sequence[float]
    tolerance: float = 1e-8
    max_iterations: int = 100_000

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.q < 0:
            raise ValueError(f"q must be nonnegative, got {self.q}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.epsilon, self.eta)


def _penalty_ratio_bound(op_data: LstdOperatorData, q: int) -> float:
    """Largest admissible ``mu / tau`` for the convexity condition at ``q``."""
    l_q = float(op_data.gram_eigvals[q - 1]) if q >= 1 else 0.0
    return max(l_q, op_data.lambda_min_pos)


def _forward_lipschitz(op_data: LstdOperatorData, mu: float, tau: float) -> float:
    return op_data.spectral_norm + mu / tau


def default_config(
    op_data: LstdOperatorData,
    mu: float,
    tau: float,
    q: int,
    tolerance: float = 1e-8,
    max_iterations: int = 100_000,
) -> PmcSolverConfig:
    """Build the canonical solver configuration for ``(mu, tau, q)``.

    Uses the largest admissible recast scaling
    ``alpha = 1 / (||A||_2 + mu/tau)`` (so the forward map has Lipschitz
    bound exactly 2) and the largest admissible constant step
    ``eta = (1 - 2 epsilon) / (2 beta)`` at ``epsilon = 1 / (2 (beta + 1))``.

    Raises ValueError when the convexity condition cannot hold for the
    given ``(mu, tau, q)``.
    """
    if not 0 <= q <= op_data.n_features:
        raise ValueError(f"q must lie in 0..{op_data.n_features}, got {q}")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if mu > 0 and q >= 1:
        bound = _penalty_ratio_bound(op_data, q)
        if mu / tau > bound:
            raise ValueError(
                f"mu/tau = {mu / tau} violates the convexity condition; "
                f"largest admissible mu/tau at q = {q} is {bound}"
            )
    lip = _forward_lipschitz(op_data, mu, tau)
    if lip <= 0:
        raise ValueError("degenerate problem: ||A||_2 + mu/tau is zero")
    alpha = 1.0 / lip
    beta = alpha * lip + 1.0
    epsilon = 1.0 / (2.0 * (beta + 1.0))
    eta = (1.0 - 2.0 * epsilon) / (2.0 * beta)
    # The collapsed interval makes eta equal epsilon in real arithmetic;
    # keep eta >= epsilon under rounding.
    epsilon = min(epsilon, eta)
    return PmcSolverConfig(
        mu=mu,
        tau=tau,
        q=q,
        alpha=alpha,
        epsilon=epsilon,
        eta=eta,
        tolerance=tolerance,
        max_iterations=max_iterations,
    )


def check_convexity_condition(config: PmcSolverConfig, op_data: LstdOperatorData):
    """Check conditions (C-1)-(C-3) of the penalized solve.

    Returns None when all hold, otherwise a string naming the first failed
    condition. (C-1) requires ``mu/tau <= max(l_q, lambda_min_pos)`` (vacuous
    for ``mu = 0`` or ``q = 0``); (C-3) bounds ``alpha``; (C-2) is the step
    schedule admissibility at the induced Lipschitz bound.
    """
    if config.q > op_data.n_features:
        return (
            f"q = {config.q} exceeds the feature dimension {op_data.n_features}"
        )
    if config.mu > 0 and config.q >= 1:
        bound = _penalty_ratio_bound(op_data, config.q)
        ratio = config.mu / config.tau
        if ratio > bound:
            return (
                f"(C-1): mu/tau = {ratio} exceeds max(l_q, lambda_min^++) = "
                f"{bound}; largest admissible mu/tau is {bound}"
            )
    lip = _forward_lipschitz(op_data, config.mu, config.tau)
    alpha_cap = 1.0 / lip
    if not 0.0 < config.alpha <= alpha_cap:
        return (
            f"(C-3): alpha = {config.alpha} lies outside (0, {alpha_cap}]"
        )
    beta = config.alpha * lip + 1.0
    violation = validate_step_schedule(-1.0, beta, config.schedule())
    if violation is not None:
        return f"(C-2): {violation}"
    return None


def pmc_operator_T(
    w,
    op_data: LstdOperatorData,
    config: PmcSolverConfig,
    basis: SubspaceBasis,
):
    """Fixed-point operator of the penalized problem.

    ``T(w) = A w - b - (mu/tau) P(p - soft_threshold(p, tau))`` with
    ``p = P w`` the projection onto the debiasing subspace. With ``mu = 0``
    or the trivial subspace this is the plain residual map ``A w - b``.
    """
    w = as_float_vector(w, "w")
    if w.shape[0] != op_data.n_features:
        raise ValueError(
            f"w has length {w.shape[0]}, expected {op_data.n_features}"
        )
    out = op_data.a_matrix @ w - op_data.b_vector
    if config.mu > 0 and basis.dim > 0:
        p = basis.project(w)
        out -= (config.mu / config.tau) * basis.project(
            p - soft_threshold(p, config.tau)
        )
    return out


def _recast_operators(op_data, config, basis):
    """Forward map ``B = alpha T + Id`` and resolvent operator
    ``A = alpha mu d||.||_1 - Id`` of the monotone recast."""
    alpha = config.alpha
    beta = alpha * _forward_lipschitz(op_data, config.mu, config.tau) + 1.0

    def forward(w):
        return alpha * pmc_operator_T(w, op_data, config, basis) + w

    b_map = LipschitzMonotoneMap(forward, beta)
    if config.mu > 0:

        def resolvent(eta, x):
            return resolvent_l1_minus_id(x, eta, alpha, config.mu)

    else:

        def resolvent(eta, x):
            return x / (1.0 - eta)

    a_op = ResolventOperator(resolvent, modulus=-1.0)
    return a_op, b_map


def solve_assembled(
    op_data: LstdOperatorData,
    config: PmcSolverConfig,
    w_init_prev=None,
    w_init=None,
) -> SolveReport:
    """Run the splitting solver on already-assembled operator data."""
    violation = check_convexity_condition(config, op_data)
    if violation is not None:
        raise ValueError(f"invalid solver configuration: {violation}")
    n = op_data.n_features
    w_prev = np.zeros(n) if w_init_prev is None else as_float_vector(w_init_prev)
    w0 = np.zeros(n) if w_init is None else as_float_vector(w_init)
    basis = op_data.basis(config.q)
    a_op, b_map = _recast_operators(op_data, config, basis)
    return frbs_solve(
        a_op,
        b_map,
        w_prev,
        w0,
        schedule=config.schedule(),
        tolerance=config.tolerance,
        max_iterations=config.max_iterations,
    )


def pmc_lstd_solve(
    data: LstdData,
    config: PmcSolverConfig,
    w_init_prev=None,
    w_init=None,
) -> SolveReport:
    """Solve penalized LSTD policy evaluation on sampled transitions.

    Assembles the operator data and runs the forward-reflected-backward
    iteration on the monotone recast; the converged point satisfies the
    stationarity inclusion of the penalized objective. Initial points
    default to zero vectors.
    """
    return solve_assembled(assemble_operator(data), config, w_init_prev, w_init)


def lstd_closed_form(op_data: LstdOperatorData, ridge: float = 0.0):
    """Closed-form LSTD weights.

    Solves ``(A + ridge * Id) w = b``; with ``ridge = 0`` and a singular
    ``A`` this is the minimum-norm pseudoinverse solution.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    a, b = op_data.a_matrix, op_data.b_vector
    if ridge > 0:
        try:
            return np.linalg.solve(a + ridge * np.eye(a.shape[0]), b)
        except np.linalg.LinAlgError:
            pass  # singular even with the ridge; fall through to least squares
        a = a + ridge * np.eye(a.shape[0])
    solution, *_ = scipy.linalg.lstsq(a, b, lapack_driver="gelsy")
    return solution


class PmcLstd(BaseEstimator):
    """Sparse LSTD policy evaluation with the projective MC penalty.

    Fits weights ``w`` so that ``phi(s, a)^T w`` approximates the Q-function
    of the evaluated policy, with a weakly convex sparsity penalty whose
    debiasing effect is confined to the span of the ``q`` leading Gram
    eigenvectors. Solved by forward-reflected-backward splitting on the
    monotone recast of the stationarity inclusion.

    Parameters
    ----------
    mu : float
        Penalty weight; 0 disables the penalty (plain LSTD, solved
        iteratively).
    tau : float
        Concavity index of the penalty; larger values approach the l1 norm.
    q : int or "auto"
        Dimension of the debiasing subspace. "auto" uses the numerical rank
        of the Gram matrix; 0 gives the plain l1 penalty.
    gamma : float
        Discount factor in (0, 1).
    tol : float
        Relative fixed-point residual at which to stop.
    max_iter : int
        Iteration cap.
    warm_start : bool
        Reuse the previous ``coef_`` as the starting point on refit.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Fitted weights.
    n_iter_ : int
        Iterations performed by the splitting solver.
    converged_ : bool
        Whether the residual dropped below ``tol``.
    config_ : PmcSolverConfig
        The derived solver configuration.
    operator_data_ : LstdOperatorData
        Assembled operator quantities (Gram eigenstructure included).
    """

    def __init__(
        self,
        mu: float = 0.1,
        tau: float = 1.0,
        q="auto",
        gamma: float = 0.9,
        tol: float = 1e-8,
        max_iter: int = 100_000,
        warm_start: bool = False,
    ):
        self.mu = mu
        self.tau = tau
        self.q = q
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start

    def fit(self, phi, phi_next, payoffs):
        """Fit on sampled transitions.

        ``phi`` are feature rows of the sampled state-action pairs,
        ``phi_next`` feature rows of the successors under the evaluated
        policy, and ``payoffs`` the one-step costs.
        """
        data = LstdData(phi, phi_next, payoffs, self.gamma)
        op_data = assemble_operator(data)
        q = op_data.rank if self.q == "auto" else int(self.q)
        config = default_config(
            op_data, self.mu, self.tau, q,
            tolerance=self.tol, max_iterations=self.max_iter,
        )
        w0 = None
        if self.warm_start and hasattr(self, "coef_"):
            if self.coef_.shape[0] == op_data.n_features:
                w0 = self.coef_
        report = solve_assembled(op_data, config, w0, w0)
        self.coef_ = report.x
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.residual_history_ = report.residual_history
        self.config_ = config
        self.operator_data_ = op_data
        return self

    def predict(self, features):
        """Q-value estimates ``features @ coef_`` for feature rows."""
        if not hasattr(self, "coef_"):
            raise ValueError("estimator is not fitted; call fit first")
        features = as_float_matrix(features, "features")
        return features @ self.coef_


class LstdRegressor(BaseEstimator):
    """Closed-form LSTD policy evaluation (pseudoinverse or ridge).

    Parameters
    ----------
    gamma : float
        Discount factor in (0, 1).
    ridge : float
        Nonnegative ridge weight; 0 uses the minimum-norm pseudoinverse
        solution when the system is singular.
    """

    def __init__(self, gamma: float = 0.9, ridge: float = 0.0):
        self.gamma = gamma
        self.ridge = ridge

    def fit(self, phi, phi_next, payoffs):
        data = LstdData(phi, phi_next, payoffs, self.gamma)
        op_data = assemble_operator(data)
        self.coef_ = lstd_closed_form(op_data, self.ridge)
        self.n_iter_ = 0
        self.converged_ = True
        self.operator_data_ = op_data
        return self

    def predict(self, features):
        if not hasattr(self, "coef_"):
            raise ValueError("estimator is not fitted; call fit first")
        features = as_float_matrix(features, "features")
        return features @ self.coef_
