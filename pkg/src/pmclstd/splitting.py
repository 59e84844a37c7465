"""Forward-reflected-backward splitting (FRBS) for structured inclusions.

Solves ``0 in A(x) + B(x)`` where ``A`` is maximally rho-monotone (rho may
be negative, i.e. hypomonotone) and given through its resolvent, while
``B`` is a monotone Lipschitz-continuous map evaluated forward. Each
iteration performs one forward evaluation of ``B``, a reflection using the
previous evaluation, and one resolvent step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import as_float_vector


class DivergenceError(RuntimeError):
    """The iteration produced a non-finite iterate (divergence or bad
    conditioning)."""


@dataclass(frozen=True)
class ResolventOperator:
    """A set-valued operator ``A`` accessed through its resolvent.

    ``resolvent(eta, x)`` must return ``(Id + eta A)^{-1}(x)`` for every
    admissible step ``eta`` (those with ``1 + eta * modulus > 0``).
    ``modulus`` is the monotonicity modulus rho of ``A``: negative for
    hypomonotone operators, zero for plain monotone ones.
    """

    resolvent: Callable[[float, np.ndarray], np.ndarray]
    modulus: float = 0.0


@dataclass(frozen=True)
class LipschitzMonotoneMap:
    """A single-valued monotone map with a known Lipschitz bound."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float

    def __post_init__(self):
        if self.lipschitz_bound <= 0:
            raise ValueError(
                f"lipschitz_bound must be positive, got {self.lipschitz_bound}"
            )

    def __call__(self, x):
        return np.asarray(self.evaluate(x), dtype=float)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``eta_k`` together with the interval margin ``epsilon``.

    Admissibility requires ``epsilon in (0, 1 / (2 (L_B + 1))]``, every step
    in ``[epsilon, (1 - 2 epsilon) / (2 L_B)]``, and ``1 + eta_k rho > 0``
    so the resolvent stays single-valued. ``values`` may be a scalar
    (constant schedule) or a sequence whose last entry repeats once
    exhausted.
    """

    epsilon: float
    values: float | Sequence[float]

    def value(self, k: int) -> float:
        if np.isscalar(self.values):
            return float(self.values)
        seq = self.values
        return float(seq[min(k, len(seq) - 1)])

    def listed_values(self) -> tuple[float, ...]:
        if np.isscalar(self.values):
            return (float(self.values),)
        return tuple(float(v) for v in self.values)

    @classmethod
    def default(cls, lipschitz_bound: float) -> "StepSchedule":
        """Largest admissible constant step: with ``epsilon = 1/(2(L+1))``
        the interval collapses to the single point ``(1-2 eps)/(2 L)``."""
        if lipschitz_bound <= 0:
            raise ValueError("lipschitz_bound must be positive")
        eps = 1.0 / (2.0 * (lipschitz_bound + 1.0))
        eta = (1.0 - 2.0 * eps) / (2.0 * lipschitz_bound)
        # eta equals eps exactly in real arithmetic; guard against the
        # rounded eta landing one ulp below eps.
        return cls(min(eps, eta), eta)


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a splitting run."""

    x: np.ndarray
    iterations: int
    residual_history: np.ndarray
    converged: bool


def validate_step_schedule(rho: float, lipschitz_bound: float, schedule: StepSchedule):
    """Check a schedule against the admissibility conditions.

    Returns None when every condition holds, otherwise a string describing
    the first violated condition.
    """
    if lipschitz_bound <= 0:
        raise ValueError(f"lipschitz_bound must be positive, got {lipschitz_bound}")
    eps = schedule.epsilon
    if eps <= 0:
        return f"epsilon = {eps} is not positive"
    eps_cap = 1.0 / (2.0 * (lipschitz_bound + 1.0))
    if eps > eps_cap:
        return f"epsilon = {eps} exceeds 1/(2(L_B+1)) = {eps_cap}"
    hi = (1.0 - 2.0 * eps) / (2.0 * lipschitz_bound)
    for k, eta in enumerate(schedule.listed_values()):
        if eta < eps:
            return f"eta[{k}] = {eta} lies below epsilon = {eps}"
        if eta > hi:
            return f"eta[{k}] = {eta} exceeds (1-2 epsilon)/(2 L_B) = {hi}"
        if 1.0 + eta * rho <= 0.0:
            return (
                f"eta[{k}] = {eta} gives 1 + eta*rho = {1.0 + eta * rho} <= 0; "
                "the resolvent of eta*A is not single-valued"
            )
    return None


def fixed_point_residual(x_prev, x_next) -> float:
    """Relative step length ``||x_next - x_prev|| / max(1, ||x_prev||)``."""
    x_prev = as_float_vector(x_prev, "x_prev")
    x_next = as_float_vector(x_next, "x_next")
    if x_prev.shape != x_next.shape:
        raise ValueError(
            f"dimension mismatch: {x_prev.shape} vs {x_next.shape}"
        )
    denom = max(1.0, float(np.linalg.norm(x_prev)))
    return float(np.linalg.norm(x_next - x_prev)) / denom


def frbs_solve(
    A: ResolventOperator,
    B: LipschitzMonotoneMap,
    x_init_prev,
    x_init,
    schedule: StepSchedule | None = None,
    tolerance: float = 1e-8,
    max_iterations: int = 100_000,
) -> SolveReport:
    """Run the forward-reflected-backward iteration on ``0 in A(x) + B(x)``.

    The update is

        ``x_{k+1} = J_{eta_k A}( x_k - eta_k B(x_k)
                                 - eta_{k-1} (B(x_k) - B(x_{k-1})) )``

    started from the two arbitrary points ``x_init_prev`` (playing
    ``x_{-1}``) and ``x_init`` (playing ``x_0``), with ``eta_{-1} := eta_0``.

    Parameters
    ----------
    A : ResolventOperator
        The (possibly hypomonotone) operator, via its resolvent.
    B : LipschitzMonotoneMap
        The monotone Lipschitz forward map.
    x_init_prev, x_init : array_like
        Initial points of equal dimension.
    schedule : StepSchedule, optional
        Step sizes; defaults to the largest admissible constant step for
        ``B.lipschitz_bound``. Validated before iterating.
    tolerance : float
        Stop once the relative fixed-point residual
        ``||x_{k+1} - x_k|| / max(1, ||x_k||)`` drops to this level.
    max_iterations : int
        Iteration cap; the report carries ``converged=False`` when hit.

    Returns
    -------
    SolveReport
        Final iterate, iteration count, per-iteration residuals, and the
        convergence flag.

    Raises
    ------
    ValueError
        On dimension mismatch or an inadmissible schedule.
    DivergenceError
        If an iterate stops being finite.
    """
    x_prev = as_float_vector(x_init_prev, "x_init_prev")
    x = as_float_vector(x_init, "x_init")
    if x_prev.shape != x.shape:
        raise ValueError(
            f"initial points have different dimensions: {x_prev.shape} vs {x.shape}"
        )
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    if schedule is None:
        schedule = StepSchedule.default(B.lipschitz_bound)
    violation = validate_step_schedule(A.modulus, B.lipschitz_bound, schedule)
    if violation is not None:
        raise ValueError(f"inadmissible step schedule: {violation}")

    b_prev = B(x_prev)
    eta_prev = schedule.value(0)
    residuals = []
    converged = False
    iterations = 0
    for k in range(max_iterations):
        eta = schedule.value(k)
        b = B(x)
        x_next = np.asarray(
            A.resolvent(eta, x - eta * b - eta_prev * (b - b_prev)), dtype=float
        )
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(
                f"non-finite iterate at iteration {k}; the problem may be "
                "badly conditioned or the schedule inadmissible"
            )
        res = fixed_point_residual(x, x_next)
        residuals.append(res)
        x, b_prev, eta_prev = x_next, b, eta
        iterations = k + 1
        if res <= tolerance:
            converged = True
            break

    return SolveReport(
        x=x,
        iterations=iterations,
        residual_history=np.asarray(residuals),
        converged=converged,
    )
