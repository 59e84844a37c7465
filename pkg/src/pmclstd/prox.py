"""Proximal and penalty kernels.

Soft-thresholding, the Moreau envelope of the l1 norm (a Huber sum), the
minimax-concave (MC) penalty and its projective variant (PMC), orthogonal
subspace projections, and the resolvent of ``eta * (c * d||.||_1 - Id)``
used by the splitting solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_matrix, as_float_vector

ORTHONORMAL_TOL = 1e-10


def soft_threshold(x, tau: float):
    """Componentwise shrinkage ``sgn(x_i) * max(|x_i| - tau, 0)``."""
    if tau <= 0:
        raise ValueError(f"threshold tau must be positive, got {tau}")
    x = as_float_vector(x)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def moreau_env_l1(x, tau: float) -> float:
    """Moreau envelope of the l1 norm of index tau.

    Equals the Huber sum of the components: ``t**2 / (2 tau)`` inside
    ``|t| <= tau`` and ``|t| - tau / 2`` outside.
    """
    if tau <= 0:
        raise ValueError(f"index tau must be positive, got {tau}")
    x = as_float_vector(x)
    ax = np.abs(x)
    return float(np.sum(np.where(ax <= tau, x * x / (2.0 * tau), ax - tau / 2.0)))


def mc_penalty(x, tau: float) -> float:
    """Minimax-concave penalty: ``|t| - t**2 / (2 tau)`` capped at ``tau / 2``.

    Identical to ``||x||_1 - moreau_env_l1(x, tau)``.
    """
    if tau <= 0:
        raise ValueError(f"index tau must be positive, got {tau}")
    x = as_float_vector(x)
    ax = np.abs(x)
    return float(np.sum(np.where(ax <= tau, ax - x * x / (2.0 * tau), tau / 2.0)))


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a linear subspace of R^n.

    ``matrix`` has shape (n, q) with orthonormal columns; q = 0 encodes the
    trivial subspace {0}.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = as_float_matrix(self.matrix, "basis matrix")
        object.__setattr__(self, "matrix", mat)
        n, q = mat.shape
        if q > n:
            raise ValueError(f"basis has more columns ({q}) than rows ({n})")
        if q > 0:
            gram = mat.T @ mat
            if not np.allclose(gram, np.eye(q), atol=ORTHONORMAL_TOL):
                raise ValueError("basis columns are not orthonormal")

    @property
    def ambient_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def trivial(cls, n: int) -> "SubspaceBasis":
        return cls(np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int) -> "SubspaceBasis":
        return cls(np.eye(n))

    def project(self, x):
        """Orthogonal projection ``V (V^T x)`` onto the subspace."""
        x = as_float_vector(x)
        if x.shape[0] != self.ambient_dim:
            raise ValueError(
                f"vector of length {x.shape[0]} does not match "
                f"ambient dimension {self.ambient_dim}"
            )
        if self.dim == 0:
            return np.zeros_like(x)
        return self.matrix @ (self.matrix.T @ x)


def project_subspace(x, basis: SubspaceBasis):
    """Project ``x`` onto the subspace spanned by ``basis``."""
    return basis.project(x)


def pmc_penalty(x, tau: float, basis: SubspaceBasis) -> float:
    """Projective MC penalty: l1 norm minus the Moreau envelope of the
    projection onto the subspace.

    Coincides with the MC penalty when the basis spans the whole space and
    with the plain l1 norm when the subspace is trivial.
    """
    x = as_float_vector(x)
    return float(np.sum(np.abs(x))) - moreau_env_l1(basis.project(x), tau)


def resolvent_l1_minus_id(x, eta: float, alpha: float, mu: float):
    """Resolvent of ``eta * (alpha * mu * d||.||_1 - Id)`` at ``x``.

    The output ``z`` is the unique solution of
    ``x in (1 - eta) z + eta alpha mu d||z||_1``, which is the
    soft-thresholding of ``x / (1 - eta)`` at level
    ``eta alpha mu / (1 - eta)``. Requires ``0 < eta < 1`` so that the
    resolvent is single-valued.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"step eta must lie in (0, 1), got {eta}")
    if alpha <= 0 or mu <= 0:
        raise ValueError("alpha and mu must be positive")
    x = as_float_vector(x)
    shrink = 1.0 - eta
    return soft_threshold(x / shrink, eta * alpha * mu / shrink)
