"""Independent oracles used by the test suite.

Everything here is deliberately written against the mathematical
definitions, not against the package's solution paths, so the two routes
of every dual-route check stay independent.
"""

import numpy as np


def cd_lasso(X, y, mu, tol=1e-13, max_sweeps=100_000):
    """Coordinate-descent minimizer of 0.5 * ||X u - y||^2 + mu * ||u||_1."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    col_norms = np.einsum("ij,ij->j", X, X)
    u = np.zeros(n)
    residual = y.copy()
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(n):
            if col_norms[j] == 0.0:
                continue
            old = u[j]
            rho = X[:, j] @ residual + col_norms[j] * old
            new = np.sign(rho) * max(abs(rho) - mu, 0.0) / col_norms[j]
            if new != old:
                residual += X[:, j] * (old - new)
                u[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta <= tol:
            break
    return u


def envelope_by_grid(t, tau, span=None, num=2_000_001):
    """Brute-force Moreau envelope of |.| at a scalar t via a dense grid."""
    if span is None:
        span = abs(t) + 2.0 * tau + 1.0
    grid = np.linspace(-span, span, num)
    return float(np.min(np.abs(grid) + (t - grid) ** 2 / (2.0 * tau)))


def central_difference_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def value_iteration(model, tol=1e-12, max_iters=1_000_000):
    """Optimal state values of a chain model by exact value iteration on Q
    (cost sense: minimization)."""
    kernel = model.transition_tensor()
    payoff = model.payoff_table()
    q = np.zeros((model.n_states, 2))
    for _ in range(max_iters):
        q_next = payoff + model.gamma * kernel @ q.min(axis=1)
        if np.abs(q_next - q).max() <= tol:
            return q_next.min(axis=1)
        q = q_next
    raise RuntimeError("value iteration did not reach the tolerance")


def inclusion_residual_l1_recast(x, bx, scale):
    """Distance of 0 from A(x) + B(x) with A = scale * d||.||_1 - Id.

    Membership is checked componentwise: the best subgradient s_i is the
    sign of x_i where x_i != 0 and the clipped free choice elsewhere.
    """
    x = np.asarray(x, dtype=float)
    bx = np.asarray(bx, dtype=float)
    target = x - bx  # want scale * s = target with s in the subdifferential
    s = np.where(x != 0.0, np.sign(x), np.clip(target / scale, -1.0, 1.0))
    return float(np.linalg.norm(scale * s - target))


def inclusion_residual_penalized(t_w, w, mu):
    """Distance of 0 from T(w) + mu * d||w||_1, componentwise best subgradient."""
    t_w = np.asarray(t_w, dtype=float)
    w = np.asarray(w, dtype=float)
    if mu == 0.0:
        return float(np.linalg.norm(t_w))
    s = np.where(w != 0.0, np.sign(w), np.clip(-t_w / mu, -1.0, 1.0))
    return float(np.linalg.norm(t_w + mu * s))


def restricted_least_squares(X, y, support):
    """Least-squares fit constrained to a support set; zero elsewhere."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(X.shape[1])
    if len(support):
        sol, *_ = np.linalg.lstsq(X[:, support], y, rcond=None)
        out[list(support)] = sol
    return out
