"""Sparsity and covariance priors plus their majorization-minimization weights.

The activity priors are concave log-sum penalties on column norms: a
separable one (per user) and a cluster-level one (per group of users).
Both are linearized at the current iterate, which turns them into weighted
group norms; the weights produced here drive the shrinkage steps of the
solver. The unknown precision matrices carry a Wishart prior whose negative
log-density is evaluated up to its constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ClusterLayout

__all__ = [
    "MMWeights",
    "column_norms",
    "eval_separable_prior",
    "eval_cluster_prior",
    "mm_weights",
    "surrogate_value",
    "eval_wishart_neglog",
    "eval_map_objective",
]


@dataclass(frozen=True)
class MMWeights:
    """Linearization weights of a log-sum prior at a fixed expansion point.

    ``loop_kind="outer"``: w_i = 1 / (sum of column norms in the user's
    cluster + eps0), constant within each cluster. ``loop_kind="inner"``:
    w_i = 1 / (column norm of user i + eps0). All weights lie in (0, 1/eps0].
    """

    weights: np.ndarray
    epsilon0: float
    loop_kind: str


def column_norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=0)


def eval_separable_prior(x: np.ndarray, eps0: float) -> float:
    """Separable log-sum penalty: sum_i log(||x_i|| + eps0)."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    return float(np.sum(np.log(column_norms(x) + eps0)))


def eval_cluster_prior(x: np.ndarray, layout: ClusterLayout, eps0: float) -> float:
    """Cluster log-sum penalty: sum_l log(sum_{i in cluster l} ||x_i|| + eps0)."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    mass = column_norms(x).reshape(layout.n_clusters, layout.users_per_cluster).sum(axis=1)
    return float(np.sum(np.log(mass + eps0)))


def mm_weights(
    x: np.ndarray,
    eps0: float,
    loop_kind: str,
    layout: ClusterLayout | None = None,
) -> MMWeights:
    """Weights of the linearized log-sum prior at expansion point ``x``.

    For ``loop_kind="outer"`` a layout is required and the weight of every
    user in cluster l is the reciprocal cluster mass; for
    ``loop_kind="inner"`` weights are per-column reciprocals. Columns of
    ``x`` define the index set the weights refer to, so inner-loop callers
    pass the restriction of X to the detected support.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    norms = column_norms(x)
    if loop_kind == "outer":
        if layout is None:
            raise ValueError("outer weights need a cluster layout")
        mass = norms.reshape(layout.n_clusters, layout.users_per_cluster).sum(axis=1)
        w = np.repeat(1.0 / (mass + eps0), layout.users_per_cluster)
    elif loop_kind == "inner":
        w = 1.0 / (norms + eps0)
    else:
        raise ValueError(f"unknown loop kind {loop_kind!r}")
    return MMWeights(weights=w, epsilon0=eps0, loop_kind=loop_kind)


def surrogate_value(
    x: np.ndarray,
    weights: MMWeights,
    expansion: np.ndarray,
    layout: ClusterLayout | None = None,
) -> float:
    """Value of the MM tangent upper bound at ``x``.

    The bound is sum_i w_i ||x_i|| plus the constant that makes it touch the
    exact prior at the expansion point; by concavity of the log-sum it
    majorizes the exact prior everywhere.
    """
    kind = weights.loop_kind
    if kind == "outer":
        exact0 = eval_cluster_prior(expansion, layout, weights.epsilon0)
    else:
        exact0 = eval_separable_prior(expansion, weights.epsilon0)
    lin0 = float(weights.weights @ column_norms(expansion))
    return float(weights.weights @ column_norms(x)) + (exact0 - lin0)


def _check_hpd(a: np.ndarray, name: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = np.linalg.norm(a)
    if scale > 0 and np.linalg.norm(a - a.conj().T) > 1e-10 * scale:
        raise ValueError(f"{name} is not Hermitian")


def eval_wishart_neglog(sigma: np.ndarray, b: np.ndarray, d: float) -> float:
    """Negative log Wishart density up to constants: -d log|Sigma| + tr(B^{-1} Sigma).

    Both matrices must be Hermitian positive definite and d > 0. The log
    determinant comes from a Cholesky factorization, which doubles as the
    definiteness check.
    """
    if d <= 0:
        raise ValueError("Wishart degrees-of-freedom parameter d must be positive")
    _check_hpd(sigma, "sigma")
    _check_hpd(b, "b")
    try:
        chol_s = np.linalg.cholesky(sigma)
        chol_b = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Wishart prior needs positive-definite inputs") from exc
    logdet_sigma = 2.0 * float(np.sum(np.log(np.diagonal(chol_s).real)))
    # tr(B^{-1} Sigma) via triangular solves against the Cholesky factor of B
    half = np.linalg.solve(chol_b, sigma)
    inner = np.linalg.solve(chol_b.conj().T, half)
    return -d * logdet_sigma + float(np.trace(inner).real)


def eval_map_objective(
    x: np.ndarray,
    sigmas: np.ndarray,
    y: np.ndarray,
    phi: np.ndarray,
    prior_guess: np.ndarray,
    weights: MMWeights,
    betas: tuple[float, float, float],
    powers: np.ndarray,
    layout: ClusterLayout,
    wishart_d: float = 1.0,
    mu: np.ndarray | None = None,
) -> float:
    """Full MM-linearized objective value at (x, sigmas).

    Computes::

        0.5 ||Y - Phi X^T||_F^2 + beta1 sum_i w_i ||x_i||
        + beta2 sum_l sum_{i in C_l} x_i^H Sigma_l x_i
        - sum_l mu_l log|Sigma_l| + beta3 L sum_l tr(B_l^{-1} Sigma_l)

    with mu_l = beta2 sum_{i in C_l} p_i^M w_i ||x_i|| + beta3 L d. Pass
    ``mu`` to freeze the log-det coefficients at an earlier expansion point;
    by default they are evaluated at ``x``. Used for monotonicity
    diagnostics, not inside the solver's update rules.
    """
    beta1, beta2, beta3 = betas
    m = x.shape[0]
    big_l = layout.users_per_cluster
    norms = column_norms(x)

    value = 0.5 * float(np.linalg.norm(y - phi @ x.T) ** 2)
    value += beta1 * float(weights.weights @ norms)

    if mu is None:
        mu = compute_mu_per_cluster(
            norms, weights.weights, powers, beta2, beta3, big_l, wishart_d, layout, m
        )
    for l in range(layout.n_clusters):
        idx = layout.members[l]
        xs = x[:, idx]
        value += beta2 * float(np.sum((xs.conj() * (sigmas[l] @ xs)).real))
        sign, logdet = np.linalg.slogdet(sigmas[l])
        value -= float(mu[l]) * logdet
        value += beta3 * big_l * float(
            np.trace(np.linalg.solve(prior_guess[l], sigmas[l])).real
        )
    return value


def compute_mu_per_cluster(
    norms: np.ndarray,
    weights: np.ndarray,
    powers: np.ndarray,
    beta2: float,
    beta3: float,
    big_l: int,
    wishart_d: float,
    layout: ClusterLayout,
    m_antennas: int,
) -> np.ndarray:
    """Per-cluster log-det coefficient mu_l = beta2 sum p_i^M w_i ||x_i|| + beta3 L d.

    p_i^M is evaluated as exp(M log p_i) to stay benign for large antenna
    counts.
    """
    p_pow = np.exp(m_antennas * np.log(powers))
    per_user = p_pow * weights * norms
    per_cluster = per_user.reshape(layout.n_clusters, layout.users_per_cluster).sum(axis=1)
    return beta2 * per_cluster + beta3 * big_l * wishart_d
