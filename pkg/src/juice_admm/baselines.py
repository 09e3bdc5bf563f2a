"""Reference estimators: genie-aided MMSE bound and reweighted group lasso.

The oracle MMSE knows the true active set and the true per-user channel
covariances; it lower-bounds the NMSE of every blind estimator. The
iteratively reweighted l2,1 baseline is the main solver in its degenerate
configuration (no covariance terms, per-user reweighting only) and shares
its code path bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ClusterLayout
from .solver import JuiceSolution, SolverParams, solve

__all__ = ["OracleInfo", "oracle_mmse", "ir_l21_admm"]


@dataclass(frozen=True)
class OracleInfo:
    """Genie knowledge: true support, per-user covariances p_i Sigma_l^{-1}, noise."""

    support: np.ndarray  # sorted active user indices
    covariances: np.ndarray  # (K, M, M), aligned with ``support``
    noise_var: float


def _is_scalar_covariance(cov: np.ndarray) -> bool:
    m = cov.shape[-1]
    scale = cov[..., 0, 0].real[..., None, None] * np.eye(m)
    return bool(np.allclose(cov, scale, rtol=1e-12, atol=1e-12))


def oracle_mmse(y: np.ndarray, phi: np.ndarray, oracle: OracleInfo) -> np.ndarray:
    """Linear MMSE estimate of the effective channel given the true support.

    Solves the stacked linear model vec(Y) = (I_M (x) Phi_S) t + w where t
    collects the active columns antenna by antenna, with prior covariance
    assembled from the per-user channel covariances. Inactive columns are
    zero. When every covariance is a multiple of the identity the problem
    decouples per antenna and a small per-antenna solve is used instead.
    """
    y = np.asarray(y, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    tau_p, m = y.shape
    n = phi.shape[1]
    x_hat = np.zeros((m, n), dtype=complex)
    support = np.asarray(oracle.support, dtype=int)
    k = support.size
    if k == 0:
        return x_hat
    phi_s = phi[:, support]
    cov = np.asarray(oracle.covariances, dtype=complex)

    if _is_scalar_covariance(cov):
        # uncorrelated antennas: independent MMSE per antenna column of Y
        d = cov[:, 0, 0].real
        core = phi_s @ (d[:, None] * phi_s.conj().T)
        core += oracle.noise_var * np.eye(tau_p)
        if oracle.noise_var > 0:
            sol = np.linalg.solve(core, y)  # (tau_p, M)
        else:
            sol = np.linalg.pinv(core) @ y
        x_hat[:, support] = (d[:, None] * (phi_s.conj().T @ sol)).T
        return x_hat

    # user-major stacking: u = [x_{i1}; x_{i2}; ...], one M-block per active user
    a = np.zeros((tau_p * m, m * k), dtype=complex)
    for pos in range(k):
        for ant in range(m):
            a[ant * tau_p:(ant + 1) * tau_p, pos * m + ant] = phi_s[:, pos]
    y_vec = y.T.reshape(-1)  # antenna-major: y column per antenna

    if oracle.noise_var > 0:
        # information form: (C_u^{-1} + A^H A / s2) u = A^H y / s2
        prior_inv = np.zeros((m * k, m * k), dtype=complex)
        for pos in range(k):
            prior_inv[pos * m:(pos + 1) * m, pos * m:(pos + 1) * m] = np.linalg.inv(cov[pos])
        lhs = prior_inv + (a.conj().T @ a) / oracle.noise_var
        rhs = (a.conj().T @ y_vec) / oracle.noise_var
        u = np.linalg.solve(lhs, rhs)
    else:
        c_u = np.zeros((m * k, m * k), dtype=complex)
        for pos in range(k):
            c_u[pos * m:(pos + 1) * m, pos * m:(pos + 1) * m] = cov[pos]
        gram = a @ c_u @ a.conj().T
        u = c_u @ a.conj().T @ np.linalg.pinv(gram) @ y_vec

    x_hat[:, support] = u.reshape(k, m).T
    return x_hat


def ir_l21_admm(
    y: np.ndarray,
    phi: np.ndarray,
    layout: ClusterLayout,
    powers: np.ndarray,
    params: SolverParams,
) -> JuiceSolution:
    """Iteratively reweighted l2,1 recovery via the main ADMM machinery.

    Forces beta2 = beta3 = 0 and per-user ("separable") reweighting on all
    users, i.e. reweighted group lasso with no cluster stage and no
    precision updates. The prior-guess argument of the solver is inert in
    this configuration and filled with identities.
    """
    params = replace(params, beta2=0.0, beta3=0.0, reweighting="separable")
    m = y.shape[1]
    inert_guess = np.broadcast_to(
        np.eye(m, dtype=complex), (layout.n_clusters, m, m)
    ).copy()
    return solve(y, phi, layout, inert_guess, powers, params)
