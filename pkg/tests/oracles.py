"""Independent numeric minimizers used to cross-check the closed-form updates.

Each oracle attacks the subproblem through a different computational route
than the production code (real-embedded least squares, quasi-Newton descent,
bounded scalar search), so agreement is meaningful evidence and not a
tautology.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def numeric_z(x, lam_z, y, phi, rho):
    """Minimize 0.5||Phi Z^T - Y||_F^2 + (rho/2)||X - Z + Lam/rho||_F^2.

    Column-stacked real embedding solved with lstsq: for each antenna row of
    Z the objective is an independent complex least-squares problem
    [Phi; sqrt(rho) I] z ~= [y; sqrt(rho) a].
    """
    m, n = x.shape
    a = x + lam_z / rho
    top = np.vstack([phi, np.sqrt(rho) * np.eye(n)])
    z = np.empty_like(x)
    for r in range(m):
        rhs = np.concatenate([y[:, r], np.sqrt(rho) * a[r, :]])
        sol, *_ = np.linalg.lstsq(top, rhs, rcond=None)
        z[r, :] = sol
    return z


def numeric_v_column(x_col, lam_col, sigma, rho, beta2):
    """Minimize beta2 v^H Sigma v + (rho/2)||x - v + lam/rho||^2 via L-BFGS."""
    m = x_col.size
    a = x_col + lam_col / rho

    def fun(vr):
        v = vr[:m] + 1j * vr[m:]
        quad = float((v.conj() @ (sigma @ v)).real)
        return beta2 * quad + 0.5 * rho * float(np.linalg.norm(v - a) ** 2)

    start = np.concatenate([a.real, a.imag])
    res = minimize(fun, start, method="L-BFGS-B",
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 500})
    return res.x[:m] + 1j * res.x[m:]


def numeric_x_column(c_col, alpha, rho):
    """Minimize alpha||x|| + rho||x - c||^2.

    The minimizer lies on the ray spanned by c, so a bounded scalar search
    over the radial coordinate is exhaustive.
    """
    norm_c = float(np.linalg.norm(c_col))
    if norm_c == 0.0:
        return np.zeros_like(c_col)

    def fun(t):
        return alpha * t + rho * (t - norm_c) ** 2

    res = minimize_scalar(fun, bounds=(0.0, 2.0 * norm_c), method="bounded",
                          options={"xatol": 1e-12})
    t_best = res.x if res.fun <= fun(0.0) else 0.0
    return (t_best / norm_c) * c_col


def numeric_sigma(v_cluster, b, mu, beta2, beta3, big_l):
    """Minimize beta2 sum v^H S v - mu log|S| + beta3 L tr(B^{-1} S) over HPD S.

    Parameterizes S by its independent Hermitian entries; the -log det term
    is a natural barrier that keeps L-BFGS inside the cone.
    """
    m = v_cluster.shape[0]
    scatter = v_cluster @ v_cluster.conj().T
    b_inv = np.linalg.inv(b)
    iu = np.triu_indices(m, 1)

    def unpack(theta):
        s = np.diag(theta[:m].astype(complex))
        re = theta[m:m + iu[0].size]
        im = theta[m + iu[0].size:]
        s[iu] = re + 1j * im
        s += np.conj(np.tril(s.conj().T, -1))
        return s

    def fun(theta):
        s = unpack(theta)
        sign, logdet = np.linalg.slogdet(s)
        if sign.real <= 0:
            return 1e12
        val = beta2 * float(np.trace(scatter @ s).real)
        val -= mu * float(logdet)
        val += beta3 * big_l * float(np.trace(b_inv @ s).real)
        return val

    theta0 = np.concatenate([np.ones(m), np.zeros(2 * iu[0].size)])
    res = minimize(fun, theta0, method="L-BFGS-B",
                   options={"ftol": 1e-18, "gtol": 1e-14, "maxiter": 2000})
    return unpack(res.x)
