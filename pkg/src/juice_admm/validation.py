"""Self-contained invariant checks on random instances, used by the CLI.

Each check returns ``(name, passed, detail)``. These are quick smoke-level
verifications of the core mathematical contracts (update optimality via
gradient residuals, majorization, Lagrangian descent, model invariants);
the full oracle-based suite lives in the test tree.
"""

from __future__ import annotations

import numpy as np

from . import model
from .metrics import srr
from .priors import (
    eval_cluster_prior,
    eval_separable_prior,
    mm_weights,
    surrogate_value,
)
from .solver import (
    SolverParams,
    SolverState,
    compute_mu,
    gram_inverse,
    lagrangian_value,
    primal_sweep,
    update_duals,
    update_sigma,
    update_v,
    update_x,
    update_z,
)

__all__ = ["run_validation"]


def _random_system(rng, m=3, n=6, c=2, tau_p=4):
    layout = model.build_cluster_layout(n, c)
    phi = model.gen_pilots(tau_p, n, rng)
    y = (rng.standard_normal((tau_p, m)) + 1j * rng.standard_normal((tau_p, m)))
    x = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))
    lam = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))
    a = rng.standard_normal((c, m, m)) + 1j * rng.standard_normal((c, m, m))
    sigmas = a @ np.conj(np.transpose(a, (0, 2, 1))) + m * np.eye(m)
    b = rng.standard_normal((c, m, m)) + 1j * rng.standard_normal((c, m, m))
    prior_guess = b @ np.conj(np.transpose(b, (0, 2, 1))) + m * np.eye(m)
    powers = rng.uniform(0.5, 1.5, n)
    return layout, phi, y, x, lam, sigmas, prior_guess, powers


def _check_model(rng) -> tuple[str, bool, str]:
    layout = model.build_cluster_layout(40, 4)
    pset = model.gen_precision_set(layout, 4, seed=rng)
    pilots = model.gen_pilots(7, 40, 123)
    pilots2 = model.gen_pilots(7, 40, 123)
    activity = model.sample_activity(layout, "clustered", 6, 2, rng)
    x = model.sample_channels(activity, layout, pset, rng)
    norms_ok = np.allclose(np.linalg.norm(pilots, axis=0), 1.0, atol=1e-12)
    det_ok = np.array_equal(pilots, pilots2)
    support_ok = np.array_equal(
        np.flatnonzero(np.linalg.norm(x, axis=0) > 0), activity.active_set
    )
    hpd_ok = np.linalg.eigvalsh(pset.precisions).min() > 0
    ok = norms_ok and det_ok and support_ok and hpd_ok
    return ("model invariants", ok,
            f"pilot_norms={norms_ok} determinism={det_ok} support={support_ok} hpd={hpd_ok}")


def _check_update_gradients(rng) -> tuple[str, bool, str]:
    worst = 0.0
    for _ in range(20):
        layout, phi, y, x, lam, sigmas, prior_guess, powers = _random_system(rng)
        m = x.shape[0]
        rho, beta2 = rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)
        gram = gram_inverse(phi, rho)
        z = update_z(x, lam, y, phi, rho, gram)
        grad_z = 0.5 * (z @ (phi.T @ phi.conj()) - y.T @ phi.conj()) \
            + 0.5 * rho * (z - x - lam / rho)
        worst = max(worst, np.linalg.norm(grad_z) / max(np.linalg.norm(z), 1.0))

        v = update_v(x, lam, sigmas, rho, beta2, layout)
        idx = layout.cluster_index()
        grad_v = beta2 * np.einsum("cmn,nc->mc", sigmas[idx], v) \
            + 0.5 * rho * (v - x - lam / rho)
        worst = max(worst, np.linalg.norm(grad_v) / max(np.linalg.norm(v), 1.0))

        weights = mm_weights(x, 1.0, "outer", layout).weights
        mu = compute_mu(weights, x, powers, beta2, 0.5, layout.users_per_cluster,
                        1.0, layout)
        new_sig = update_sigma(v, prior_guess, mu, beta2, 0.5,
                               layout.users_per_cluster, layout)
        v_c = v.reshape(m, layout.n_clusters, layout.users_per_cluster)
        scatter = np.einsum("mcl,ncl->cmn", v_c, v_c.conj())
        grad_s = beta2 * scatter + 0.5 * layout.users_per_cluster * np.linalg.inv(prior_guess) \
            - mu[:, None, None] * np.linalg.inv(new_sig)
        worst = max(worst, np.linalg.norm(grad_s) / max(np.linalg.norm(new_sig), 1.0))
    ok = worst < 1e-8
    return ("update stationarity", ok, f"worst relative gradient {worst:.2e}")


def _check_prox(rng) -> tuple[str, bool, str]:
    worst = 0.0
    for _ in range(50):
        m = 3
        c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        alpha, rho = rng.uniform(0, 4), rng.uniform(0.5, 2.0)
        x = update_x(2 * c[:, None], np.zeros((m, 1), complex),
                     np.zeros((m, 1), complex), np.zeros((m, 1), complex),
                     np.array([alpha]), rho)[:, 0]
        ts = np.linspace(0, 2 * np.linalg.norm(c), 4001)
        vals = alpha * ts + rho * (ts - np.linalg.norm(c)) ** 2
        t_best = ts[np.argmin(vals)]
        worst = max(worst, abs(np.linalg.norm(x) - t_best))
    ok = worst < 1e-3
    return ("group shrinkage prox", ok, f"worst ray deviation {worst:.2e}")


def _check_majorization(rng) -> tuple[str, bool, str]:
    layout = model.build_cluster_layout(8, 2)
    worst = -np.inf
    for _ in range(200):
        x0 = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        x1 = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        for kind in ("outer", "inner"):
            w = mm_weights(x0, 0.5, kind, layout)
            exact = (eval_cluster_prior(x1, layout, 0.5) if kind == "outer"
                     else eval_separable_prior(x1, 0.5))
            gap = exact - surrogate_value(x1, w, x0, layout)
            tangency = abs(
                surrogate_value(x0, w, x0, layout)
                - (eval_cluster_prior(x0, layout, 0.5) if kind == "outer"
                   else eval_separable_prior(x0, 0.5))
            )
            worst = max(worst, gap, tangency)
    ok = worst < 1e-10
    return ("MM majorization", ok, f"worst violation {worst:.2e}")


def _check_monotone_sweep(rng) -> tuple[str, bool, str]:
    worst = -np.inf
    for _ in range(10):
        layout, phi, y, x, lam, sigmas, prior_guess, powers = _random_system(rng)
        params = SolverParams(beta1=0.5, beta2=0.2, beta3=0.3, eps0=1.0)
        gram = gram_inverse(phi, params.rho)
        state = SolverState(x=x.copy(), z=x.copy(), v=x.copy(),
                            lambda_z=lam.copy(), lambda_v=lam.copy(),
                            sigmas=sigmas.copy())
        for _ in range(5):
            w = mm_weights(state.x, params.eps0, "outer", layout)
            before = lagrangian_value(state, y, phi, prior_guess, powers, layout, w, params)
            primal_sweep(state, y, phi, gram, prior_guess, powers, layout, w, params)
            after = lagrangian_value(state, y, phi, prior_guess, powers, layout, w, params)
            worst = max(worst, (after - before) / max(abs(before), 1.0))
            state.lambda_z, state.lambda_v = update_duals(
                state.x, state.z, state.v, state.lambda_z, state.lambda_v, params.rho
            )
    ok = worst < 1e-8
    return ("Lagrangian descent per sweep", ok, f"worst relative increase {worst:.2e}")


def _check_metrics(rng) -> tuple[str, bool, str]:
    ok = (
        srr({1, 2, 3}, {1, 2, 3}, 3) == 1.0
        and srr({1, 2, 3}, set(), 3) == 0.0
        and abs(srr(set(range(16)), set(range(14)) | {99}, 16) - 14.0 / 19.0) < 1e-15
        and srr(set(), set(), 0) == 1.0
    )
    return ("metrics identities", ok, "srr spot values")


def run_validation(seed: int = 0, verbose_print=print) -> bool:
    """Run all checks; print one line per check; return overall pass/fail."""
    rng = np.random.default_rng(seed)
    checks = [
        _check_model(rng),
        _check_update_gradients(rng),
        _check_prox(rng),
        _check_majorization(rng),
        _check_monotone_sweep(rng),
        _check_metrics(rng),
    ]
    all_ok = True
    for name, ok, detail in checks:
        verbose_print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        all_ok &= ok
    return all_ok
