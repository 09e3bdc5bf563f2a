"""Synthetic system model: clustered users, correlated channels, pilots, activity.

Generates every ingredient of one simulated uplink snapshot:

* a partition of users into equal-size clusters,
* per-cluster spatial covariance / precision matrices for a uniform linear
  array under a Gaussian local-scattering profile,
* power control that normalizes the average effective channel gain,
* unit-norm complex-Bernoulli pilot sequences,
* clustered or random sparse activity patterns,
* the noisy received pilot signal Y = Phi X^T + W.

All randomness flows through explicit seeds (anything accepted by
``numpy.random.default_rng``); identical seeds reproduce bit-identical
outputs, so independent trials can run concurrently without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfigurationError",
    "ClusterLayout",
    "ChannelParams",
    "PrecisionSet",
    "ActivityPattern",
    "ProblemInstance",
    "build_cluster_layout",
    "gen_covariance",
    "gen_precision_set",
    "gen_pilots",
    "gen_orthonormal_pilots",
    "sample_activity",
    "sample_channels",
    "synthesize",
    "build_prior_guess",
    "save_instance",
    "load_instance",
]

HERMITIAN_TOL = 1e-10


class ConfigurationError(ValueError):
    """Raised when requested counts/shapes cannot form a valid system."""


@dataclass(frozen=True)
class ClusterLayout:
    """Partition of users 0..N-1 into C contiguous blocks of L users each."""

    n_users: int
    n_clusters: int
    users_per_cluster: int

    @property
    def members(self) -> np.ndarray:
        """(C, L) array; row l holds the user indices of cluster l."""
        return np.arange(self.n_users).reshape(self.n_clusters, self.users_per_cluster)

    def cluster_of(self, user: int) -> int:
        return int(user) // self.users_per_cluster

    def cluster_index(self) -> np.ndarray:
        """Length-N vector mapping each user to its cluster index."""
        return np.repeat(np.arange(self.n_clusters), self.users_per_cluster)


@dataclass(frozen=True)
class ChannelParams:
    """Spatial channel configuration for a half-wavelength ULA.

    Nominal cluster angles are drawn uniformly from ``angle_range_deg``;
    ``angular_std_deg`` is the Gaussian angular spread around the nominal
    angle, and ``loading`` is the diagonal loading added to each covariance
    before inversion so the precision matrix always exists.
    """

    angle_range_deg: tuple[float, float] = (-60.0, 60.0)
    angular_std_deg: float = 10.0
    spacing: float = 0.5
    loading: float = 1e-4


@dataclass(frozen=True)
class PrecisionSet:
    """Per-cluster channel precision matrices plus per-user transmit powers."""

    precisions: np.ndarray  # (C, M, M) complex, Hermitian positive-definite
    powers: np.ndarray  # (N,) positive reals

    @property
    def n_clusters(self) -> int:
        return self.precisions.shape[0]

    @property
    def m_antennas(self) -> int:
        return self.precisions.shape[1]

    def covariances(self) -> np.ndarray:
        """(C, M, M) channel covariances, i.e. the inverted precisions."""
        return np.linalg.inv(self.precisions)


@dataclass(frozen=True)
class ActivityPattern:
    """Binary user-activity vector and the equivalent active index set."""

    gamma: np.ndarray  # (N,) in {0, 1}
    active_set: np.ndarray  # sorted indices where gamma == 1
    pattern_kind: str  # "clustered" or "random"

    @property
    def k_active(self) -> int:
        return int(self.active_set.size)


@dataclass(frozen=True)
class ProblemInstance:
    """One simulated snapshot: pilots, ground-truth channel, received signal."""

    pilots: np.ndarray  # (tau_p, N) complex, unit-norm columns
    channel: np.ndarray  # (M, N) complex effective channel X
    received: np.ndarray  # (tau_p, M) complex Y
    noise_var: float
    activity: ActivityPattern


def build_cluster_layout(n_users: int, n_clusters: int) -> ClusterLayout:
    """Partition ``n_users`` into ``n_clusters`` contiguous equal blocks.

    Raises ConfigurationError when the cluster count does not divide the
    user count.
    """
    if n_users <= 0 or n_clusters <= 0:
        raise ConfigurationError("user and cluster counts must be positive")
    if n_users % n_clusters != 0:
        raise ConfigurationError(
            f"{n_clusters} clusters cannot evenly partition {n_users} users"
        )
    return ClusterLayout(n_users, n_clusters, n_users // n_clusters)


def _steering(m_antennas: int, angle: float, spacing: float) -> np.ndarray:
    m = np.arange(m_antennas)
    return np.exp(1j * 2.0 * np.pi * spacing * m * np.sin(angle))


def gen_covariance(
    m_antennas: int,
    nominal_angle: float,
    angular_std: float,
    spacing: float = 0.5,
) -> np.ndarray:
    """Spatial covariance of a ULA under Gaussian local scattering.

    Closed form for a half-wavelength-type array with scatterers at angles
    ``nominal_angle + e``, e ~ N(0, angular_std^2)::

        R[m, n] = exp(j 2 pi d (m-n) sin(theta))
                  * exp(-(2 pi d (m-n) std cos(theta))^2 / 2)

    Angles are in radians. The diagonal is constant (spatial stationarity)
    and the result is trace-normalized to ``m_antennas``. Diagonal loading
    is left to the caller.
    """
    if m_antennas < 1:
        raise ConfigurationError("need at least one antenna")
    if angular_std <= 0:
        raise ConfigurationError("angular spread must be positive")
    lags = np.subtract.outer(np.arange(m_antennas), np.arange(m_antennas))
    phase = 2.0 * np.pi * spacing * lags * np.sin(nominal_angle)
    spread = 2.0 * np.pi * spacing * lags * angular_std * np.cos(nominal_angle)
    cov = np.exp(1j * phase) * np.exp(-0.5 * spread**2)
    cov = 0.5 * (cov + cov.conj().T)
    return cov * (m_antennas / np.trace(cov).real)


def gen_precision_set(
    layout: ClusterLayout,
    m_antennas: int,
    channel: ChannelParams = ChannelParams(),
    seed=None,
) -> PrecisionSet:
    """Draw one precision matrix per cluster and the matching user powers.

    Each cluster gets an independent nominal angle; all of its users share
    the resulting precision Sigma_l = (R_l + loading I)^{-1}. Transmit power
    is p_i = M / trace(Sigma_l^{-1}), which makes the average effective gain
    of sqrt(p_i) h_i equal to M for every user.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.deg2rad(channel.angle_range_deg)
    std = np.deg2rad(channel.angular_std_deg)
    m_eye = np.eye(m_antennas)

    precisions = np.empty((layout.n_clusters, m_antennas, m_antennas), dtype=complex)
    powers = np.empty(layout.n_users)
    for l in range(layout.n_clusters):
        angle = rng.uniform(lo, hi)
        cov = gen_covariance(m_antennas, angle, std, channel.spacing)
        cov = cov + channel.loading * m_eye
        prec = np.linalg.inv(cov)
        precisions[l] = 0.5 * (prec + prec.conj().T)
        powers[layout.members[l]] = m_antennas / np.trace(cov).real
    return PrecisionSet(precisions=precisions, powers=powers)


def gen_pilots(tau_p: int, n_users: int, seed=None) -> np.ndarray:
    """i.i.d. complex-Bernoulli pilot book, (tau_p, N).

    Entries are (+-1 +-j)/sqrt(2 tau_p) with equal probability, so every
    column has unit norm by construction.
    """
    if tau_p < 1:
        raise ConfigurationError("pilot length must be at least 1")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(2, tau_p, n_users)) * 2 - 1
    return (signs[0] + 1j * signs[1]) / np.sqrt(2.0 * tau_p)


def gen_orthonormal_pilots(tau_p: int, n_users: int, seed=None) -> np.ndarray:
    """Pilot book with orthonormal columns (requires tau_p >= N).

    QR of a standard complex Gaussian matrix; used for noiseless
    exact-recovery sanity checks rather than realistic overloads.
    """
    if tau_p < n_users:
        raise ConfigurationError("orthonormal pilots require tau_p >= n_users")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((tau_p, n_users)) + 1j * rng.standard_normal((tau_p, n_users))
    q, r = np.linalg.qr(g)
    # fix the phase so the factorization is unique and seeds reproduce exactly
    return q * np.sign(np.diagonal(r).real)


def sample_activity(
    layout: ClusterLayout,
    kind: str,
    k_active: int,
    active_clusters: int = 0,
    seed=None,
) -> ActivityPattern:
    """Draw a sparse activity pattern.

    ``kind="clustered"``: pick ``active_clusters`` clusters uniformly without
    replacement, then ``k_active / active_clusters`` users uniformly within
    each. ``kind="random"``: pick ``k_active`` users uniformly among all N.
    """
    rng = np.random.default_rng(seed)
    n = layout.n_users
    if k_active < 0 or k_active > n:
        raise ConfigurationError(f"cannot activate {k_active} of {n} users")
    gamma = np.zeros(n, dtype=np.int8)

    if kind == "random":
        active = rng.choice(n, size=k_active, replace=False) if k_active else np.empty(0, int)
    elif kind == "clustered":
        if k_active == 0:
            active = np.empty(0, int)
        else:
            if active_clusters < 1 or active_clusters > layout.n_clusters:
                raise ConfigurationError("invalid number of active clusters")
            if k_active % active_clusters != 0:
                raise ConfigurationError(
                    "clustered activity needs k_active divisible by active_clusters"
                )
            per = k_active // active_clusters
            if per > layout.users_per_cluster:
                raise ConfigurationError(
                    f"{per} active users per cluster exceeds cluster size "
                    f"{layout.users_per_cluster}"
                )
            chosen = rng.choice(layout.n_clusters, size=active_clusters, replace=False)
            parts = [rng.choice(layout.members[c], size=per, replace=False) for c in chosen]
            active = np.concatenate(parts)
    else:
        raise ConfigurationError(f"unknown activity kind {kind!r}")

    active = np.sort(active.astype(int))
    gamma[active] = 1
    return ActivityPattern(gamma=gamma, active_set=active, pattern_kind=kind)


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(
    activity: ActivityPattern,
    layout: ClusterLayout,
    pset: PrecisionSet,
    seed=None,
) -> np.ndarray:
    """Effective channel X (M, N): x_i = gamma_i sqrt(p_i) h_i.

    Active columns are drawn as sqrt(p_i) Sigma_l^{-1/2} w with w standard
    complex Gaussian; inactive columns are exactly zero.
    """
    rng = np.random.default_rng(seed)
    m = pset.m_antennas
    x = np.zeros((m, layout.n_users), dtype=complex)

    factors: dict[int, np.ndarray] = {}
    for i in activity.active_set:
        l = layout.cluster_of(i)
        if l not in factors:
            # covariance square root via the precision eigendecomposition
            evals, evecs = np.linalg.eigh(pset.precisions[l])
            factors[l] = (evecs / np.sqrt(evals)) @ evecs.conj().T
        w = _complex_gaussian(rng, m)
        x[:, i] = np.sqrt(pset.powers[i]) * (factors[l] @ w)
    return x


def synthesize(pilots: np.ndarray, channel: np.ndarray, noise_var: float, seed=None) -> np.ndarray:
    """Received pilot signal Y = Phi X^T + W, W entries i.i.d. CN(0, noise_var)."""
    tau_p = pilots.shape[0]
    m = channel.shape[0]
    y = pilots @ channel.T
    if noise_var > 0:
        rng = np.random.default_rng(seed)
        y = y + np.sqrt(noise_var) * _complex_gaussian(rng, (tau_p, m))
    return y


def build_prior_guess(sigma_l: np.ndarray, zeta: float, seed=None) -> np.ndarray:
    """Mismatched prior guess B_l = zeta Psi_l + (1 - zeta) Sigma_l.

    Psi_l is a random Hermitian PSD matrix (A A^H with A standard complex
    Gaussian) trace-normalized to trace(Sigma_l); ``zeta`` in [0, 1] sets the
    average mismatch level. The result is verified Hermitian positive
    definite.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ConfigurationError("zeta must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    m = sigma_l.shape[0]
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    psi = a @ a.conj().T
    psi *= np.trace(sigma_l).real / np.trace(psi).real
    b = zeta * psi + (1.0 - zeta) * sigma_l
    b = 0.5 * (b + b.conj().T)
    if np.linalg.eigvalsh(b).min() <= 0:
        raise ConfigurationError("prior guess lost positive definiteness")
    return b


def save_instance(
    path,
    instance: ProblemInstance,
    layout: ClusterLayout,
    pset: PrecisionSet,
    prior_guess: np.ndarray,
    seed: int,
) -> None:
    """Write one instance to an ``.npz`` container.

    Arrays stored: ``pilots`` (tau_p, N), ``channel`` (M, N), ``received``
    (tau_p, M), ``gamma`` (N,), ``precisions`` (C, M, M), ``powers`` (N,),
    ``prior_guess`` (C, M, M), plus scalars ``noise_var``, ``seed``,
    ``n_clusters`` and the string ``pattern_kind``.
    """
    np.savez(
        path,
        pilots=instance.pilots,
        channel=instance.channel,
        received=instance.received,
        gamma=instance.activity.gamma,
        precisions=pset.precisions,
        powers=pset.powers,
        prior_guess=np.asarray(prior_guess),
        noise_var=instance.noise_var,
        seed=seed,
        n_clusters=layout.n_clusters,
        pattern_kind=instance.activity.pattern_kind,
    )


def load_instance(path):
    """Inverse of :func:`save_instance`.

    Returns ``(instance, layout, pset, prior_guess, seed)``.
    """
    with np.load(path, allow_pickle=False) as z:
        gamma = z["gamma"]
        layout = build_cluster_layout(gamma.size, int(z["n_clusters"]))
        activity = ActivityPattern(
            gamma=gamma,
            active_set=np.flatnonzero(gamma),
            pattern_kind=str(z["pattern_kind"]),
        )
        instance = ProblemInstance(
            pilots=z["pilots"],
            channel=z["channel"],
            received=z["received"],
            noise_var=float(z["noise_var"]),
            activity=activity,
        )
        pset = PrecisionSet(precisions=z["precisions"], powers=z["powers"])
        return instance, layout, pset, z["prior_guess"], int(z["seed"])
