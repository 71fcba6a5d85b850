"""Reduced-rank channel estimators exposed as explicit linear maps.

Every estimator is materialized as the matrix taking the stacked N*T
observation to the channel estimate, which lets the evaluation layer compute
error covariances in closed form.  Construction never forms or inverts an
(N*T)-sized system except for the full-dimensional Wiener baseline; the only
large solve is the T*D-sized reduced observation covariance.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .array_channel import (
    ChannelRealization,
    GroupSpec,
    KltBasis,
    SpatialCovariance,
    _crandn,
    _rng_for,
    sample_group_channels,
)
from .beamspace import Beamspace, ConditioningError
from .interference import NoiseCovariance
from .training import TrainingMatrices, r_code

__all__ = [
    "EstimatorKind",
    "LinearEstimator",
    "Observation",
    "synthesize_observation",
    "rr_mmse_joint",
    "rr_mmse_angle",
    "ls_angle",
    "correlator_rank1",
    "correlator_general",
    "derive_clusters",
    "full_wiener",
]


class EstimatorKind(str, enum.Enum):
    RRMMSE_JOINT = "rrmmse_joint"
    RRMMSE_ANGLE = "rrmmse_angle"
    LS_ANGLE = "ls_angle"
    CORR_RANK1 = "corr_rank1"
    CORR_GENERAL = "corr_general"
    FULL_WIENER = "full_wiener"


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    """Explicit linear channel estimator.

    ``w_eff`` maps the stacked observation to the effective (beamformed)
    channel estimate; ``w_full``, when available, maps it to the full-array
    channel estimate and satisfies ``(I kron S^H) w_full = w_eff``.
    """

    w_eff: np.ndarray  # (D K L, N T)
    w_full: np.ndarray | None  # (N K L, N T)
    kind: EstimatorKind
    beam: Beamspace | None

    def estimate_effective(self, y: np.ndarray) -> np.ndarray:
        return self.w_eff @ y

    def estimate_full(self, y: np.ndarray) -> np.ndarray:
        if self.w_full is None:
            raise ValueError(f"{self.kind.value} has no full-channel form")
        return self.w_full @ y


@dataclass(frozen=True, eq=False)
class Observation:
    """Stacked received block ``y`` and, when a beam is given, its projection."""

    y: np.ndarray
    y_reduced: np.ndarray | None = None


def _synthesis_matrix(train: TrainingMatrices, num_antennas: int) -> np.ndarray:
    """Map from the stacked channel to the noiseless stacked observation."""
    return np.kron(train.complete, np.eye(num_antennas))


def synthesize_observation(
    group: GroupSpec,
    realization: ChannelRealization,
    train: TrainingMatrices,
    noise: NoiseCovariance,
    seed: int,
    trial: int = 0,
    beam: Beamspace | None = None,
    mode: str = "statistical",
    interferers: tuple[tuple[GroupSpec, KltBasis, float], ...] = (),
) -> Observation:
    """Received training block for one channel draw.

    The intra-group part convolves each user's pilots with its multi-path
    channel.  In ``statistical`` mode the interference-plus-noise term is a
    temporally white Gaussian with spatial covariance ``noise.r_eta``; in
    ``explicit`` mode interfering groups transmit i.i.d. QPSK symbol streams
    of per-symbol energy given in ``interferers`` through freshly sampled
    channels, and only the white noise floor is added.
    """
    n = noise.dim
    t = train.length
    y = _synthesis_matrix(train, n) @ realization.stacked

    rng = _rng_for(seed, group.id, trial, 1)
    if mode == "statistical":
        # row-vector form of (cholesky factor) @ white, so E[xi xi^H] = r_eta
        chol = np.linalg.cholesky(noise.r_eta)
        white = _crandn(rng, t, n)
        y = y + (white @ chol.T).reshape(-1)
    elif mode == "explicit":
        y = y + np.sqrt(noise.noise_floor) * _crandn(rng, t * n)
        for other, basis, symbol_energy in interferers:
            draw = sample_group_channels(other, basis, seed, trial=trial + 1)
            span = t + other.memory - 1
            qpsk = np.exp(0.5j * np.pi * rng.integers(0, 4, size=(other.num_users, span)))
            symbols = np.sqrt(symbol_energy) * qpsk
            for k in range(other.num_users):
                for time in range(t):
                    for l in range(other.memory):
                        sym = symbols[k, time - l + other.memory - 1]
                        y[time * n : (time + 1) * n] += draw.per_user_mpcs[k, l] * sym
    else:
        raise ValueError(f"unknown synthesis mode {mode!r}")

    y_reduced = None
    if beam is not None:
        y_reduced = (y.reshape(t, n) @ beam.s.conj()).reshape(-1)
    return Observation(y=y, y_reduced=y_reduced)


def _delay_row_selector(train: TrainingMatrices, delay: int) -> np.ndarray:
    """Rows of the conjugate-transposed training matrix kept for one delay."""
    kl = train.num_users * train.memory
    z = np.zeros((kl, train.length), dtype=complex)
    idx = np.arange(delay, kl, train.memory)
    z[idx, :] = train.complete[:, idx].conj().T
    return z


def _reduced_core(
    beam: Beamspace,
    signal_terms: list[tuple[np.ndarray, np.ndarray]],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
) -> np.ndarray:
    """Solve the reduced observation covariance against the projection map.

    ``signal_terms`` holds (temporal Gram, projected spatial covariance)
    pairs whose Kronecker products, plus the projected noise, form the T*D
    covariance of the reduced observation.  Returns its inverse applied to
    (I_T kron S^H); this T*D x N*T matrix is the only large factor shared by
    the reduced-rank estimators.
    """
    t = train.length
    b = beam.s.conj().T @ r_eta.r_eta @ beam.s
    cov = np.kron(np.eye(t), b)
    for gram, projected in signal_terms:
        cov += np.kron(gram, projected)
    cov = 0.5 * (cov + cov.conj().T)
    try:
        return np.linalg.solve(cov, np.kron(np.eye(t), beam.s.conj().T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - PD by construction
        raise ConditioningError("reduced observation covariance is singular") from exc


def rr_mmse_joint(
    beam: Beamspace,
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
) -> LinearEstimator:
    """Reduced-rank Wiener estimator using the per-delay angle-delay profile.

    The estimate is the conditional mean of the channel given the beamformed
    observation: per delay, a temporal finger selects the delay's pilot
    columns while the projected covariances weight the spatial directions.
    """
    signal_terms = []
    front_full_terms = []
    front_eff_terms = []
    for delay, (mpc, cov) in enumerate(zip(group.mpcs, covs)):
        projected = beam.s.conj().T @ cov.matrix @ beam.s
        signal_terms.append((mpc.power * r_code(train, delay), projected))
        selector = _delay_row_selector(train, delay)
        front_full_terms.append((selector, mpc.power * (cov.matrix @ beam.s)))
        front_eff_terms.append((selector, mpc.power * projected))
    core = _reduced_core(beam, signal_terms, r_eta, train)
    w_full = sum(np.kron(sel, mat) for sel, mat in front_full_terms) @ core
    w_eff = sum(np.kron(sel, mat) for sel, mat in front_eff_terms) @ core
    return LinearEstimator(
        w_eff=w_eff, w_full=w_full, kind=EstimatorKind.RRMMSE_JOINT, beam=beam
    )


def rr_mmse_angle(
    beam: Beamspace,
    group: GroupSpec,
    r_sum: SpatialCovariance,
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
) -> LinearEstimator:
    """Angle-domain reduced-rank Wiener estimator.

    Approximates the joint estimator by unifying all delays under the summed
    spatial covariance, so only the total pilot Gram matrix and one SNR matrix
    enter; coincides with the joint estimator for single-tap channels.
    """
    projected = beam.s.conj().T @ r_sum.matrix @ beam.s
    signal_terms = [(r_code(train, None), projected)]
    core = _reduced_core(beam, signal_terms, r_eta, train)
    x_rows = train.complete.conj().T
    w_full = np.kron(x_rows, r_sum.matrix @ beam.s) @ core
    w_eff = np.kron(x_rows, projected) @ core
    return LinearEstimator(
        w_eff=w_eff, w_full=w_full, kind=EstimatorKind.RRMMSE_ANGLE, beam=beam
    )


def ls_angle(beam: Beamspace, train: TrainingMatrices) -> LinearEstimator:
    """Least-squares pilot correlation after projecting onto the beamspace.

    Uses no covariance knowledge beyond the beamspace itself: the pilot matrix
    is inverted on its column or row space depending on whether the training
    length covers the unknown count, with a pseudoinverse fallback (and a
    warning) when the pilot matrix is rank deficient in both senses.
    """
    x = train.complete
    t, kl = x.shape
    if t >= kl:
        gram = x.conj().T @ x
        if np.linalg.matrix_rank(gram) == kl:
            pinv = np.linalg.solve(gram, x.conj().T)
        else:
            warnings.warn("pilot matrix is rank deficient; using pseudoinverse",
                          RuntimeWarning, stacklevel=2)
            pinv = np.linalg.pinv(x)
    else:
        gram = x @ x.conj().T
        if np.linalg.matrix_rank(gram) == t:
            pinv = x.conj().T @ np.linalg.inv(gram)
        else:
            warnings.warn("pilot matrix is rank deficient; using pseudoinverse",
                          RuntimeWarning, stacklevel=2)
            pinv = np.linalg.pinv(x)
    w_eff = np.kron(pinv, beam.s.conj().T)
    return LinearEstimator(w_eff=w_eff, w_full=None, kind=EstimatorKind.LS_ANGLE, beam=beam)


def derive_clusters(group: GroupSpec) -> tuple[tuple[int, ...], ...]:
    """Default delay clustering: delays sharing a sector form one cluster."""
    clusters: list[tuple[tuple[float, float], list[int]]] = []
    for mpc in group.mpcs:
        key = (mpc.sector.lo_deg, mpc.sector.hi_deg)
        for ref, members in clusters:
            if ref == key:
                members.append(mpc.delay)
                break
        else:
            clusters.append((key, [mpc.delay]))
    return tuple(tuple(members) for _, members in clusters)


def _embedded_pilot_pinv(train: TrainingMatrices, delays: tuple[int, ...]) -> np.ndarray:
    """Pseudoinverse of the pilot matrix restricted to some delays' columns.

    The restricted matrix keeps only those columns (zeroing the rest), so its
    pseudoinverse is the small pseudoinverse embedded back into the full rows.
    """
    kl = train.num_users * train.memory
    idx = np.concatenate([np.arange(d, kl, train.memory) for d in sorted(delays)])
    idx = np.sort(idx)
    small = np.linalg.pinv(train.complete[:, idx])
    out = np.zeros((kl, train.length), dtype=complex)
    out[idx, :] = small
    return out


def correlator_rank1(
    beam: Beamspace,
    train: TrainingMatrices,
    group: GroupSpec,
) -> LinearEstimator:
    """Spatio-temporal correlator for rank-one MPCs, one beam column per delay.

    Each delay gets a temporal correlator (pseudoinverse of its pilot columns)
    composed with its single sub-beamformer column; requires a beamspace with
    exactly one column per MPC.
    """
    expected = tuple((delay, 1) for delay in range(group.memory))
    if beam.blocks != expected or beam.dim != group.memory:
        raise ValueError("rank-1 correlator needs one beam column per MPC")
    d = beam.dim
    n = beam.s.shape[0]
    w_eff = np.zeros((train.num_users * train.memory * d, n * train.length), dtype=complex)
    for delay in range(group.memory):
        row = np.zeros((d, n), dtype=complex)
        row[delay, :] = beam.s[:, delay].conj()
        w_eff += np.kron(_embedded_pilot_pinv(train, (delay,)), row)
    return LinearEstimator(w_eff=w_eff, w_full=None, kind=EstimatorKind.CORR_RANK1, beam=beam)


def correlator_general(
    beam: Beamspace,
    train: TrainingMatrices,
    group: GroupSpec,
    clusters: tuple[tuple[int, ...], ...] | None = None,
) -> LinearEstimator:
    """Spatio-temporal correlator for clustered general-rank MPCs.

    Delays are partitioned into clusters with nearly common angular support;
    each cluster's pilot columns are jointly pseudo-inverted and composed with
    that cluster's beamspace columns.  With one cluster per delay and single
    columns this reduces to the rank-one correlator; a single cluster over all
    delays reduces to the angle-domain least squares estimator.
    """
    if clusters is None:
        clusters = derive_clusters(group)
    flat = sorted(d for cluster in clusters for d in cluster)
    if flat != list(range(group.memory)):
        raise ValueError("clusters must partition the delays exactly once each")

    column_sets = []
    if beam.blocks == ((None, beam.dim),):
        if len(clusters) != 1:
            raise ValueError("a unified beamspace supports only the single-cluster form")
        column_sets.append(np.arange(beam.dim))
    else:
        for cluster in clusters:
            cols = np.concatenate([np.array(beam.block_columns(d)) for d in cluster])
            column_sets.append(np.sort(cols))
        flat_cols = np.sort(np.concatenate(column_sets))
        if not np.array_equal(flat_cols, np.arange(beam.dim)):
            raise ValueError("cluster columns must partition the beamspace columns")

    d = beam.dim
    n = beam.s.shape[0]
    w_eff = np.zeros((train.num_users * train.memory * d, n * train.length), dtype=complex)
    for cluster, cols in zip(clusters, column_sets):
        rows = np.zeros((d, n), dtype=complex)
        rows[cols, :] = beam.s[:, cols].conj().T
        w_eff += np.kron(_embedded_pilot_pinv(train, tuple(cluster)), rows)
    return LinearEstimator(w_eff=w_eff, w_full=None, kind=EstimatorKind.CORR_GENERAL, beam=beam)


def full_wiener(
    group: GroupSpec,
    covs: list[SpatialCovariance],
    noise: NoiseCovariance,
    train: TrainingMatrices,
    max_obs_dim: int = 4096,
) -> LinearEstimator:
    """Unreduced LMMSE baseline; the one place an N*T system is solved.

    Pass a noise covariance with the interference zeroed to obtain the
    interference-free benchmark.
    """
    n = noise.dim
    t = train.length
    if n * t > max_obs_dim:
        raise MemoryError(
            f"full Wiener needs an {n * t} x {n * t} solve, above the guard {max_obs_dim}"
        )
    r_y = np.kron(np.eye(t), noise.r_eta)
    for delay, (mpc, cov) in enumerate(zip(group.mpcs, covs)):
        r_y += mpc.power * np.kron(r_code(train, delay), cov.matrix)
    r_y = 0.5 * (r_y + r_y.conj().T)

    kl = group.num_users * group.memory
    cross = np.zeros((n * kl, n * t), dtype=complex)
    for delay, (mpc, cov) in enumerate(zip(group.mpcs, covs)):
        cross += np.kron(_delay_row_selector(train, delay), mpc.power * cov.matrix)
    w_full = np.linalg.solve(r_y, cross.conj().T).conj().T
    return LinearEstimator(w_eff=w_full, w_full=w_full, kind=EstimatorKind.FULL_WIENER, beam=None)
