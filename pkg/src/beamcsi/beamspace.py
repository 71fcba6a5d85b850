"""Statistical pre-beamformer design and the dimension-reduction criteria.

A pre-beamformer is an N x D matrix applied to every received snapshot before
estimation.  The generalized-eigenvector construction (GEB) picks, per MPC,
the dominant generalized eigenvectors of the pencil (signal covariance,
interference-plus-noise covariance); the conventional construction (here
called DFT beamspace) keeps the dominant eigenvectors of the delay-summed
signal covariance and ignores the interference structure.

Three design criteria - trace of the normalized estimation error, estimation
error volume, and mutual information between channel and reduced observation -
are all functions of the same eigenvalues of one matrix built from the pilot
correlation and beamformer-output SNR matrices, so a single report carries
them all.
"""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .array_channel import ArrayGeometry, GroupSpec, SpatialCovariance, _steering_matrix
from .interference import NoiseCovariance
from .training import TrainingMatrices, r_code

__all__ = [
    "BeamKind",
    "Normalization",
    "Beamspace",
    "SnrMatrix",
    "CriterionReport",
    "ConditioningError",
    "generalized_eig",
    "snr_matrix",
    "build_f",
    "allocate_dimensions",
    "allocate_dimensions_exhaustive",
    "build_geb",
    "build_dft",
    "beam_pattern",
]

_EIG_TOL = 1e-12


class ConditioningError(RuntimeError):
    """A matrix that should be invertible is numerically singular."""


class BeamKind(str, enum.Enum):
    GEB = "geb"
    DFT = "dft"
    CUSTOM = "custom"


class Normalization(str, enum.Enum):
    R_ETA_ORTHONORMAL = "r_eta_orthonormal"
    EUCLIDEAN_ORTHONORMAL = "euclidean_orthonormal"


@dataclass(frozen=True, eq=False)
class Beamspace:
    """N x D pre-beamformer with per-MPC block structure.

    ``blocks`` lists (mpc_delay, block_size) pairs in delay order; a delay of
    ``None`` marks a unified block not tied to a single MPC (as produced by
    the DFT construction).  Block sizes sum to the column count.
    """

    s: np.ndarray
    blocks: tuple[tuple[int | None, int], ...]
    kind: BeamKind
    normalization: Normalization

    def __post_init__(self):
        if sum(size for _, size in self.blocks) != self.s.shape[1]:
            raise ValueError("block sizes must sum to the number of columns")

    @property
    def dim(self) -> int:
        return self.s.shape[1]

    def block_columns(self, delay: int) -> range:
        """Column range belonging to the block of ``delay``."""
        start = 0
        for blk_delay, size in self.blocks:
            if blk_delay == delay:
                return range(start, start + size)
            start += size
        raise KeyError(f"no block for delay {delay}")


@dataclass(frozen=True, eq=False)
class SnrMatrix:
    """Beamformer-output SNR matrix for one delay (``delay=None`` for the total)."""

    matrix: np.ndarray
    delay: int | None


@dataclass(frozen=True, eq=False)
class CriterionReport:
    """The three dimension-reduction criteria evaluated from shared eigenvalues.

    All quantities are functions of ``f_eigvals``: the normalized-error trace
    adds sum(1/(k+1)) to the coefficient-count surplus, the mutual information
    is sum(log(k+1)) nats, and the log error-volume reduction is its negative.
    """

    f_eigvals: np.ndarray
    nmse_trace: float
    log_error_volume_reduction: float
    mutual_info: float
    normalization: Normalization


def generalized_eig(r_num: np.ndarray, r_den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Generalized eigenpairs of a Hermitian PSD/PD pencil.

    Solves ``r_num v = lam r_den v`` by the Cholesky-whitening route (LAPACK's
    itype-1 Hermitian solver); eigenvalues come back sorted descending and the
    eigenvectors satisfy ``v_k^H r_den v_n = delta_kn``.
    """
    den_vals = np.linalg.eigvalsh(r_den)
    if den_vals[0] < _EIG_TOL * max(den_vals[-1], 0.0) or den_vals[0] <= 0:
        raise ConditioningError(
            f"denominator pencil matrix is numerically singular "
            f"(min/max eigenvalue {den_vals[0]:.3e}/{den_vals[-1]:.3e})"
        )
    vals, vecs = scipy.linalg.eigh(r_num, r_den)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    floor = -1e-9 * max(abs(vals[0]), 1.0)
    if vals[-1] < floor:
        raise ValueError(f"numerator matrix is not PSD (eigenvalue {vals[-1]:.3e})")
    return np.maximum(vals, 0.0), vecs


def _reduced_gram(beam: Beamspace, matrix: np.ndarray) -> np.ndarray:
    g = beam.s.conj().T @ matrix @ beam.s
    return 0.5 * (g + g.conj().T)


def _solve_reduced_noise(beam: Beamspace, r_eta: NoiseCovariance) -> np.ndarray:
    b = _reduced_gram(beam, r_eta.r_eta)
    vals = np.linalg.eigvalsh(b)
    if vals[0] < _EIG_TOL * max(vals[-1], 0.0) or vals[0] <= 0:
        raise ConditioningError("projected noise covariance is numerically singular")
    return b


def snr_matrix(
    beam: Beamspace,
    cov: SpatialCovariance,
    r_eta: NoiseCovariance,
    rho: float = 1.0,
    delay: int | None = None,
) -> SnrMatrix:
    """D x D beamformer-output SNR matrix for one MPC (or the delay total).

    Computes ``rho (S^H R_eta S)^{-1} (S^H R S)``; for the total variant pass
    the delay-summed covariance with ``rho = 1`` and ``delay=None``.  The
    eigenvalues are real and non-negative for any full-column-rank beamspace.
    """
    b = _solve_reduced_noise(beam, r_eta)
    a = _reduced_gram(beam, cov.matrix)
    return SnrMatrix(matrix=rho * np.linalg.solve(b, a), delay=delay)


def _whitened_snr_terms(
    beam: Beamspace,
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
) -> list[np.ndarray]:
    """Hermitian matrices sharing the SNR matrices' spectra, one per delay.

    Congruence by the inverse Cholesky factor of the projected noise maps each
    ``rho_l (S^H R_eta S)^{-1} (S^H R_l S)`` to a Hermitian matrix with the
    same eigenvalues; using the same factor for every delay preserves the
    spectrum of any weighted Kronecker sum of the terms.
    """
    b = _solve_reduced_noise(beam, r_eta)
    chol = np.linalg.cholesky(b)
    terms = []
    for mpc, cov in zip(group.mpcs, covs):
        a = _reduced_gram(beam, cov.matrix) * mpc.power
        half = scipy.linalg.solve_triangular(chol, a, lower=True)
        white = scipy.linalg.solve_triangular(chol, half.conj().T, lower=True).conj().T
        terms.append(0.5 * (white + white.conj().T))
    return terms


def build_f(
    beam: Beamspace,
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
) -> tuple[np.ndarray, CriterionReport]:
    """Criterion matrix (pilot correlation kron output-SNR, summed over delays).

    Returns the Hermitian PSD representative of the matrix together with the
    criterion report derived from its eigenvalues.
    """
    terms = _whitened_snr_terms(beam, group, covs, r_eta)
    t = train.length
    d = beam.dim
    f = np.zeros((t * d, t * d), dtype=complex)
    for delay, term in enumerate(terms):
        f += np.kron(r_code(train, delay), term)
    f = 0.5 * (f + f.conj().T)
    kappa = np.maximum(np.linalg.eigvalsh(f), 0.0)
    coeff_count = group.num_users * sum(c.rank for c in covs)
    report = CriterionReport(
        f_eigvals=kappa[::-1],
        nmse_trace=float(np.sum(1.0 / (kappa + 1.0)) + (coeff_count - t * d)),
        log_error_volume_reduction=float(-np.sum(np.log1p(kappa))),
        mutual_info=float(np.sum(np.log1p(kappa))),
        normalization=beam.normalization,
    )
    return f, report


def _pencil_pools(
    group: GroupSpec,
    covs: list[SpatialCovariance],
) -> list[tuple[tuple[int, ...], SpatialCovariance]]:
    """Group delays whose MPC covariances are identical into shared pencils."""
    pools: list[tuple[list[int], SpatialCovariance]] = []
    for delay, cov in enumerate(covs):
        for members, ref in pools:
            if ref is cov or np.array_equal(ref.matrix, cov.matrix):
                members.append(delay)
                break
        else:
            pools.append(([delay], cov))
    return [(tuple(members), cov) for members, cov in pools]


def _pool_gain_tables(
    group: GroupSpec,
    pools: list[tuple[tuple[int, ...], SpatialCovariance]],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
) -> list[np.ndarray]:
    """Per-pool marginal gain of admitting each next eigenvector.

    Admitting eigenvector ``n`` of a pool lets every member delay's pilot
    modes see its generalized eigenvalue, recovering a fraction
    ``beta lam / (beta lam + 1)`` of that direction's channel power per
    positive pilot mode.  Weighting by the direction's power (delay power
    times covariance eigenvalue) makes the greedy target the channel-domain
    error rather than the coefficient-domain one, which keeps weaker sectors
    represented at small dimension budgets.
    """
    tables = []
    for members, cov in pools:
        lam = generalized_eig(cov.matrix, r_eta.r_eta)[0][: cov.rank]
        gains = np.zeros(cov.rank)
        for delay in members:
            beta = np.linalg.eigvalsh(r_code(train, delay))
            beta = beta[beta > 1e-12 * max(beta[-1], 1.0)]
            rho = group.mpcs[delay].power
            prod = beta[:, None] * (rho * lam[None, :])
            recovered = np.sum(prod / (prod + 1.0), axis=0)
            gains += rho * cov.eigvals * recovered
        tables.append(gains)
    return tables


def _split_pool_counts(
    pools: list[tuple[tuple[int, ...], SpatialCovariance]],
    counts: list[int],
    memory: int,
) -> list[int]:
    """Distribute each pool's column count over its member delays round-robin."""
    d = [0] * memory
    for (members, _), count in zip(pools, counts):
        for i in range(count):
            d[members[i % len(members)]] += 1
    return d


def allocate_dimensions(
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
    total_dim: int,
) -> list[int]:
    """Greedy per-MPC split of the beamspace dimension budget.

    Candidate directions are the generalized eigenvectors of each distinct
    (signal, interference) pencil, consumed in descending eigenvalue order;
    delays sharing a covariance draw from one shared pool so no direction is
    counted twice.  If the budget exceeds the total pool capacity the
    allocation clamps with a warning - the surplus dimensions carry no signal.
    """
    if total_dim < 1:
        raise ValueError("total_dim must be >= 1")
    if total_dim < group.memory:
        warnings.warn(
            f"beamspace dimension {total_dim} is below the MPC count {group.memory}",
            RuntimeWarning,
            stacklevel=2,
        )
    pools = _pencil_pools(group, covs)
    tables = _pool_gain_tables(group, pools, r_eta, train)
    capacity = sum(t.size for t in tables)
    budget = total_dim
    if budget > capacity:
        warnings.warn(
            f"requested dimension {total_dim} exceeds the signal rank {capacity}; "
            "clamping (extra dimensions carry zero gain)",
            RuntimeWarning,
            stacklevel=2,
        )
        budget = capacity

    counts = [0] * len(pools)
    for _ in range(budget):
        best, best_gain = -1, -np.inf
        for p, table in enumerate(tables):
            if counts[p] < table.size and table[counts[p]] > best_gain:
                best, best_gain = p, table[counts[p]]
        counts[best] += 1
    return _split_pool_counts(pools, counts, group.memory)


def allocate_dimensions_exhaustive(
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
    total_dim: int,
    max_combinations: int = 10_000,
) -> list[int]:
    """Reference allocator: enumerate every split and keep the best total gain.

    Only meant for validation on small candidate spaces; raises when the
    enumeration would exceed ``max_combinations``.
    """
    pools = _pencil_pools(group, covs)
    tables = _pool_gain_tables(group, pools, r_eta, train)
    budget = min(total_dim, sum(t.size for t in tables))
    ranges = [range(min(t.size, budget) + 1) for t in tables]
    size = int(np.prod([len(r) for r in ranges]))
    if size > max_combinations:
        raise ValueError(f"candidate space {size} exceeds {max_combinations}")
    best_counts, best_gain = None, -np.inf
    for combo in itertools.product(*ranges):
        if sum(combo) != budget:
            continue
        gain = sum(float(np.sum(t[:c])) for t, c in zip(tables, combo))
        if gain > best_gain + 1e-15:
            best_gain, best_counts = gain, combo
    assert best_counts is not None
    return _split_pool_counts(pools, list(best_counts), group.memory)


def _orthonormalize(s: np.ndarray, metric: np.ndarray | None) -> np.ndarray:
    """Ordered orthonormalization of the columns, optionally in a PD metric.

    QR in the whitened coordinates preserves every leading column span, so the
    per-MPC block structure keeps its meaning while the Gram matrix in the
    metric becomes exactly the identity.
    """
    if metric is None:
        q, _ = np.linalg.qr(s)
        return q
    chol = np.linalg.cholesky(metric)
    whitened = chol.conj().T @ s
    q, _ = np.linalg.qr(whitened)
    return scipy.linalg.solve_triangular(chol.conj().T, q, lower=False)


def build_geb(
    group: GroupSpec,
    covs: list[SpatialCovariance],
    r_eta: NoiseCovariance,
    train: TrainingMatrices,
    total_dim: int,
    normalization: Normalization = Normalization.R_ETA_ORTHONORMAL,
) -> Beamspace:
    """Generalized-eigenvector beamspace with per-MPC sub-beamformers.

    Each MPC block holds dominant generalized eigenvectors of its (signal,
    interference-plus-noise) pencil; delays sharing a covariance consume one
    shared eigenvector pool in order, which keeps the columns independent.
    The default normalization makes the columns orthonormal in the
    interference metric; the Euclidean option re-orthonormalizes by thin QR.
    Both preserve each leading block's span, so estimates are unaffected.
    """
    allocation = allocate_dimensions(group, covs, r_eta, train, total_dim)
    pools = _pencil_pools(group, covs)
    basis_by_pool = [generalized_eig(cov.matrix, r_eta.r_eta)[1] for _, cov in pools]
    pool_of_delay = {}
    for p, (members, _) in enumerate(pools):
        for delay in members:
            pool_of_delay[delay] = p

    consumed = [0] * len(pools)
    columns = []
    blocks = []
    for delay, d_l in enumerate(allocation):
        p = pool_of_delay[delay]
        start = consumed[p]
        columns.append(basis_by_pool[p][:, start : start + d_l])
        consumed[p] += d_l
        blocks.append((delay, d_l))
    s = np.hstack(columns) if columns else np.zeros((covs[0].dim, 0), dtype=complex)

    metric = r_eta.r_eta if normalization is Normalization.R_ETA_ORTHONORMAL else None
    s = _orthonormalize(s, metric)
    return Beamspace(s=s, blocks=tuple(blocks), kind=BeamKind.GEB, normalization=normalization)


def build_dft(r_sum: SpatialCovariance, total_dim: int) -> Beamspace:
    """Conventional beamspace: dominant eigenvectors of the summed covariance.

    Maximizes captured signal power for the given dimension and ignores the
    interference structure entirely; columns are Euclidean orthonormal.
    """
    if not (1 <= total_dim <= r_sum.dim):
        raise ValueError(f"total_dim must be in 1..{r_sum.dim}, got {total_dim}")
    vals, vecs = np.linalg.eigh(r_sum.matrix)
    s = vecs[:, ::-1][:, :total_dim]
    return Beamspace(
        s=s,
        blocks=((None, total_dim),),
        kind=BeamKind.DFT,
        normalization=Normalization.EUCLIDEAN_ORTHONORMAL,
    )


def beam_pattern(
    beam: Beamspace,
    geom: ArrayGeometry,
    thetas_deg: np.ndarray,
) -> np.ndarray:
    """Power response of each column and the aggregate over a grid of azimuths.

    Returns an array of shape (len(thetas), D + 1): squared magnitude of the
    steering-vector response per column, with the aggregate (sum over columns)
    in the last position.
    """
    steer = _steering_matrix(geom, np.asarray(thetas_deg, dtype=float))
    response = np.abs(beam.s.conj().T @ steer) ** 2
    aggregate = np.sum(response, axis=0, keepdims=True)
    return np.vstack([response, aggregate]).T
