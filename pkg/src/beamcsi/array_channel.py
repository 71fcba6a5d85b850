"""Array geometry, per-path spatial covariances, KLT factors and channel sampling.

The propagation model is a uniform linear array receiving a group of users
whose resolvable multi-path components (MPCs) each arrive from a bounded
azimuth sector.  Every MPC carries a trace-one spatial covariance obtained by
integrating the outer product of steering vectors over its sector with a
uniform power-azimuth spectrum.  Channels are drawn through the truncated
Karhunen-Loeve factors of those covariances, so the sampled second-order
statistics match the covariances exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "ArrayGeometry",
    "AngularSector",
    "MpcSpec",
    "GroupSpec",
    "SpatialCovariance",
    "KltBasis",
    "ChannelRealization",
    "steering_vector",
    "sector_covariance",
    "truncate_eigenspace",
    "mpc_covariances",
    "klt_basis",
    "sample_group_channels",
    "group_statics",
]

_DEG = np.pi / 180.0
_HERMITIAN_TOL = 1e-12
_PSD_FLOOR = -1e-9
_DEGENERATE_WIDTH_DEG = 1e-9


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along the y-axis, spacing in carrier wavelengths."""

    num_elements: int
    element_spacing: float = 0.5
    axis: str = "y"

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if self.element_spacing <= 0:
            raise ValueError(f"element_spacing must be > 0, got {self.element_spacing}")


@dataclass(frozen=True)
class AngularSector:
    """Azimuth interval (degrees) supporting the arrival of one MPC."""

    lo_deg: float
    hi_deg: float

    def __post_init__(self):
        if not (-90.0 < self.lo_deg < 90.0 and -90.0 < self.hi_deg < 90.0):
            raise ValueError(f"sector bounds must lie in (-90, 90): {self}")
        if self.lo_deg > self.hi_deg:
            raise ValueError(f"sector lower bound exceeds upper bound: {self}")

    @property
    def center_deg(self) -> float:
        return 0.5 * (self.lo_deg + self.hi_deg)

    @property
    def width_deg(self) -> float:
        return self.hi_deg - self.lo_deg


@dataclass(frozen=True)
class MpcSpec:
    """One resolvable multi-path component: delay tap, relative power, sector."""

    delay: int
    power: float
    sector: AngularSector
    rank_override: int | None = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError(f"delay must be non-negative, got {self.delay}")
        if not (0.0 < self.power <= 1.0):
            raise ValueError(f"power must be in (0, 1], got {self.power}")
        if self.rank_override is not None and self.rank_override < 1:
            raise ValueError("rank_override must be a positive integer")


@dataclass(frozen=True)
class GroupSpec:
    """A user group sharing per-delay spatial statistics."""

    id: int
    num_users: int
    memory: int
    mpcs: tuple[MpcSpec, ...]

    def __post_init__(self):
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        mpcs = tuple(sorted(self.mpcs, key=lambda m: m.delay))
        object.__setattr__(self, "mpcs", mpcs)
        delays = [m.delay for m in mpcs]
        if delays != list(range(self.memory)):
            raise ValueError(
                f"MPC delays must be exactly 0..{self.memory - 1}, got {delays}"
            )
        total = sum(m.power for m in mpcs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"MPC powers must sum to 1 (got {total!r})")

    @property
    def pdp(self) -> np.ndarray:
        return np.array([m.power for m in self.mpcs])


def _check_hermitian(matrix: np.ndarray, tol: float = _HERMITIAN_TOL) -> None:
    dev = np.max(np.abs(matrix - matrix.conj().T))
    if dev > tol * max(1.0, np.max(np.abs(matrix))):
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")


@dataclass(frozen=True, eq=False)
class SpatialCovariance:
    """Hermitian PSD spatial covariance with cached dominant eigenfactors.

    ``matrix`` is N x N; ``eigvecs``/``eigvals`` hold the ``rank`` retained
    eigenpairs with eigenvalues strictly positive and sorted descending.
    """

    matrix: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    rank: int
    trace_normalized: bool = True

    def __post_init__(self):
        _check_hermitian(self.matrix)
        if self.rank < 1 or self.eigvals.shape != (self.rank,):
            raise ValueError("rank inconsistent with retained eigenvalues")
        if np.any(self.eigvals <= 0):
            raise ValueError("retained eigenvalues must be strictly positive")
        if np.any(np.diff(self.eigvals) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        if self.trace_normalized:
            tr = np.trace(self.matrix).real
            if abs(tr - 1.0) > 1e-10:
                raise ValueError(f"trace-normalized covariance has trace {tr!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def steering_vector(geom: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Array response for a plane wave from azimuth ``theta_deg``.

    Element ``n`` (0-based) has phase ``exp(j 2 pi d n sin(theta))`` with the
    spacing ``d`` measured in wavelengths; every entry is unit modulus.
    """
    if not (-90.0 < theta_deg < 90.0):
        raise ValueError(f"azimuth must lie in the open interval (-90, 90), got {theta_deg}")
    n = np.arange(geom.num_elements)
    phase = 2.0 * np.pi * geom.element_spacing * np.sin(theta_deg * _DEG)
    return np.exp(1j * phase * n)


def _steering_matrix(geom: ArrayGeometry, thetas_deg: np.ndarray) -> np.ndarray:
    n = np.arange(geom.num_elements)[:, None]
    phases = 2.0 * np.pi * geom.element_spacing * np.sin(np.asarray(thetas_deg) * _DEG)
    return np.exp(1j * n * phases[None, :])


def _eig_descending(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(matrix)
    return vals[::-1], vecs[:, ::-1]


def sector_covariance(
    geom: ArrayGeometry,
    sector: AngularSector,
    quad_points: int | None = None,
) -> SpatialCovariance:
    """Trace-one covariance of a diffuse source spread uniformly over a sector.

    Integrates a(theta) a(theta)^H over the sector with Gauss-Legendre
    quadrature and a uniform power-azimuth spectrum, then normalizes the trace
    to one.  A sector narrower than 1e-9 degrees degenerates to the rank-one
    point-source covariance at the sector center (a warning is emitted).
    """
    n = geom.num_elements
    if sector.width_deg < _DEGENERATE_WIDTH_DEG:
        warnings.warn(
            f"sector {sector} is degenerate; returning point-source covariance",
            RuntimeWarning,
            stacklevel=2,
        )
        a = steering_vector(geom, sector.center_deg)
        matrix = np.outer(a, a.conj()) / n
        matrix = 0.5 * (matrix + matrix.conj().T)
        return SpatialCovariance(
            matrix=matrix,
            eigvecs=(a / np.linalg.norm(a))[:, None],
            eigvals=np.array([1.0]),
            rank=1,
        )

    if quad_points is None:
        quad_points = 4 * n
    if quad_points < 2 * n:
        raise ValueError(f"quad_points must be >= 2 N = {2 * n}, got {quad_points}")

    nodes, weights = leggauss(quad_points)
    thetas = sector.center_deg + 0.5 * sector.width_deg * nodes
    steer = _steering_matrix(geom, thetas)
    matrix = (steer * weights[None, :]) @ steer.conj().T
    matrix /= np.trace(matrix).real
    matrix = 0.5 * (matrix + matrix.conj().T)

    vals, vecs = _eig_descending(matrix)
    keep = vals > max(vals[0], 0.0) * 1e-14
    rank = max(int(np.count_nonzero(keep)), 1)
    return SpatialCovariance(
        matrix=matrix,
        eigvecs=vecs[:, :rank],
        eigvals=vals[:rank],
        rank=rank,
    )


def truncate_eigenspace(
    cov: SpatialCovariance,
    energy_fraction: float = 0.999,
    rank: int | None = None,
) -> SpatialCovariance:
    """Keep the smallest leading eigenspace capturing ``energy_fraction``.

    The returned covariance is rebuilt from the retained eigenpairs and
    renormalized to trace one, so the low-rank model is exact: channels drawn
    from it have covariance equal to ``matrix`` with no discarded tail.
    ``rank`` overrides the energy criterion.
    """
    if not (0.0 < energy_fraction <= 1.0):
        raise ValueError(f"energy_fraction must be in (0, 1], got {energy_fraction}")
    vals, vecs = _eig_descending(cov.matrix)
    total = np.trace(cov.matrix).real
    if vals[-1] < _PSD_FLOOR * max(total, 1.0):
        raise ValueError(f"covariance is not PSD (min eigenvalue {vals[-1]:.3e})")
    vals = np.maximum(vals, 0.0)
    if rank is None:
        cum = np.cumsum(vals)
        rank = int(np.searchsorted(cum, energy_fraction * total - 1e-15)) + 1
    rank = min(max(rank, 1), cov.dim)
    kept_vals = vals[:rank]
    if kept_vals[-1] <= 0:
        raise ValueError("requested rank exceeds the positive spectrum")
    kept_vals = kept_vals / np.sum(kept_vals)
    kept_vecs = vecs[:, :rank]
    matrix = (kept_vecs * kept_vals[None, :]) @ kept_vecs.conj().T
    matrix = 0.5 * (matrix + matrix.conj().T)
    return SpatialCovariance(
        matrix=matrix,
        eigvecs=kept_vecs,
        eigvals=kept_vals,
        rank=rank,
    )


def mpc_covariances(
    geom: ArrayGeometry,
    group: GroupSpec,
    energy_fraction: float = 0.999,
    quad_points: int | None = None,
) -> list[SpatialCovariance]:
    """Truncated spatial covariance per MPC of ``group``, in delay order.

    MPCs quoting the same sector share one covariance object, which keeps
    their eigenspaces bit-identical for downstream pencil pooling.
    """
    cache: dict[tuple[float, float, int | None], SpatialCovariance] = {}
    covs = []
    for mpc in group.mpcs:
        key = (mpc.sector.lo_deg, mpc.sector.hi_deg, mpc.rank_override)
        if key not in cache:
            raw = sector_covariance(geom, mpc.sector, quad_points)
            cache[key] = truncate_eigenspace(raw, energy_fraction, mpc.rank_override)
        covs.append(cache[key])
    return covs


@dataclass(frozen=True, eq=False)
class KltBasis:
    """Karhunen-Loeve factors of a group's stacked multi-path channel.

    ``v`` is the N L x sum(ranks) block-diagonal factor with block ``l`` equal
    to sqrt(power_l) U_l Lambda_l^(1/2); ``upsilon_u = I_K kron v`` maps the
    i.i.d. unit-variance coefficients of all users to the stacked channel.
    """

    v: np.ndarray
    upsilon_u: np.ndarray
    block_ranks: tuple[int, ...]


def klt_basis(group: GroupSpec, covs: list[SpatialCovariance]) -> KltBasis:
    if len(covs) != group.memory:
        raise ValueError("need one covariance per MPC")
    n = covs[0].dim
    ranks = tuple(c.rank for c in covs)
    if any(r < 1 for r in ranks):
        raise ValueError("every MPC must retain at least one eigenvalue")
    v = np.zeros((n * group.memory, sum(ranks)), dtype=complex)
    col = 0
    for l, (mpc, cov) in enumerate(zip(group.mpcs, covs)):
        block = np.sqrt(mpc.power) * cov.eigvecs * np.sqrt(cov.eigvals)[None, :]
        v[l * n : (l + 1) * n, col : col + cov.rank] = block
        col += cov.rank
    upsilon_u = np.kron(np.eye(group.num_users), v)
    return KltBasis(v=v, upsilon_u=upsilon_u, block_ranks=ranks)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One fading draw: per-user per-delay vectors, their stack and KLT coefficients."""

    per_user_mpcs: np.ndarray  # (K, L, N)
    stacked: np.ndarray  # (N K L,)
    klt_coeffs: np.ndarray  # (K sum(ranks),)


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    # Splittable stream: parallel trials stay reproducible and independent.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_group_channels(
    group: GroupSpec,
    basis: KltBasis,
    seed: int,
    trial: int = 0,
) -> ChannelRealization:
    """Draw one channel realization with i.i.d. circular unit-variance coefficients."""
    n = basis.v.shape[0] // group.memory
    rng = _rng_for(seed, group.id, trial)
    coeffs = _crandn(rng, group.num_users * sum(basis.block_ranks))
    stacked = basis.upsilon_u @ coeffs
    per_user = stacked.reshape(group.num_users, group.memory, n)
    return ChannelRealization(per_user_mpcs=per_user, stacked=stacked, klt_coeffs=coeffs)


def group_statics(
    group: GroupSpec,
    covs: list[SpatialCovariance],
) -> tuple[SpatialCovariance, np.ndarray]:
    """Delay-summed spatial covariance and the stacked-channel covariance.

    Returns ``(r_sum, r_full)`` where ``r_sum = sum_l power_l R_l`` (trace one)
    and ``r_full`` is the block-diagonal N K L covariance of the stacked
    channel vector, with trace equal to the number of users.
    """
    if len(covs) != group.memory:
        raise ValueError("need one covariance per MPC")
    n = covs[0].dim
    r_sum = np.zeros((n, n), dtype=complex)
    for mpc, cov in zip(group.mpcs, covs):
        r_sum += mpc.power * cov.matrix
    r_sum = 0.5 * (r_sum + r_sum.conj().T)
    vals, vecs = _eig_descending(r_sum)
    keep = vals > max(vals[0], 0.0) * 1e-14
    rank = max(int(np.count_nonzero(keep)), 1)
    r_sum_cov = SpatialCovariance(
        matrix=r_sum,
        eigvecs=vecs[:, :rank],
        eigvals=vals[:rank],
        rank=rank,
    )

    per_delay = np.zeros((group.memory * n, group.memory * n), dtype=complex)
    for l, (mpc, cov) in enumerate(zip(group.mpcs, covs)):
        per_delay[l * n : (l + 1) * n, l * n : (l + 1) * n] = mpc.power * cov.matrix
    r_full = np.kron(np.eye(group.num_users), per_delay)
    return r_sum_cov, r_full
