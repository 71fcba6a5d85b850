"""Inter-group interference plus noise covariance, spatial and spatio-temporal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_channel import ArrayGeometry, GroupSpec, mpc_covariances

__all__ = [
    "InterferenceProfile",
    "NoiseCovariance",
    "interference_covariance",
    "spacetime_noise_apply",
]


@dataclass(frozen=True)
class InterferenceProfile:
    """Interfering groups with their relative received powers, plus the noise floor."""

    interferers: tuple[tuple[GroupSpec, float], ...]
    noise_power: float

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        for _, gamma in self.interferers:
            if gamma < 0:
                raise ValueError("relative interferer power must be non-negative")


@dataclass(frozen=True, eq=False)
class NoiseCovariance:
    """Spatial covariance of interference plus noise during one symbol.

    The spatio-temporal covariance over T symbols is I_T kron r_eta and is
    never materialized (``r_xi_factored``); the noise floor keeps r_eta
    positive definite.
    """

    r_eta: np.ndarray
    noise_floor: float
    r_xi_factored: bool = True

    @property
    def dim(self) -> int:
        return self.r_eta.shape[0]


def interference_covariance(
    profile: InterferenceProfile,
    symbol_energy: float,
    geom: ArrayGeometry,
    energy_fraction: float = 0.999,
    quad_points: int | None = None,
) -> NoiseCovariance:
    """Spatial interference-plus-noise covariance seen by the intended group.

    Each interfering group contributes ``symbol_energy * gamma * K'`` times its
    delay-averaged spatial covariance; the white noise floor is added on the
    diagonal, so the result is always positive definite.
    """
    n = geom.num_elements
    r_eta = profile.noise_power * np.eye(n, dtype=complex)
    for group, gamma in profile.interferers:
        if gamma == 0.0:
            continue
        covs = mpc_covariances(geom, group, energy_fraction, quad_points)
        acc = np.zeros((n, n), dtype=complex)
        for mpc, cov in zip(group.mpcs, covs):
            acc += mpc.power * cov.matrix
        r_eta += symbol_energy * gamma * group.num_users * acc
    r_eta = 0.5 * (r_eta + r_eta.conj().T)
    return NoiseCovariance(r_eta=r_eta, noise_floor=profile.noise_power)


def spacetime_noise_apply(nc: NoiseCovariance, num_symbols: int, vec: np.ndarray) -> np.ndarray:
    """Apply (I_T kron r_eta) to a stacked N*T vector without forming the product."""
    n = nc.dim
    if vec.shape != (n * num_symbols,):
        raise ValueError(f"expected a vector of length {n * num_symbols}, got {vec.shape}")
    blocks = vec.reshape(num_symbols, n)
    return (blocks @ nc.r_eta.T).reshape(-1)
