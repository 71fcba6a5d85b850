"""Pilot sequences and the convolution/training matrices built from them.

Intra-group users get non-orthogonal BPSK pilots obtained by truncating small-set
Kasami codes; their temporal cross-correlation structure is what the per-delay
code-correlation matrices expose to the estimators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .array_channel import GroupSpec

__all__ = [
    "PilotSet",
    "TrainingMatrices",
    "m_sequence",
    "kasami_small_set",
    "pilot_set",
    "training_matrices",
    "r_code",
    "pilots_to_csv",
]

# Primitive feedback polynomials x^m + x^t1 + ... + 1, one fixed choice per
# supported even degree.  Degree 6 uses x^6 + x + 1.
_PRIMITIVE_TAPS: dict[int, tuple[int, ...]] = {
    4: (4, 1),
    6: (6, 1),
    8: (8, 6, 5, 4),
    10: (10, 3),
}


def m_sequence(degree: int) -> np.ndarray:
    """Maximal-length LFSR bit sequence of length 2**degree - 1 (all-ones seed)."""
    if degree not in _PRIMITIVE_TAPS:
        raise ValueError(f"no primitive polynomial registered for degree {degree}")
    taps = _PRIMITIVE_TAPS[degree]
    state = [1] * degree
    length = (1 << degree) - 1
    bits = np.empty(length, dtype=np.uint8)
    for i in range(length):
        bits[i] = state[-1]
        feedback = 0
        for t in taps:
            feedback ^= state[degree - t]
        state = [feedback] + state[:-1]
    return bits


def kasami_small_set(degree: int) -> np.ndarray:
    """Small Kasami set: 2**(degree/2) binary sequences of length 2**degree - 1.

    Row 0 is the m-sequence ``u``; row ``t + 1`` is ``u`` xor the cyclic shift
    by ``t`` of the decimation ``u[(2**(degree/2) + 1) i]``, for ascending
    ``t``.  Only even degrees admit the construction.
    """
    if degree % 2 != 0 or degree < 4:
        raise ValueError(f"Kasami small set requires an even degree >= 4, got {degree}")
    u = m_sequence(degree)
    length = u.size
    half = 1 << (degree // 2)
    decimated = u[(np.arange(length) * (half + 1)) % length]
    rows = [u]
    for t in range(half - 1):
        rows.append(u ^ np.roll(decimated, -t))
    return np.stack(rows)


@dataclass(frozen=True, eq=False)
class PilotSet:
    """Per-user training symbols covering times -(memory-1) .. length-1.

    ``symbols[k, i]`` is the symbol of user ``k`` at time ``i - (memory - 1)``;
    the leading ``memory - 1`` entries are the precursors.  Every symbol has
    squared magnitude ``energy``.
    """

    symbols: np.ndarray  # (K, T + L - 1)
    length: int  # T
    energy: float
    memory: int  # L
    source: str = "custom"
    sequence_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.symbols.shape[1] != self.length + self.memory - 1:
            raise ValueError("symbol rows must cover T + L - 1 instants")
        mags = np.abs(self.symbols) ** 2
        if not np.allclose(mags, self.energy, rtol=1e-12, atol=1e-12):
            raise ValueError("pilot symbols must have constant energy")

    def symbol(self, user: int, n: int) -> complex:
        """Training symbol of ``user`` at time index ``n`` (precursors at n < 0)."""
        return self.symbols[user, n + self.memory - 1]


def pilot_set(
    group: GroupSpec,
    length: int,
    energy: float,
    source: str = "kasami_truncated",
    degree: int = 6,
    custom_symbols: np.ndarray | None = None,
) -> PilotSet:
    """Pilots for all users of ``group``: ``length`` symbols plus precursors.

    The Kasami source takes the first ``length`` chips of the last ``K`` codes
    in generation order, maps bits 0/1 to +1/-1 scaled by sqrt(energy), and
    fills the precursors cyclically from the end of the parent code.
    """
    if length < 1:
        raise ValueError("training length must be >= 1")
    if energy <= 0:
        raise ValueError("symbol energy must be positive")
    k, mem = group.num_users, group.memory
    span = length + mem - 1

    if source == "custom":
        if custom_symbols is None:
            raise ValueError("custom source requires custom_symbols")
        symbols = np.asarray(custom_symbols, dtype=complex)
        if symbols.shape != (k, span):
            raise ValueError(f"custom_symbols must have shape {(k, span)}")
        return PilotSet(symbols=symbols, length=length, energy=energy, memory=mem)
    if source != "kasami_truncated":
        raise ValueError(f"unknown pilot source {source!r}")

    codes = kasami_small_set(degree)
    code_len = codes.shape[1]
    if span > code_len:
        raise ValueError(
            f"training span T + L - 1 = {span} exceeds code length {code_len}"
        )
    if k > codes.shape[0]:
        raise ValueError(f"group has {k} users but the set holds {codes.shape[0]} codes")

    indices = tuple(range(codes.shape[0] - k, codes.shape[0]))
    symbols = np.empty((k, span), dtype=complex)
    scale = np.sqrt(energy)
    for row, idx in enumerate(indices):
        positions = np.arange(-(mem - 1), length) % code_len
        bits = codes[idx, positions]
        symbols[row] = scale * (1.0 - 2.0 * bits.astype(float))
    return PilotSet(
        symbols=symbols,
        length=length,
        energy=energy,
        memory=mem,
        source=f"kasami_truncated(degree={degree})",
        sequence_indices=indices,
    )


@dataclass(frozen=True, eq=False)
class TrainingMatrices:
    """Per-user T x L convolution matrices and their horizontal concatenation."""

    per_user: tuple[np.ndarray, ...]
    complete: np.ndarray  # (T, K L)

    @property
    def length(self) -> int:
        return self.complete.shape[0]

    @property
    def num_users(self) -> int:
        return len(self.per_user)

    @property
    def memory(self) -> int:
        return self.per_user[0].shape[1]

    def delay_columns(self, delay: int) -> np.ndarray:
        """Columns of the complete matrix belonging to ``delay`` across users."""
        l = self.memory
        return self.complete[:, delay::l] if l > 1 else self.complete


def training_matrices(pilots: PilotSet, group: GroupSpec) -> TrainingMatrices:
    """Toeplitz convolution matrix per user: entry (n, l) is the symbol at n - l."""
    if pilots.memory != group.memory or pilots.symbols.shape[0] != group.num_users:
        raise ValueError("pilot set does not match the group")
    t, l = pilots.length, pilots.memory
    per_user = []
    for k in range(group.num_users):
        first_col = [pilots.symbol(k, n) for n in range(t)]
        first_row = [pilots.symbol(k, -j) for j in range(l)]
        per_user.append(toeplitz(first_col, first_row))
    complete = np.hstack(per_user)
    return TrainingMatrices(per_user=tuple(per_user), complete=complete)


def r_code(train: TrainingMatrices, delay: int | None = None) -> np.ndarray:
    """Deterministic T x T pilot correlation matrix.

    For an integer ``delay`` this correlates only the delay's columns across
    users; ``None`` sums over all delays, i.e. the full Gram matrix of the
    complete training matrix.  Rank is at most min(T, K) per delay.
    """
    if delay is None:
        x = train.complete
    else:
        if not (0 <= delay < train.memory):
            raise ValueError(f"delay must be in 0..{train.memory - 1}, got {delay}")
        x = train.delay_columns(delay)
    gram = x @ x.conj().T
    return 0.5 * (gram + gram.conj().T)


def pilots_to_csv(pilots: PilotSet, path) -> None:
    """Audit export: one row per (user, time index) with real/imag parts."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "n", "re", "im"])
        for k in range(pilots.symbols.shape[0]):
            for i in range(pilots.symbols.shape[1]):
                n = i - (pilots.memory - 1)
                val = pilots.symbols[k, i]
                writer.writerow([k, n, repr(val.real), repr(val.imag)])
