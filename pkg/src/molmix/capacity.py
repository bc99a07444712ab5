"""Information capacity and write-energy bounds for molecular mixtures.

All capacities are in bits.  State counts are exact Python integers while
``M + Q`` stays at or below :data:`EXACT_LIMIT`; past that only the base-2
logarithm is evaluated (``mpmath`` log-gamma at a precision scaled to the
argument size, so that library sizes like ``4**40`` do not lose digits to
cancellation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple

import mpmath
import numpy as np
from scipy.special import log_ndtr

EXACT_LIMIT = 10_000
LN2 = math.log(2.0)


@dataclass(frozen=True)
class CapacityValue:
    """A capacity in bits, optionally with the exact state count behind it."""

    bits: float
    omega: int | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.bits < 0:
            raise ValueError(f"capacity cannot be negative: {self.bits}")

    def __float__(self) -> float:
        return float(self.bits)

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags


@dataclass(frozen=True)
class MixtureRegime:
    library_size: int
    max_select: int = 0
    allow_duplicates: bool = True
    levels: int = 2
    sparsity: int = 1

    def __post_init__(self):
        if self.library_size < 1:
            raise ValueError("library_size must be positive")
        if self.max_select < 0:
            raise ValueError("max_select must be non-negative")
        if not self.allow_duplicates and self.max_select > self.library_size:
            raise ValueError("max_select exceeds library_size without duplicates")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.sparsity < 1 or self.library_size % self.sparsity:
            raise ValueError("sparsity must divide library_size")


@dataclass(frozen=True)
class PolymerSpec:
    """Polymer library of ``alphabet_size ** length`` sequences."""

    alphabet_size: int
    length: int
    address_positions: int = 0

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        if self.length < 1:
            raise ValueError("length must be positive")
        if not 0 <= self.address_positions <= self.length:
            raise ValueError("address_positions must lie in [0, length]")

    @property
    def library_size(self) -> int:
        return self.alphabet_size**self.length

    @property
    def sparsity(self) -> int:
        return self.alphabet_size ** (self.length - self.address_positions)


@dataclass(frozen=True)
class EnergyModel:
    epsilon: float = 1.0
    gamma: float = 1.0
    wells: int = 1

    def __post_init__(self):
        if self.epsilon < 0 or self.gamma < 0:
            raise ValueError("energies must be non-negative")
        if self.wells < 1:
            raise ValueError("wells must be >= 1")


def _check_int(name: str, value, minimum: int) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


# ---------------------------------------------------------------------------
# log-domain helpers


def _dps_for(*args: int) -> int:
    digits = max(len(str(abs(int(a)))) for a in args)
    return max(30, digits + 25)


def log2_binomial(n: int, k: int) -> float:
    """log2 C(n, k) without forming the integer."""
    if k < 0 or k > n:
        raise ValueError("k must lie in [0, n]")
    if k == 0 or k == n:
        return 0.0
    with mpmath.workdps(_dps_for(n)):
        n_, k_ = mpmath.mpf(n), mpmath.mpf(k)
        val = mpmath.loggamma(n_ + 1) - mpmath.loggamma(k_ + 1) - mpmath.loggamma(n_ - k_ + 1)
        return float(val / mpmath.log(2))


def _log_lower_tail_ratio(n: int, k: int, max_terms: int = 4_000_000) -> float | None:
    """ln of sum_{q<=k} C(n,q) / C(n,k) for k < n/2, or None if too slow."""
    if k == 0:
        return 0.0
    ratio0 = k / (n - k + 1)
    # terms fall at least geometrically at ratio0 until the Gaussian tail
    needed = 50.0 / max(-math.log(ratio0), 1e-300)
    if needed > max_terms:
        return None
    total = 1.0
    term = 1.0
    chunk = 4096
    q = k
    while q > 0:
        m = min(chunk, q)
        qs = np.arange(q, q - m, -1, dtype=np.float64)
        # C(n, q-1) / C(n, q) = q / (n - q + 1)
        steps = np.cumprod(qs / (float(n) - qs + 1.0))
        terms = term * steps
        total += float(terms.sum())
        term = float(terms[-1])
        q -= m
        if term < 1e-18 * total:
            break
    return math.log(total)


def _log2_binom_cdf_half(n: int, k: int) -> float:
    """log2 of sum_{q<=k} C(n, q) for 0 <= k < n."""
    if 2 * k < n:
        tail = _log_lower_tail_ratio(n, k)
        if tail is not None:
            return log2_binomial(n, k) + tail / LN2
    else:
        j = n - k - 1  # upper tail sum_{q>k} C(n,q) = sum_{q<=j} C(n,q)
        tail = _log_lower_tail_ratio(n, j)
        if tail is not None:
            log2_upper = log2_binomial(n, j) + tail / LN2
            return n + math.log1p(-(2.0 ** (log2_upper - n))) / LN2
    # central region of an enormous library: normal approximation with
    # continuity correction; absolute error O(1/sqrt(n)) against O(n) bits
    z = (k + 0.5 - n / 2.0) / (math.sqrt(n) / 2.0)
    return n + float(log_ndtr(z)) / LN2


# ---------------------------------------------------------------------------
# state counts and capacities


def omega_with_duplicates(M: int, Q: int) -> int:
    """Number of multisets of size 0..Q drawn from M molecules."""
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    return comb(M + Q, M)


def omega_without_duplicates(M: int, Q: int) -> int:
    """Number of subsets of size 0..Q drawn from M molecules."""
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    if Q > M:
        raise ValueError(f"Q={Q} exceeds M={M} without duplication")
    if Q == M:
        return 1 << M
    total = term = 1
    for q in range(Q):
        term = term * (M - q) // (q + 1)  # C(M, q+1), exact
        total += term
    return total


def log2_c1(M: int, Q: int) -> float:
    """log2 of the duplicates-allowed state count, never forming it."""
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    return log2_binomial(M + Q, M)


def log2_c2(M: int, Q: int) -> float:
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    if Q > M:
        raise ValueError(f"Q={Q} exceeds M={M} without duplication")
    if Q == M:
        return float(M)
    return _log2_binom_cdf_half(M, Q)


def capacity_c1(M: int, Q: int) -> CapacityValue:
    """Capacity of an unordered mixture of up to Q molecules, duplicates allowed."""
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    if M + Q <= EXACT_LIMIT:
        omega = omega_with_duplicates(M, Q)
        return CapacityValue(math.log2(omega), omega)
    return CapacityValue(log2_c1(M, Q))


def capacity_c2(M: int, Q: int) -> CapacityValue:
    """Capacity when each molecule is only present or absent (no duplication)."""
    M = _check_int("M", M, 1)
    Q = _check_int("Q", Q, 0)
    if Q > M:
        raise ValueError(f"Q={Q} exceeds M={M} without duplication")
    if M + Q <= EXACT_LIMIT:
        omega = omega_without_duplicates(M, Q)
        return CapacityValue(float(M) if Q == M else math.log2(omega), omega)
    return CapacityValue(log2_c2(M, Q))


def capacity_c3(M: int, L: int) -> CapacityValue:
    """Capacity when each of M molecules takes one of L concentration levels."""
    M = _check_int("M", M, 1)
    L = _check_int("L", L, 2)
    omega = L**M if M * math.log2(L) <= EXACT_LIMIT else None
    return CapacityValue(M * math.log2(L), omega)


def capacity_c4(M: int, S: int) -> CapacityValue:
    """Capacity of one-hot sparse mixtures: one molecule from each block of S.

    ``S == 1`` is legal but carries no information; the result is flagged
    ``degenerate``.
    """
    M = _check_int("M", M, 1)
    S = _check_int("S", S, 1)
    if M % S:
        raise ValueError(f"S={S} does not divide M={M}")
    blocks = M // S
    if S == 1:
        return CapacityValue(0.0, 1, flags=("degenerate",))
    omega = S**blocks if blocks * math.log2(S) <= EXACT_LIMIT else None
    return CapacityValue(blocks * math.log2(S), omega)


class AddressPayload(NamedTuple):
    num_addresses: int
    sparsity: int
    bits_per_mixture: float
    degenerate: bool
    dense_bits: float


def address_payload_equivalence(spec: PolymerSpec) -> AddressPayload:
    """Sparse-mixture view of address/payload polymer coding.

    The ``A`` address positions give ``B**A`` blocks; the remaining
    positions pick one of ``S = B**(N-A)`` payload values per block.
    ``dense_bits`` is the capacity of the full presence/absence mixture of
    the same library, reported alongside because ``A == N`` leaves no
    payload at all.
    """
    B, N, A = spec.alphabet_size, spec.length, spec.address_positions
    num_addresses = B**A
    sparsity = B ** (N - A)
    # (M/S) * log2 S = B**A * (N-A) * log2 B, evaluated without B**N
    bits = float(num_addresses) * (N - A) * math.log2(B)
    return AddressPayload(num_addresses, sparsity, bits, sparsity == 1, float(spec.library_size))


# ---------------------------------------------------------------------------
# confusion-limited capacity


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def confusion_limited_capacity(
    omega: int | None = None, pc: float = 1.0, *, log2_omega: float | None = None
) -> CapacityValue:
    """Capacity of an Omega-state memory read correctly with probability ``pc``.

    Errors are spread evenly over the other ``Omega - 1`` states (the worst
    case).  Pass either the exact ``omega`` or ``log2_omega``.  ``pc`` below
    the chance level ``1/Omega`` is flagged ``below_chance``; rounding
    residue below zero is clamped and flagged ``clamped``.
    """
    if (omega is None) == (log2_omega is None):
        raise ValueError("give exactly one of omega or log2_omega")
    if not 0.0 < pc <= 1.0:
        raise ValueError(f"pc must lie in (0, 1], got {pc}")
    if omega is not None:
        omega = _check_int("omega", omega, 2)
        lw = math.log2(omega)
        # log2(omega - 1) exactly enough for big ints
        lw_minus = math.log2(omega - 1)
    else:
        lw = float(log2_omega)
        if lw < 1.0:
            raise ValueError("omega must be >= 2")
        lw_minus = lw + math.log1p(-(2.0**-lw)) / LN2
    flags: list[str] = []
    if pc == 1.0:
        return CapacityValue(lw, omega)
    raw = lw + pc * math.log2(pc) + (1.0 - pc) * (math.log2(1.0 - pc) - lw_minus)
    if math.log2(pc) < -lw:
        flags.append("below_chance")
    if raw < 0.0:
        flags.append("clamped")
        raw = 0.0
    return CapacityValue(raw, omega, tuple(flags))


def confusion_limited_capacity_approx(log2_omega: float, pc: float) -> float:
    """Large-Omega form: ``pc * log2(Omega) - H_B(pc)``."""
    return pc * log2_omega - binary_entropy(pc)


# ---------------------------------------------------------------------------
# energy


def energy_per_bit_sparse(epsilon: float, B: int) -> float:
    """Write energy per bit for very sparse polymer mixtures."""
    if B < 2:
        raise ValueError("alphabet size B must be >= 2")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return epsilon / math.log2(B)


def energy_per_bit_dense(epsilon: float, N: int) -> float:
    """Write energy per bit for dense binary mixtures of length-N polymers."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return epsilon * N / 2.0


def energy_per_bit_mixing(gamma: float) -> float:
    """Energy per bit when synthesis is amortised and only mixing costs."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return gamma / 2.0


def total_energy_polymer(model: EnergyModel, Q: int, N: int) -> float:
    return model.epsilon * model.wells * Q * N


def total_energy_mixing(model: EnergyModel, Q: int) -> float:
    return model.gamma * model.wells * Q


class Partition(NamedTuple):
    wells: int
    library_size: int
    continuous: float


def optimal_partition(C: float) -> Partition:
    """Smallest ``W + M`` with ``W * M >= C`` by exhaustive integer search.

    Among optimal pairs the most balanced one is returned, with ``W <= M``.
    ``continuous`` is the real-valued optimum ``sqrt(C)``.
    """
    if not C >= 1:
        raise ValueError(f"C must be >= 1, got {C}")
    target = math.ceil(C)
    best = None
    for w in range(1, math.isqrt(target) + 2):
        m = -(-target // w)
        key = (w + m, abs(m - w), w)
        if best is None or key < best[0]:
            best = (key, w, m)
    _, w, m = best
    w, m = min(w, m), max(w, m)
    return Partition(w, m, math.sqrt(C))
