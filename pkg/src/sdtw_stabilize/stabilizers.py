"""Training stabilizers for soft-DTW: temperature schedule, diagonal prior, target unfolding."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class GammaSchedule:
    """Hold ``gamma_start`` for ``hold_epochs``, then decay linearly to ``gamma_final``."""

    gamma_start: float = 10.0
    gamma_final: float = 0.1
    hold_epochs: int = 10
    decay_epochs: int = 10

    def __post_init__(self):
        if not (self.gamma_start >= self.gamma_final > 0):
            raise ValueError("need gamma_start >= gamma_final > 0")
        if self.hold_epochs < 0 or self.decay_epochs < 1:
            raise ValueError("need hold_epochs >= 0 and decay_epochs >= 1")

    @property
    def final_epoch(self) -> int:
        """First epoch at which ``gamma_final`` is in effect."""
        return self.hold_epochs + self.decay_epochs


@dataclass(frozen=True)
class PriorConfig:
    """Diagonal prior sharpness ``nu`` and the schedule of its weight omega."""

    nu: float = 1000.0
    omega_start: float = 3.0
    hold_epochs: int = 5
    decay_epochs: int = 5

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.omega_start >= 0:
            raise ValueError("omega_start must be nonnegative")
        if self.hold_epochs < 0 or self.decay_epochs < 1:
            raise ValueError("need hold_epochs >= 0 and decay_epochs >= 1")


def _hold_then_linear(start, final, hold, decay, epoch):
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    if epoch < hold:
        return float(start)
    if epoch >= hold + decay:
        return float(final)
    return float(start + (final - start) * (epoch - hold) / decay)


def gamma_at(schedule: GammaSchedule, epoch: int) -> float:
    return _hold_then_linear(
        schedule.gamma_start, schedule.gamma_final, schedule.hold_epochs, schedule.decay_epochs, epoch
    )


def omega_at(config: PriorConfig, epoch: int) -> float:
    return _hold_then_linear(config.omega_start, 0.0, config.hold_epochs, config.decay_epochs, epoch)


def band_starts(n_rows: int, n_cols: int) -> np.ndarray:
    """Uniform-duration band boundaries ``q_m = floor(N m / M)`` for ``m = 0..M`` (so ``q_M = N``)."""
    m = np.arange(n_cols + 1)
    return (n_rows * m) // n_cols


@lru_cache(maxsize=256)
def _prior(n_rows: int, n_cols: int, nu: float) -> np.ndarray:
    q = band_starts(n_rows, n_cols)
    n = np.arange(n_rows)[:, None]
    lo = q[None, :-1]
    hi = q[None, 1:]
    below = -np.expm1(-((n - lo) ** 2) / (2.0 * nu))
    above = -np.expm1(-((n - hi) ** 2) / (2.0 * nu))
    P = np.where(n < lo, below, np.where(n >= hi, above, 0.0))
    P.setflags(write=False)
    return P


def diagonal_prior(n_rows: int, n_cols: int, nu: float = 1000.0) -> np.ndarray:
    """Off-diagonal penalty matrix of shape ``(n_rows, n_cols)`` with entries in [0, 1).

    Zero inside each uniform-duration band ``q_m <= n < q_{m+1}``; Gaussian
    flanks ``1 - exp(-d^2 / (2 nu))`` outside, where ``d`` is the distance to
    ``q_m`` (below the band) or to ``q_{m+1}`` (at or past the band end).
    Entries more than about ``9 sqrt(nu)`` from a band round to exactly 1.0.
    The returned array is cached and read-only.
    """
    n_rows, n_cols = int(n_rows), int(n_cols)
    if n_cols < 1 or n_rows < n_cols:
        raise ValueError(f"diagonal prior needs N >= M >= 1, got N={n_rows}, M={n_cols}")
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    return _prior(n_rows, n_cols, float(nu))


def apply_prior(C, P, omega: float) -> np.ndarray:
    """Penalized cost ``C + omega * P``."""
    C = np.asarray(C, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if C.shape != P.shape:
        raise ValueError(f"shape mismatch: C {C.shape} vs P {P.shape}")
    if not omega >= 0:
        raise ValueError(f"omega must be nonnegative, got {omega}")
    if omega == 0:
        return C.copy()
    return C + omega * P


def unfold_indices(n_weak: int, n_out: int) -> np.ndarray:
    """Source index ``floor(M n / N)`` for each output frame ``n``."""
    if n_weak < 1 or n_out < n_weak:
        raise ValueError(f"unfolding needs n_out >= length >= 1, got {n_out} < {n_weak}")
    return (n_weak * np.arange(n_out)) // n_out


def unfold_targets(Y, n_out: int) -> np.ndarray:
    """Stretch ``Y`` to ``n_out`` frames by uniform repetition."""
    Y = np.asarray(Y)
    return Y[unfold_indices(len(Y), int(n_out))]
