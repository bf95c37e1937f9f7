"""Brute-force reference for soft-DTW by explicit enumeration of alignment paths.

Only usable for small matrices: the number of paths is a Delannoy number and
grows roughly like ``5.8 ** n`` for square sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernel

ENUMERATION_LIMIT = 8

_STEPS = ((1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class AlignmentSet:
    """All monotone alignment matrices for an ``n_rows x n_cols`` grid.

    ``alignments`` has shape ``(count, n_rows, n_cols)`` and dtype uint8.
    """

    alignments: np.ndarray = field(repr=False)
    n_rows: int
    n_cols: int

    def __len__(self) -> int:
        return len(self.alignments)

    def __iter__(self):
        return iter(self.alignments)


def _check_size(n_rows: int, n_cols: int, limit: int) -> None:
    if n_rows < 1 or n_cols < 1:
        raise ValueError(f"sizes must be positive, got ({n_rows}, {n_cols})")
    if n_rows > limit or n_cols > limit:
        raise ValueError(
            f"({n_rows}, {n_cols}) exceeds the enumeration limit {limit}; "
            f"that would mean {count_alignments(n_rows, n_cols)} paths"
        )


def count_alignments(n_rows: int, n_cols: int) -> int:
    """Number of alignment paths, the Delannoy number ``d(n_rows - 1, n_cols - 1)``."""
    if n_rows < 1 or n_cols < 1:
        raise ValueError(f"sizes must be positive, got ({n_rows}, {n_cols})")
    d = [[1] * n_cols for _ in range(n_rows)]
    for i in range(1, n_rows):
        for j in range(1, n_cols):
            d[i][j] = d[i - 1][j] + d[i][j - 1] + d[i - 1][j - 1]
    return d[-1][-1]


@lru_cache(maxsize=128)
def _enumerate(n_rows: int, n_cols: int) -> np.ndarray:
    paths = []
    path = [(0, 0)]

    def expand(i, j):
        if i == n_rows - 1 and j == n_cols - 1:
            paths.append(list(path))
            return
        for di, dj in _STEPS:
            ni, nj = i + di, j + dj
            if ni < n_rows and nj < n_cols:
                path.append((ni, nj))
                expand(ni, nj)
                path.pop()

    expand(0, 0)
    out = np.zeros((len(paths), n_rows, n_cols), dtype=np.uint8)
    for k, cells in enumerate(paths):
        rows, cols = zip(*cells)
        out[k, rows, cols] = 1
    out.setflags(write=False)
    return out


def enumerate_alignments(n_rows: int, n_cols: int, limit: int = ENUMERATION_LIMIT) -> AlignmentSet:
    """Depth-first enumeration of every path from (0, 0) to (N - 1, M - 1)."""
    _check_size(n_rows, n_cols, limit)
    return AlignmentSet(_enumerate(n_rows, n_cols), n_rows, n_cols)


def path_costs(C, limit: int = ENUMERATION_LIMIT) -> tuple[np.ndarray, AlignmentSet]:
    """Inner products ``<A, C>`` for every alignment ``A``."""
    C = np.asarray(C, dtype=np.float64)
    aset = enumerate_alignments(*C.shape, limit=limit)
    costs = np.tensordot(aset.alignments, C, axes=([1, 2], [0, 1]))
    return costs, aset


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"brute force needs gamma > 0, got {gamma}")


def alignment_probabilities(C, gamma: float, limit: int = ENUMERATION_LIMIT):
    """Gibbs probabilities of all alignments, returned with the alignment set."""
    _check_gamma(gamma)
    costs, aset = path_costs(C, limit)
    z = -(costs - costs.min()) / gamma
    w = np.exp(z)
    return w / w.sum(), aset


def sdtw_bruteforce(C, gamma: float, limit: int = ENUMERATION_LIMIT) -> float:
    """Softmin over the costs of all enumerated alignments."""
    _check_gamma(gamma)
    costs, _ = path_costs(C, limit)
    return kernel.softmin(costs, gamma)


def soft_alignment_bruteforce(C, gamma: float, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """Probability-weighted average of all alignment matrices."""
    p, aset = alignment_probabilities(C, gamma, limit)
    return np.tensordot(p, aset.alignments.astype(np.float64), axes=1)


@dataclass
class OracleReport:
    """Result of :func:`oracle_check`: worst deviations and any failing cases."""

    trials: int
    cases: int = 0
    max_cost_error: float = 0.0
    max_alignment_error: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "cases": self.cases,
            "max_cost_error": self.max_cost_error,
            "max_alignment_error": self.max_alignment_error,
            "passed": self.passed,
            "failures": self.failures,
        }


def oracle_check(
    max_n: int = 6,
    max_m: int = 6,
    trials: int = 50,
    gammas=(0.1, 1.0, 10.0),
    seed: int = 0,
    cost_tol: float = 1e-9,
    alignment_tol: float = 1e-8,
    limit: int = ENUMERATION_LIMIT,
) -> OracleReport:
    """Compare the DP kernel against enumeration on random cost matrices.

    For every shape up to ``(max_n, max_m)``, ``trials`` matrices with entries
    uniform in [0, 5] are drawn and checked at each gamma. The cost error is
    relative to ``max(1, |brute force|)``; the alignment error is absolute.
    """
    _check_size(max_n, max_m, limit)
    rng = np.random.default_rng(seed)
    report = OracleReport(trials=trials)
    for _ in range(trials):
        for n in range(1, max_n + 1):
            for m in range(1, max_m + 1):
                C = rng.uniform(0.0, 5.0, size=(n, m))
                for gamma in gammas:
                    gamma = float(gamma)
                    result = kernel.sdtw_forward(C, gamma)
                    E = kernel.soft_alignment(result, C)
                    ref_cost = sdtw_bruteforce(C, gamma, limit)
                    ref_E = soft_alignment_bruteforce(C, gamma, limit)
                    cost_err = abs(result.cost - ref_cost) / max(1.0, abs(ref_cost))
                    align_err = float(np.max(np.abs(E - ref_E)))
                    report.cases += 1
                    report.max_cost_error = max(report.max_cost_error, cost_err)
                    report.max_alignment_error = max(report.max_alignment_error, align_err)
                    if not (cost_err <= cost_tol and align_err <= alignment_tol):
                        report.failures.append(
                            {"n": n, "m": m, "gamma": gamma,
                             "cost_error": cost_err, "alignment_error": align_err}
                        )
    return report
