"""Soft dynamic time warping: cost matrix, softmin, forward and backward DP.

All routines work in float64. Sequences are 2-D arrays of shape ``(length, dim)``.

The forward pass fills an ``(N + 1, M + 1)`` accumulator ``R`` whose interior
``R[1:, 1:]`` holds the soft-accumulated costs ``r(n, m)``. The border row and
column carry a large finite sentinel instead of ``inf`` so that differences of
accumulator values never produce ``inf - inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

#: Stand-in for +inf on the accumulator border. ``exp(-SENTINEL / 1e-3)`` is 0.
SENTINEL = 1e30


@dataclass(frozen=True)
class SdtwResult:
    """Output of :func:`sdtw_forward`.

    Attributes:
        cost: soft-DTW value ``r(N - 1, M - 1)``.
        accumulator: ``(N + 1, M + 1)`` DP table, border cells hold ``SENTINEL``
            except ``accumulator[0, 0] == 0``.
        gamma: softmin temperature used.
    """

    cost: float
    accumulator: np.ndarray
    gamma: float

    @property
    def shape(self) -> tuple[int, int]:
        n, m = self.accumulator.shape
        return n - 1, m - 1


def _as_sequence(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty (length, dim) array, got shape {arr.shape}")
    return arr


def _as_cost(C) -> np.ndarray:
    arr = np.asarray(C, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"cost matrix must be a nonempty 2-D array, got shape {arr.shape}")
    return arr


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma >= 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return gamma


def cost_matrix(X, Y) -> np.ndarray:
    """Squared Euclidean distances ``C[n, m] = ||x_n - y_m||^2``."""
    X = _as_sequence(X, "X")
    Y = _as_sequence(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"frame dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def softmin(values, gamma: float) -> float:
    """Smoothed minimum ``-gamma * log(sum(exp(-v / gamma)))``.

    The list minimum is factored out before exponentiating. ``gamma == 0``
    returns the hard minimum.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("softmin of an empty list")
    gamma = _check_gamma(gamma)
    vmin = values.min()
    if gamma == 0.0:
        return float(vmin)
    return float(vmin - gamma * np.log(np.sum(np.exp(-(values - vmin) / gamma))))


@numba.njit(cache=True)
def _softmin3(a, b, c, gamma):
    vmin = min(a, b, c)
    if gamma == 0.0:
        return vmin
    total = np.exp(-(a - vmin) / gamma) + np.exp(-(b - vmin) / gamma) + np.exp(-(c - vmin) / gamma)
    return vmin - gamma * np.log(total)


@numba.njit(cache=True)
def _forward(C, gamma, sentinel):
    n_rows, n_cols = C.shape
    R = np.full((n_rows + 1, n_cols + 1), sentinel)
    R[0, 0] = 0.0
    for i in range(1, n_rows + 1):
        for j in range(1, n_cols + 1):
            R[i, j] = C[i - 1, j - 1] + _softmin3(R[i - 1, j - 1], R[i - 1, j], R[i, j - 1], gamma)
    return R


@numba.njit(cache=True)
def _backward(C, R, gamma):
    n_rows, n_cols = C.shape
    E = np.zeros((n_rows, n_cols))
    E[n_rows - 1, n_cols - 1] = 1.0
    for n in range(n_rows - 1, -1, -1):
        for m in range(n_cols - 1, -1, -1):
            if n == n_rows - 1 and m == n_cols - 1:
                continue
            r = R[n + 1, m + 1]
            acc = 0.0
            # successor (n + 1, m) lives at R[n + 2, m + 1]
            if n + 1 < n_rows:
                acc += E[n + 1, m] * np.exp((R[n + 2, m + 1] - r - C[n + 1, m]) / gamma)
            if m + 1 < n_cols:
                acc += E[n, m + 1] * np.exp((R[n + 1, m + 2] - r - C[n, m + 1]) / gamma)
            if n + 1 < n_rows and m + 1 < n_cols:
                acc += E[n + 1, m + 1] * np.exp((R[n + 2, m + 2] - r - C[n + 1, m + 1]) / gamma)
            E[n, m] = acc
    return E


def sdtw_forward(C, gamma: float) -> SdtwResult:
    """Soft-DTW value of cost matrix ``C`` by dynamic programming.

    ``gamma == 0`` gives classical DTW.
    """
    C = _as_cost(C)
    gamma = _check_gamma(gamma)
    R = _forward(np.ascontiguousarray(C), gamma, SENTINEL)
    R.setflags(write=False)
    return SdtwResult(cost=float(R[-1, -1]), accumulator=R, gamma=gamma)


def soft_alignment(result: SdtwResult, C) -> np.ndarray:
    """Expected alignment matrix ``E``, which is the gradient of the cost w.r.t. ``C``."""
    C = _as_cost(C)
    if result.gamma == 0.0:
        raise ValueError("soft alignment is undefined for gamma == 0 (hard DTW)")
    if result.shape != C.shape:
        raise ValueError(f"result shape {result.shape} does not match cost matrix {C.shape}")
    return _backward(np.ascontiguousarray(C), result.accumulator, result.gamma)


def grad_wrt_predictions(X, Y, E) -> np.ndarray:
    """Chain ``E`` through the squared-distance cost: ``G[n] = sum_m E[n, m] * 2 (x_n - y_m)``."""
    X = _as_sequence(X, "X")
    Y = _as_sequence(Y, "Y")
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (X.shape[0], Y.shape[0]) or X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"shape mismatch: E {E.shape}, X {X.shape}, Y {Y.shape}"
        )
    return 2.0 * (E.sum(axis=1)[:, None] * X - E @ Y)


def sdtw_value_and_grad(X, Y, gamma: float, penalty=None):
    """Soft-DTW loss between predictions ``X`` and targets ``Y`` plus its gradient in ``X``.

    ``penalty`` is an optional additive matrix (already weighted) with the same
    shape as the cost matrix; it shifts the alignment but has no derivative in ``X``.

    Returns ``(cost, grad, E)``.
    """
    C = cost_matrix(X, Y)
    if penalty is not None:
        C = C + penalty
    result = sdtw_forward(C, gamma)
    E = soft_alignment(result, C)
    return result.cost, grad_wrt_predictions(X, Y, E), E


# Exponents below this are dropped: exp(-50) vanishes next to the 1 contributed
# by the minimum term, so the sum is unchanged in double precision.
_EXP_CUTOFF = 50.0


@numba.njit(cache=True, fastmath=True)
def _fused(X, Y, penalty, use_penalty, gamma, sentinel, G):
    # Cost, forward, backward and d/dX in one pass. The forward sweeps
    # anti-diagonals (independent cells pipeline better) and stores the softmin
    # weight of each predecessor; that weight equals the backward factor
    # exp((r(s) - r(p) - C(s)) / gamma), so the backward pass needs no exp.
    n_rows, dim = X.shape
    n_cols = Y.shape[0]
    C = np.empty((n_rows, n_cols))
    for n in range(n_rows):
        for m in range(n_cols):
            acc = 0.0
            for d in range(dim):
                diff = X[n, d] - Y[m, d]
                acc += diff * diff
            if use_penalty:
                acc += penalty[n, m]
            C[n, m] = acc
    R = np.full((n_rows + 1, n_cols + 1), sentinel)
    R[0, 0] = 0.0
    w_diag = np.empty((n_rows, n_cols))
    w_vert = np.empty((n_rows, n_cols))
    w_horz = np.empty((n_rows, n_cols))
    for k in range(2, n_rows + n_cols + 1):
        for i in range(max(1, k - n_cols), min(n_rows, k - 1) + 1):
            j = k - i
            a = R[i - 1, j - 1]
            b = R[i - 1, j]
            c = R[i, j - 1]
            vmin = min(a, b, c)
            za = (a - vmin) / gamma
            zb = (b - vmin) / gamma
            zc = (c - vmin) / gamma
            ea = np.exp(-za) if za < _EXP_CUTOFF else 0.0
            eb = np.exp(-zb) if zb < _EXP_CUTOFF else 0.0
            ec = np.exp(-zc) if zc < _EXP_CUTOFF else 0.0
            s = ea + eb + ec
            inv = 1.0 / s
            R[i, j] = C[i - 1, j - 1] + vmin - gamma * np.log(s)
            w_diag[i - 1, j - 1] = ea * inv
            w_vert[i - 1, j - 1] = eb * inv
            w_horz[i - 1, j - 1] = ec * inv
    E = np.zeros((n_rows, n_cols))
    E[n_rows - 1, n_cols - 1] = 1.0
    for n in range(n_rows - 1, -1, -1):
        for m in range(n_cols - 1, -1, -1):
            if n == n_rows - 1 and m == n_cols - 1:
                continue
            acc = 0.0
            if n + 1 < n_rows:
                acc += E[n + 1, m] * w_vert[n + 1, m]
            if m + 1 < n_cols:
                acc += E[n, m + 1] * w_horz[n, m + 1]
            if n + 1 < n_rows and m + 1 < n_cols:
                acc += E[n + 1, m + 1] * w_diag[n + 1, m + 1]
            E[n, m] = acc
    for n in range(n_rows):
        row_mass = 0.0
        for m in range(n_cols):
            row_mass += E[n, m]
        for d in range(dim):
            acc = row_mass * X[n, d]
            for m in range(n_cols):
                acc -= E[n, m] * Y[m, d]
            G[n, d] = 2.0 * acc
    return R[n_rows, n_cols]


def batch_value_and_grad(X, targets, gamma: float, penalties=None):
    """Soft-DTW losses and prediction gradients for a batch.

    ``X`` has shape ``(B, N, D)``; ``targets`` is a list of ``B`` arrays of
    shape ``(M_b, D)``; ``penalties`` is an optional list of weighted additive
    matrices of shape ``(N, M_b)``. Equivalent to calling
    :func:`sdtw_value_and_grad` per item, but without per-item overhead.

    Returns ``(costs, grads)`` with shapes ``(B,)`` and ``(B, N, D)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 3 or len(targets) != len(X):
        raise ValueError("X must be (B, N, D) with one target sequence per item")
    if not gamma > 0:
        raise ValueError("batched soft-DTW needs gamma > 0")
    costs = np.empty(len(X))
    grads = np.empty_like(X)
    dummy = np.zeros((1, 1))
    for b in range(len(X)):
        Y = np.ascontiguousarray(targets[b], dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != X.shape[2]:
            raise ValueError(f"target {b} has shape {Y.shape}, expected (M, {X.shape[2]})")
        if penalties is None or penalties[b] is None:
            costs[b] = _fused(X[b], Y, dummy, False, float(gamma), SENTINEL, grads[b])
        else:
            P = np.ascontiguousarray(penalties[b], dtype=np.float64)
            if P.shape != (X.shape[1], Y.shape[0]):
                raise ValueError(f"penalty {b} has shape {P.shape}")
            costs[b] = _fused(X[b], Y, P, True, float(gamma), SENTINEL, grads[b])
    return costs, grads
