"""Frame-wise MLP predictor with hand-written backprop, and Adam.

The predictor maps each input frame (optionally stacked with ``context``
neighbours on each side) through one leaky-ReLU hidden layer to a sigmoid
output. Arrays may carry any number of leading batch axes; the last two are
``(frames, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit

LEAKY_SLOPE = 0.3
PARAM_NAMES = ("W1", "b1", "W2", "b2")


# np.where is several times slower than these on large arrays
@numba.vectorize(["float64(float64, float64)"], cache=True)
def _leaky(z, slope):
    return z if z > 0 else slope * z


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def _leaky_backward(g, z, slope):
    return g if z > 0 else slope * g


def init_params(input_dim: int, output_dim: int, hidden: int = 64, context: int = 0, rng=None) -> dict:
    """He-initialised weights and zero biases."""
    rng = np.random.default_rng(rng)
    fan_in = input_dim * (2 * context + 1)
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, output_dim)),
        "b2": np.zeros(output_dim),
    }


def add_context(inputs: np.ndarray, context: int) -> np.ndarray:
    """Concatenate each frame with ``context`` neighbours per side (edge-padded)."""
    if context == 0:
        return inputs
    n = inputs.shape[-2]
    idx = np.clip(np.arange(n)[:, None] + np.arange(-context, context + 1)[None, :], 0, n - 1)
    stacked = inputs[..., idx, :]  # (..., n, 2k+1, d)
    return stacked.reshape(*inputs.shape[:-2], n, -1)


def _check(params, features):
    if features.shape[-1] != params["W1"].shape[0]:
        raise ValueError(
            f"input has {features.shape[-1]} features, predictor expects {params['W1'].shape[0]}"
        )


def _forward_parts(params, inputs, context):
    a = add_context(np.asarray(inputs, dtype=np.float64), context)
    _check(params, a)
    z1 = a @ params["W1"] + params["b1"]
    h = _leaky(z1, LEAKY_SLOPE)
    y = expit(h @ params["W2"] + params["b2"])
    return a, z1, h, y


def predictor_forward(params: dict, inputs, context: int = 0, return_cache: bool = False):
    """Frame-wise outputs in (0, 1).

    With ``return_cache`` also returns the intermediate activations, which
    :func:`predictor_backward` accepts to skip recomputing the forward pass.
    """
    parts = _forward_parts(params, inputs, context)
    return (parts[-1], parts) if return_cache else parts[-1]


def predictor_backward(params: dict, inputs, output_gradient, context: int = 0, cache=None) -> dict:
    """Parameter gradients given ``dL/d(outputs)``."""
    a, z1, h, y = cache if cache is not None else _forward_parts(params, inputs, context)
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != y.shape:
        raise ValueError(f"output gradient shape {g.shape} does not match outputs {y.shape}")

    dz2 = (g * y * (1.0 - y)).reshape(-1, y.shape[-1])
    h2 = h.reshape(-1, h.shape[-1])
    dz1 = _leaky_backward(dz2 @ params["W2"].T, z1.reshape(-1, h.shape[-1]), LEAKY_SLOPE)
    return {
        "W1": a.reshape(-1, a.shape[-1]).T @ dz1,
        "b1": dz1.sum(axis=0),
        "W2": h2.T @ dz2,
        "b2": dz2.sum(axis=0),
    }


def n_params(params: dict) -> int:
    return sum(v.size for v in params.values())


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict, **kwargs) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )


def adam_step(state: AdamState, params: dict, grads: dict, learning_rate: float) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update. Returns new params and new state; inputs are untouched.

    Raises FloatingPointError on non-finite gradients.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
        if g.shape != state.m[k].shape:
            raise ValueError(f"gradient {k} has shape {g.shape}, state has {state.m[k].shape}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = {k: b1 * state.m[k] + (1.0 - b1) * grads[k] for k in params}
    v = {k: b2 * state.v[k] + (1.0 - b2) * grads[k] * grads[k] for k in params}
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params = {
        k: params[k] - learning_rate * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + state.eps)
        for k in params
    }
    return new_params, AdamState(m, v, t, b1, b2, state.eps)
