"""Synthetic weakly-aligned sequence task.

Each example is a piecewise-constant multi-hot target sequence (the strong
targets), its run-length collapse (the weak targets), and a noisy linear
mixture of the strong targets as network input.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class SyntheticTaskConfig:
    n_frames: int = 200
    dim: int = 12
    segment_length_range: tuple[int, int] = (4, 20)
    activation_density: float = 0.25
    input_noise_std: float = 0.3
    n_train: int = 128
    n_val: int = 32
    n_test: int = 32
    master_seed: int = 0
    mixing: str = "random"  # or "identity"

    def __post_init__(self):
        lo, hi = self.segment_length_range
        object.__setattr__(self, "segment_length_range", (int(lo), int(hi)))
        if self.n_frames < 1 or self.dim < 1:
            raise ValueError("n_frames and dim must be positive")
        if not 1 <= lo <= hi:
            raise ValueError(f"bad segment_length_range {self.segment_length_range}")
        if lo > self.n_frames:
            raise ValueError("minimum segment length exceeds n_frames")
        if not 0.0 < self.activation_density < 1.0:
            raise ValueError("activation_density must lie in (0, 1)")
        if self.input_noise_std < 0:
            raise ValueError("input_noise_std must be nonnegative")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("every split needs at least one example")
        if self.mixing not in ("random", "identity"):
            raise ValueError(f"unknown mixing {self.mixing!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segment_length_range"] = list(self.segment_length_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTaskConfig":
        d = dict(d)
        if "segment_length_range" in d:
            d["segment_length_range"] = tuple(d["segment_length_range"])
        return cls(**d)


@dataclass(frozen=True)
class Example:
    input: np.ndarray = field(repr=False)
    strong_targets: np.ndarray = field(repr=False)
    weak_targets: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Task:
    config: SyntheticTaskConfig
    mixing_matrix: np.ndarray = field(repr=False)
    train: list
    val: list
    test: list


def collapse_repeats(Y) -> np.ndarray:
    """Keep the first frame of every run of consecutive equal frames."""
    Y = np.asarray(Y)
    if len(Y) == 0:
        raise ValueError("cannot collapse an empty sequence")
    flat = Y.reshape(len(Y), -1)
    keep = np.ones(len(Y), dtype=bool)
    keep[1:] = np.any(flat[1:] != flat[:-1], axis=1)
    return Y[keep]


def draw_segment_vectors(rng: np.random.Generator, count: int, dim: int, density: float) -> np.ndarray:
    """Multi-hot vectors, each redrawn until it differs from its predecessor."""
    out = np.empty((count, dim))
    prev = None
    for k in range(count):
        v = (rng.random(dim) < density).astype(np.float64)
        while prev is not None and np.array_equal(v, prev):
            v = (rng.random(dim) < density).astype(np.float64)
        out[k] = prev = v
    return out


def _strong_targets(rng, config: SyntheticTaskConfig) -> np.ndarray:
    lo, hi = config.segment_length_range
    lengths = []
    total = 0
    while total < config.n_frames:
        length = int(rng.integers(lo, hi + 1))
        lengths.append(length)
        total += length
    vectors = draw_segment_vectors(rng, len(lengths), config.dim, config.activation_density)
    return np.repeat(vectors, lengths, axis=0)[: config.n_frames]


def _mixing_matrix(rng, config: SyntheticTaskConfig) -> np.ndarray:
    if config.mixing == "identity":
        return np.eye(config.dim)
    return rng.normal(0.0, 1.0 / np.sqrt(config.dim), size=(config.dim, config.dim)) + np.eye(config.dim)


def make_example(rng, config: SyntheticTaskConfig, mixing: np.ndarray) -> Example:
    strong = _strong_targets(rng, config)
    x = strong @ mixing
    if config.input_noise_std > 0:
        x = x + rng.normal(0.0, config.input_noise_std, size=x.shape)
    return Example(input=x, strong_targets=strong, weak_targets=collapse_repeats(strong))


def generate_task(config: SyntheticTaskConfig) -> Task:
    """Draw train/val/test splits; fully determined by ``config.master_seed``."""
    rng = np.random.default_rng(config.master_seed)
    mixing = _mixing_matrix(rng, config)
    splits = [
        [make_example(rng, config, mixing) for _ in range(n)]
        for n in (config.n_train, config.n_val, config.n_test)
    ]
    return Task(config, mixing, *splits)
