"""Training loop, loss strategies, evaluation and multi-seed experiments."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernel
from .model import AdamState, adam_step, init_params, predictor_backward, predictor_forward
from .stabilizers import GammaSchedule, PriorConfig, diagonal_prior, gamma_at, omega_at, unfold_targets

STRATEGY_KINDS = ("strong_mse", "sdtw_fixed", "sdtw_gamma_schedule", "sdtw_diag_prior", "sdtw_unfold")
COLLAPSE_THRESHOLD = 0.2
JOBS_ENV = "SDTW_SWEEP_JOBS"


@dataclass(frozen=True)
class LossStrategy:
    """Which loss to train with, plus its temperature / schedule / prior settings.

    Build with the classmethod constructors rather than directly.
    """

    kind: str
    gamma: float | None = None
    schedule: GammaSchedule | None = None
    prior: PriorConfig | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind in ("sdtw_fixed", "sdtw_diag_prior", "sdtw_unfold"):
            if self.gamma is None or not self.gamma > 0:
                raise ValueError(f"{self.kind} needs gamma > 0")
        if self.kind == "sdtw_gamma_schedule" and self.schedule is None:
            raise ValueError("sdtw_gamma_schedule needs a GammaSchedule")
        if self.kind == "sdtw_diag_prior" and self.prior is None:
            raise ValueError("sdtw_diag_prior needs a PriorConfig")

    @classmethod
    def strong_mse(cls):
        return cls("strong_mse")

    @classmethod
    def sdtw_fixed(cls, gamma: float):
        return cls("sdtw_fixed", gamma=float(gamma))

    @classmethod
    def sdtw_gamma_schedule(cls, schedule: GammaSchedule | None = None):
        return cls("sdtw_gamma_schedule", schedule=schedule or GammaSchedule())

    @classmethod
    def sdtw_diag_prior(cls, gamma: float = 0.1, prior: PriorConfig | None = None):
        return cls("sdtw_diag_prior", gamma=float(gamma), prior=prior or PriorConfig())

    @classmethod
    def sdtw_unfold(cls, gamma: float = 0.1):
        return cls("sdtw_unfold", gamma=float(gamma))

    @property
    def name(self) -> str:
        if self.kind == "strong_mse":
            return "strong_mse"
        if self.kind == "sdtw_gamma_schedule":
            s = self.schedule
            return f"sdtw_gamma_schedule({s.gamma_start:g}->{s.gamma_final:g})"
        return f"{self.kind}(gamma={self.gamma:g})"

    def gamma_at(self, epoch: int) -> float | None:
        if self.kind == "strong_mse":
            return None
        if self.kind == "sdtw_gamma_schedule":
            return gamma_at(self.schedule, epoch)
        return self.gamma

    def omega_at(self, epoch: int) -> float:
        return omega_at(self.prior, epoch) if self.kind == "sdtw_diag_prior" else 0.0

    def schedule_settled(self, epoch: int) -> bool:
        """False while the temperature is still moving; loss-based decisions wait until then."""
        return self.kind != "sdtw_gamma_schedule" or epoch >= self.schedule.final_epoch

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.schedule is not None:
            d["schedule"] = asdict(self.schedule)
        if self.prior is not None:
            d["prior"] = asdict(self.prior)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossStrategy":
        kind = d["kind"]
        if kind == "sdtw_gamma_schedule":
            return cls(kind, schedule=GammaSchedule(**d.get("schedule", {})))
        if kind == "sdtw_diag_prior":
            return cls(kind, gamma=float(d.get("gamma", 0.1)), prior=PriorConfig(**d.get("prior", {})))
        gamma = d.get("gamma")
        return cls(kind, gamma=None if gamma is None else float(gamma))


@dataclass(frozen=True)
class TrainConfig:
    strategy: LossStrategy = field(default_factory=LossStrategy.strong_mse)
    learning_rate: float = 1e-3
    batch_size: int = 32
    lr_halving_patience: int = 4
    early_stop_patience: int = 12
    max_epochs: int = 150
    seed: int = 0
    hidden_units: int = 64
    context_frames: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden_units < 1:
            raise ValueError("batch_size, max_epochs and hidden_units must be >= 1")
        if self.lr_halving_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patiences must be >= 1")
        if self.context_frames < 0:
            raise ValueError("context_frames must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "strategy" in d:
            d["strategy"] = LossStrategy.from_dict(d["strategy"])
        return cls(**d)


@dataclass
class TrainedModel:
    params: dict
    history: list
    best_epoch: int
    collapsed: bool = False
    stop_reason: str = "max_epochs"
    context_frames: int = 0

    def predict(self, inputs) -> np.ndarray:
        return predictor_forward(self.params, inputs, self.context_frames)


def loss_targets(example, strategy: LossStrategy) -> np.ndarray:
    """Target sequence the strategy compares predictions against."""
    if strategy.kind == "strong_mse":
        return example.strong_targets
    if strategy.kind == "sdtw_unfold":
        return unfold_targets(example.weak_targets, len(example.input))
    return example.weak_targets


def example_loss_and_grad(outputs, example, strategy: LossStrategy, gamma, omega: float = 0.0):
    """Per-example loss and its gradient w.r.t. the predictor outputs.

    The strong baseline uses the summed squared error over frames, which is
    the cost of the diagonal alignment and keeps both losses on one scale.
    """
    targets = loss_targets(example, strategy)
    if strategy.kind == "strong_mse":
        diff = outputs - targets
        return float(np.sum(diff * diff)), 2.0 * diff
    penalty = None
    if omega > 0:
        P = diagonal_prior(len(outputs), len(targets), strategy.prior.nu)
        penalty = omega * P
    cost, grad, _ = kernel.sdtw_value_and_grad(outputs, targets, gamma, penalty)
    return cost, grad


def _stack_inputs(examples) -> np.ndarray:
    return np.stack([ex.input for ex in examples])


def _penalties(examples, targets, strategy, omega):
    if omega <= 0:
        return None
    return [omega * diagonal_prior(len(ex.input), len(t), strategy.prior.nu) for ex, t in zip(examples, targets)]


def batch_loss_and_grad(params, examples, strategy, gamma, omega=0.0, context=0):
    """Mean per-example loss over ``examples`` and the parameter gradient of that mean."""
    inputs = _stack_inputs(examples)
    outputs, cache = predictor_forward(params, inputs, context, return_cache=True)
    targets = [loss_targets(ex, strategy) for ex in examples]
    if strategy.kind == "strong_mse":
        diff = outputs - np.stack(targets)
        losses = np.sum(diff * diff, axis=(1, 2))
        out_grad = 2.0 * diff
    else:
        losses, out_grad = kernel.batch_value_and_grad(
            outputs, targets, gamma, _penalties(examples, targets, strategy, omega)
        )
    b = len(examples)
    return float(np.mean(losses)), predictor_backward(params, inputs, out_grad / b, context, cache)


def dataset_loss(params, examples, strategy, gamma, omega=0.0, context=0) -> float:
    outputs = predictor_forward(params, _stack_inputs(examples), context)
    targets_cache = [loss_targets(ex, strategy) for ex in examples]
    total = 0.0
    for k, ex in enumerate(examples):
        if strategy.kind == "strong_mse":
            diff = outputs[k] - targets_cache[k]
            total += float(np.sum(diff * diff))
            continue
        C = kernel.cost_matrix(outputs[k], targets_cache[k])
        if omega > 0:
            C = C + omega * diagonal_prior(*C.shape, strategy.prior.nu)
        total += kernel.sdtw_forward(C, gamma).cost
    return total / len(examples)


def f_measure(predictions, strong_targets, threshold: float = 0.5) -> float:
    """Micro-averaged F1 over all (frame, dimension) bins after thresholding."""
    p = np.asarray(predictions)
    t = np.asarray(strong_targets)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pb = p >= threshold
    tb = t >= 0.5
    tp = np.count_nonzero(pb & tb)
    fp = np.count_nonzero(pb & ~tb)
    fn = np.count_nonzero(~pb & tb)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def evaluate(model: TrainedModel, examples, threshold: float = 0.5) -> float:
    preds = model.predict(_stack_inputs(examples))
    targets = np.stack([ex.strong_targets for ex in examples])
    return f_measure(preds, targets, threshold)


def _finite(params) -> bool:
    return all(np.all(np.isfinite(v)) for v in params.values())


def train(task, config: TrainConfig, on_epoch_end=None) -> TrainedModel:
    """Adam training with plateau lr halving, early stopping and best-epoch restore.

    Validation loss uses the training strategy at the current gamma and omega.
    While a gamma schedule is still moving, the plateau counters and the best
    snapshot are not updated, so neither lr halving nor early stopping can fire.
    ``on_epoch_end(epoch, params, gamma, omega)`` is called after every epoch.
    """
    strategy = config.strategy
    rng = np.random.default_rng(config.seed)
    dim_in = task.train[0].input.shape[1]
    dim_out = task.train[0].strong_targets.shape[1]
    params = init_params(dim_in, dim_out, config.hidden_units, config.context_frames, rng)
    state = AdamState.zeros_like(params)
    lr = config.learning_rate
    ctx = config.context_frames

    history = []
    best_val = np.inf
    best_params = None
    best_epoch = -1
    since_best = 0
    since_lr_change = 0
    stop_reason = "max_epochs"
    collapsed = False

    n_train = len(task.train)
    for epoch in range(config.max_epochs):
        gamma = strategy.gamma_at(epoch)
        omega = strategy.omega_at(epoch)
        order = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, config.batch_size):
            batch = [task.train[i] for i in order[start:start + config.batch_size]]
            loss, grads = batch_loss_and_grad(params, batch, strategy, gamma, omega, ctx)
            if not np.isfinite(loss):
                collapsed = True
                break
            try:
                new_params, state = adam_step(state, params, grads, lr)
            except FloatingPointError:
                collapsed = True
                break
            if not _finite(new_params):
                collapsed = True
                break
            params = new_params
            losses.append(loss * len(batch))
        if collapsed:
            stop_reason = "non_finite"
            break

        train_loss = float(np.sum(losses) / n_train)
        val_loss = dataset_loss(params, task.val, strategy, gamma, omega, ctx)
        history.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "gamma": np.nan if gamma is None else gamma,
            "omega": omega,
            "learning_rate": lr,
        })
        if on_epoch_end is not None:
            on_epoch_end(epoch, params, gamma, omega)
        if not np.isfinite(val_loss):
            collapsed = True
            stop_reason = "non_finite"
            break
        if not strategy.schedule_settled(epoch):
            continue

        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            since_best = 0
            since_lr_change = 0
        else:
            since_best += 1
            since_lr_change += 1
        if since_best >= config.early_stop_patience:
            stop_reason = "early_stopping"
            break
        if since_lr_change >= config.lr_halving_patience:
            lr *= 0.5
            since_lr_change = 0

    if collapsed or best_params is None:
        best_params = params
        best_epoch = history[-1]["epoch"] if history else -1
    return TrainedModel(best_params, history, best_epoch, collapsed, stop_reason, ctx)


# ---------------------------------------------------------------------------
# multi-seed experiments


@dataclass
class StrategySummary:
    name: str
    seeds: list
    f_measures: list
    collapsed: list

    @property
    def mean_f(self) -> float:
        return float(np.mean(self.f_measures))

    @property
    def std_f(self) -> float:
        return float(np.std(self.f_measures))

    @property
    def collapse_count(self) -> int:
        return int(sum(self.collapsed))

    def to_dict(self) -> dict:
        return {
            "strategy": self.name,
            "mean_f": self.mean_f,
            "std_f": self.std_f,
            "collapse_count": self.collapse_count,
            "seeds": list(self.seeds),
            "f_measures": list(self.f_measures),
            "collapsed": list(self.collapsed),
        }


@dataclass
class ExperimentSummary:
    strategies: dict  # name -> StrategySummary, in run order
    runs: list = field(default_factory=list)

    def __getitem__(self, name) -> StrategySummary:
        return self.strategies[name]

    def table(self) -> list:
        return [
            {"strategy": s.name, "mean_f": s.mean_f, "std_f": s.std_f, "collapse_count": s.collapse_count}
            for s in self.strategies.values()
        ]

    def to_dict(self) -> dict:
        return {"summary": [s.to_dict() for s in self.strategies.values()], "runs": self.runs}


def derive_seeds(master_seed: int, n_seeds: int) -> list:
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(n_seeds)]


def _run_one(task, config: TrainConfig) -> dict:
    model = train(task, config)
    f = evaluate(model, task.test)
    return {
        "strategy": config.strategy.name,
        "seed": config.seed,
        "f_measure": f,
        "collapsed": bool(model.collapsed or f < COLLAPSE_THRESHOLD),
        "non_finite": model.collapsed,
        "best_epoch": model.best_epoch,
        "epochs_run": len(model.history),
        "stop_reason": model.stop_reason,
    }


def _n_jobs(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get(JOBS_ENV, "1"))
    return max(1, n_jobs)


def run_experiment(task, strategies, n_seeds: int, master_seed: int = 0,
                   base_config: TrainConfig | None = None, n_jobs: int | None = None) -> ExperimentSummary:
    """Train every (strategy, seed) pair and aggregate test F-measures.

    Every strategy sees the same seed list, derived from ``master_seed``. Runs
    go to a process pool when ``n_jobs`` (or ``$SDTW_SWEEP_JOBS``) exceeds 1.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    base_config = base_config or TrainConfig()
    seeds = derive_seeds(master_seed, n_seeds)
    configs = [replace(base_config, strategy=s, seed=seed) for s in strategies for seed in seeds]
    jobs = _n_jobs(n_jobs)
    if jobs == 1:
        runs = [_run_one(task, c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_one, [task] * len(configs), configs))

    summaries = {}
    for s in strategies:
        mine = [r for r in runs if r["strategy"] == s.name]
        summaries[s.name] = StrategySummary(
            s.name,
            [r["seed"] for r in mine],
            [r["f_measure"] for r in mine],
            [r["collapsed"] for r in mine],
        )
    return ExperimentSummary(summaries, runs)


def default_strategies() -> list:
    """The five-way comparison: strong baseline, plain soft-DTW and the three stabilizers."""
    return [
        LossStrategy.strong_mse(),
        LossStrategy.sdtw_fixed(0.1),
        LossStrategy.sdtw_gamma_schedule(),
        LossStrategy.sdtw_diag_prior(0.1),
        LossStrategy.sdtw_unfold(0.1),
    ]
