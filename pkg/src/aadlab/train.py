"""AdamW training loop with early stopping and trial-grouped cross-validation folds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import decoder as dec
from .correlation import NEG_SUM, LossKind, loss_function
from .errors import (
    ConfigError,
    DataQualityError,
    DegenerateVarianceError,
    EmptyInputError,
    InsufficientTrialsError,
    NonFiniteGradientError,
    ShapeError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    weight_decay: float = 5e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss: str = LossKind.PCC.value
    seed: int = 0
    # allows loss="neg_sum"
    experimental: bool = False

    def __post_init__(self) -> None:
        if not (self.learning_rate > 0 and self.weight_decay >= 0 and self.epsilon > 0):
            raise ConfigError("learning_rate and epsilon must be positive, weight_decay >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        loss = self.loss.value if isinstance(self.loss, LossKind) else str(self.loss)
        object.__setattr__(self, "loss", loss)
        # fails early on unknown or non-enabled losses
        loss_function(loss, experimental=self.experimental)


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> OptimizerState:
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(params, grads, state: OptimizerState, cfg: TrainConfig):
    """One AdamW update: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).

    ``params`` may be a flat array or DecoderParams; the same type is returned.
    """
    theta = params.values if isinstance(params, dec.DecoderParams) else np.asarray(params, dtype=np.float64)
    g = np.asarray(grads.values if isinstance(grads, dec.DecoderParams) else grads, dtype=np.float64)
    if g.shape != theta.shape or state.first_moment.shape != theta.shape:
        raise ShapeError("parameter, gradient and moment vectors must have equal length")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise NonFiniteGradientError(
            f"{bad.size} non-finite gradient entries (first at index {bad[0]}) at step {state.step_count + 1}"
        )
    step = state.step_count + 1
    m = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    new = theta * (1.0 - cfg.learning_rate * cfg.weight_decay) - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    new_state = OptimizerState(m, v, step)
    if isinstance(params, dec.DecoderParams):
        return params.with_values(new), new_state
    return new, new_state


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True once patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved_last(self) -> bool:
        return self.bad_epochs == 0


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    n_excluded: int = 0

    def to_text(self) -> str:
        lines = [
            f"# stopped_epoch {self.stopped_epoch}",
            f"# best_epoch {self.best_epoch}",
            f"# excluded_segments {self.n_excluded}",
            "epoch\ttrain_loss\tval_loss",
        ]
        lines += [f"{r.epoch}\t{r.train_loss!r}\t{r.val_loss!r}" for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> TrainHistory:
        h = cls()
        for line in text.splitlines():
            if line.startswith("# stopped_epoch"):
                h.stopped_epoch = int(line.split()[-1])
            elif line.startswith("# best_epoch"):
                h.best_epoch = int(line.split()[-1])
            elif line.startswith("# excluded_segments"):
                h.n_excluded = int(line.split()[-1])
            elif line and not line.startswith(("#", "epoch")):
                e, tr, va = line.split("\t")
                h.records.append(EpochRecord(int(e), float(tr), float(va)))
        return h


def _stack(segments) -> tuple[np.ndarray, list]:
    t = {s.eeg.shape for s in segments}
    if len(t) != 1:
        raise ShapeError(f"segments have mixed shapes {sorted(t)}")
    return np.stack([np.asarray(s.eeg, dtype=np.float64) for s in segments]), [s.env for s in segments]


def _usable(segments, loss_fn) -> tuple[list, int]:
    """Drop segments whose envelopes are degenerate for the loss."""
    keep = []
    for s in segments:
        try:
            # a non-constant dummy prediction isolates envelope degeneracy
            loss_fn(np.arange(s.env.n_samples, dtype=np.float64), s.env)
        except DegenerateVarianceError:
            continue
        keep.append(s)
    return keep, len(segments) - len(keep)


def mean_loss(params, config: dec.DecoderConfig, x: np.ndarray, envs, loss_fn, chunk: int = 256) -> float:
    total = 0.0
    for start in range(0, len(envs), chunk):
        y = dec.forward_batch(params, config, x[start:start + chunk])
        for row, env in zip(y, envs[start:start + chunk]):
            total += loss_fn(row, env, on_collapse="direction")[0]
    return total / len(envs)


def train_model(
    config: dec.DecoderConfig,
    tcfg: TrainConfig,
    train_segments: Sequence,
    val_segments: Sequence,
    params: dec.DecoderParams | None = None,
) -> tuple[dec.DecoderParams, TrainHistory]:
    """Mini-batch AdamW with best-checkpoint early stopping on validation loss.

    Segments need ``.eeg`` (T x C array) and ``.env`` (EnvelopeSet). A constant
    prediction (e.g. the all-zero linear init) is stepped along the limiting
    correlation direction rather than treated as an error.
    """
    if len(train_segments) == 0 or len(val_segments) == 0:
        raise EmptyInputError("need non-empty training and validation sets")
    loss_fn = loss_function(tcfg.loss, experimental=tcfg.experimental)
    train_ok, n_bad = _usable(train_segments, loss_fn)
    if n_bad * 2 > len(train_segments):
        raise DataQualityError(
            f"{n_bad} of {len(train_segments)} training segments have degenerate envelopes"
        )
    val_ok, n_bad_val = _usable(val_segments, loss_fn)
    if not val_ok:
        raise DataQualityError("every validation segment has degenerate envelopes")
    x_tr, env_tr = _stack(train_ok)
    x_va, env_va = _stack(val_ok)
    if config.family == "linear_lagged" and config.lag_samples >= x_tr.shape[1]:
        raise ConfigError(f"lag_samples {config.lag_samples} >= segment length {x_tr.shape[1]}")

    params = dec.init(config) if params is None else params.copy()
    state = OptimizerState.zeros(len(params))
    rng = np.random.default_rng(tcfg.seed)
    stopper = EarlyStopping(tcfg.patience)
    history = TrainHistory(n_excluded=n_bad + n_bad_val)
    best = params.copy()
    n = len(env_tr)

    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            xb = x_tr[idx]
            y = dec.forward_batch(params, config, xb)
            up = np.empty_like(y)
            for k, i in enumerate(idx):
                value, up[k] = loss_fn(y[k], env_tr[i], on_collapse="direction")
                epoch_loss += value
            grad = dec.backward_batch(params, config, xb, up / len(idx))
            try:
                params, state = adamw_step(params, grad, state, tcfg)
            except NonFiniteGradientError as exc:
                raise NonFiniteGradientError(f"epoch {epoch}, batch starting {start}: {exc}") from exc
        val = mean_loss(params, config, x_va, env_va, loss_fn)
        history.records.append(EpochRecord(epoch, epoch_loss / n, val))
        stop = stopper.update(epoch, val)
        if stopper.improved_last:
            best = params.copy()
        log.debug("epoch %d train %.5f val %.5f", epoch, epoch_loss / n, val)
        if stop:
            break

    history.stopped_epoch = history.records[-1].epoch
    history.best_epoch = stopper.best_epoch
    return best, history


class Fold(NamedTuple):
    train: tuple
    val: tuple
    test: tuple


def loto_folds(trial_ids: Sequence, n_folds: int = 4, seed: int = 0) -> list[Fold]:
    """Group trials into ``n_folds`` disjoint test sets; one other trial validates each fold."""
    ids = list(trial_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("trial ids must be distinct")
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < n_folds:
        raise InsufficientTrialsError(f"{len(ids)} trials cannot form {n_folds} test groups")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    groups = [sorted(g.tolist()) for g in np.array_split(perm, n_folds)]
    if len(ids) - max(len(g) for g in groups) < 2:
        raise InsufficientTrialsError(
            f"{len(ids)} trials in {n_folds} folds leave no room for a validation and a training trial"
        )
    folds = []
    for g in groups:
        rest = [i for i in range(len(ids)) if i not in g]
        v = int(rest[rng.integers(len(rest))])
        folds.append(Fold(
            train=tuple(ids[i] for i in rest if i != v),
            val=(ids[v],),
            test=tuple(ids[i] for i in g),
        ))
    return folds


def with_loss(tcfg: TrainConfig, loss) -> TrainConfig:
    return replace(tcfg, loss=loss.value if isinstance(loss, LossKind) else loss,
                   experimental=tcfg.experimental or loss == NEG_SUM)
