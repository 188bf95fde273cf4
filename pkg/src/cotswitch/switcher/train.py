"""Switcher training: AdamW, seeded split/shuffle, early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import TrainingExample, stack_embeddings, stack_targets
from ..errors import ShapeError
from .loss import LossValues, loss, loss_output_grads
from .net import SwitcherArchitecture, SwitcherModel, backward, forward

logger = logging.getLogger(__name__)

BATCH_SIZES = (16, 32, 64, 128)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    early_stop_patience: int = 5
    lambda_margin: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0
    val_fraction: float = 0.1
    hidden_dims: tuple[int, ...] = (1024, 768, 512, 256)
    dropout_rate: float = 0.2

    def __post_init__(self):
        if not 1e-5 <= self.learning_rate <= 1e-2:
            raise ValueError("learning_rate must lie in [1e-5, 1e-2]")
        if self.batch_size not in BATCH_SIZES:
            raise ValueError(f"batch_size must be one of {BATCH_SIZES}")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ValueError("max_epochs and early_stop_patience must be positive")
        if self.lambda_margin < 0:
            raise ValueError("lambda_margin must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    train_margin: float
    train_switch: float
    val_mse: float
    val_margin: float
    val_switch: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    warnings: list[str] = field(default_factory=list)
    n_train: int = 0
    n_val: int = 0

    @property
    def best_val_switch(self) -> float:
        return self.epochs[self.best_epoch - 1].val_switch

    def to_dict(self) -> dict:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_switch": self.best_val_switch if self.epochs else None,
            "stopped_early": self.stopped_early,
            "warnings": list(self.warnings),
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


class AdamW:
    """Adam with decoupled weight decay (applied to every parameter)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def gradients(
    model: SwitcherModel,
    x: np.ndarray,
    targets: np.ndarray,
    lambda_margin: float = 1.0,
    *,
    rng: Optional[np.random.Generator] = None,
    masks=None,
    update_stats: bool = False,
) -> tuple[LossValues, dict[str, np.ndarray]]:
    """Train-mode forward plus backward of ``l_switch`` on one batch."""
    preds, cache = forward(model, x, training=True, rng=rng, masks=masks, update_stats=update_stats)
    values = loss(preds, targets, lambda_margin)
    d_mse, d_margin = loss_output_grads(preds, targets)
    return values, backward(model, cache, d_mse + lambda_margin * d_margin)


def split_indices(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(val_fraction * n))), n - 2)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def evaluate_loss(model: SwitcherModel, x: np.ndarray, y: np.ndarray, lambda_margin: float) -> LossValues:
    return loss(model.predict(x), y, lambda_margin)


def train(
    dataset: Sequence[TrainingExample],
    config: TrainConfig = TrainConfig(),
    val_dataset: Optional[Sequence[TrainingExample]] = None,
) -> tuple[SwitcherModel, TrainHistory]:
    """Fit a switcher; returns the best-validation-epoch model and history.

    Deterministic given ``config.seed``: the split, initialization, batch
    order and dropout masks all come from streams spawned off that seed.
    ``val_dataset`` overrides the internal validation split.
    """
    if len(dataset) < 10:
        raise ValueError(f"need at least 10 training examples, got {len(dataset)}")
    dims = {ex.embedding.dim for ex in dataset}
    if val_dataset is not None:
        dims |= {ex.embedding.dim for ex in val_dataset}
    if len(dims) != 1:
        raise ShapeError(f"inconsistent embedding dimensions: {sorted(dims)}")

    split_ss, init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(4)
    x_all = stack_embeddings(dataset)
    y_all = stack_targets(dataset)
    if val_dataset is None:
        tr_idx, va_idx = split_indices(len(dataset), config.val_fraction, np.random.default_rng(split_ss))
        x_tr, y_tr, x_va, y_va = x_all[tr_idx], y_all[tr_idx], x_all[va_idx], y_all[va_idx]
    else:
        x_tr, y_tr = x_all, y_all
        x_va, y_va = stack_embeddings(val_dataset), stack_targets(val_dataset)

    arch = SwitcherArchitecture(dims.pop(), config.hidden_dims, 2, config.dropout_rate)
    model = SwitcherModel.init(arch, seed=int(init_ss.generate_state(1)[0]))
    history = TrainHistory(n_train=len(x_tr), n_val=len(x_va))
    if np.all(x_tr == x_tr[0]):
        history.warnings.append("degenerate dataset: all training embeddings are identical")
        logger.warning(history.warnings[-1])

    opt = AdamW(model.params, config.learning_rate, config.weight_decay)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    best_state: Optional[SwitcherModel] = None
    best_val = np.inf
    since_best = 0
    lam = config.lambda_margin

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(x_tr))
        sums = np.zeros(3)
        seen = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # batchnorm needs two rows
            values, grads = gradients(model, x_tr[idx], y_tr[idx], lam, rng=drop_rng, update_stats=True)
            opt.step(grads)
            sums += len(idx) * np.array([values.l_mse, values.l_margin, values.l_switch])
            seen += len(idx)
        model.eval()
        tr = sums / max(seen, 1)
        va = evaluate_loss(model, x_va, y_va, lam)
        history.epochs.append(EpochRecord(epoch, *map(float, tr), va.l_mse, va.l_margin, va.l_switch))
        logger.debug("epoch %d train %.5f val %.5f", epoch, tr[2], va.l_switch)

        if va.l_switch < best_val:
            best_val = va.l_switch
            best_state = model.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                history.stopped_early = True
                break

    assert best_state is not None
    best_state.eval()
    return best_state, history
