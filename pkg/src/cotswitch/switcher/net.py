"""Feed-forward pass-rate regressor with batch normalization, in numpy.

Each hidden layer is ``affine -> batchnorm -> ReLU -> dropout``; the final
affine layer emits two raw values ``(y_sc, y_lc)``. Backpropagation is
written out by hand so that gradients can be checked against finite
differences.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import BatchSizeError, NumericError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
KAIMING_SLOPE = np.sqrt(5.0)  # negative-slope parameter of the weight init


@dataclass(frozen=True)
class SwitcherArchitecture:
    input_dim: int
    hidden_dims: tuple[int, ...] = (1024, 768, 512, 256)
    output_dim: int = 2
    dropout_rate: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.output_dim != 2:
            raise ValueError("output_dim is fixed at 2 (SC, LC)")
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("all layer dimensions must be positive")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout_rate must lie in [0, 0.5]")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SwitcherArchitecture":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d["hidden_dims"]),
            output_dim=int(d.get("output_dim", 2)),
            dropout_rate=float(d["dropout_rate"]),
        )


def param_names(arch: SwitcherArchitecture) -> list[str]:
    names = []
    for i in range(len(arch.layer_dims)):
        names += [f"W{i}", f"b{i}"]
        if i < arch.n_hidden:
            names += [f"gamma{i}", f"beta{i}"]
    return names


def buffer_names(arch: SwitcherArchitecture) -> list[str]:
    return [n for i in range(arch.n_hidden) for n in (f"running_mean{i}", f"running_var{i}")]


class SwitcherModel:
    """Parameters, running statistics and the train/eval flag."""

    def __init__(
        self,
        arch: SwitcherArchitecture,
        params: dict[str, np.ndarray],
        buffers: dict[str, np.ndarray],
        momentum: float = BN_MOMENTUM,
        eps: float = BN_EPS,
    ):
        self.arch = arch
        self.params = params
        self.buffers = buffers
        self.momentum = momentum
        self.eps = eps
        self.training = False
        self._check_shapes()

    @classmethod
    def init(cls, arch: SwitcherArchitecture, seed: int = 0, dtype=np.float64) -> "SwitcherModel":
        """Kaiming-uniform fan-in weights, zero biases, unit BN scale.

        Uses negative slope sqrt(5), i.e. bound 1/sqrt(fan_in), the common
        default for affine layers. The ReLU gain (bound sqrt(6/fan_in))
        inflates the final, un-normalized layer and slows early training.
        """
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        buffers: dict[str, np.ndarray] = {}
        for i, (fan_in, fan_out) in enumerate(arch.layer_dims):
            bound = np.sqrt(6.0 / ((1.0 + KAIMING_SLOPE**2) * fan_in))
            params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            params[f"b{i}"] = np.zeros(fan_out, dtype=dtype)
            if i < arch.n_hidden:
                params[f"gamma{i}"] = np.ones(fan_out, dtype=dtype)
                params[f"beta{i}"] = np.zeros(fan_out, dtype=dtype)
                buffers[f"running_mean{i}"] = np.zeros(fan_out, dtype=dtype)
                buffers[f"running_var{i}"] = np.ones(fan_out, dtype=dtype)
        return cls(arch, params, buffers)

    def _check_shapes(self) -> None:
        for i, (fan_in, fan_out) in enumerate(self.arch.layer_dims):
            if self.params[f"W{i}"].shape != (fan_in, fan_out) or self.params[f"b{i}"].shape != (fan_out,):
                raise ShapeError(f"layer {i} parameters do not match architecture {self.arch}")
            if i < self.arch.n_hidden:
                for n in (f"gamma{i}", f"beta{i}"):
                    if self.params[n].shape != (fan_out,):
                        raise ShapeError(f"{n} has shape {self.params[n].shape}, expected ({fan_out},)")
                for n in (f"running_mean{i}", f"running_var{i}"):
                    if self.buffers[n].shape != (fan_out,):
                        raise ShapeError(f"{n} has shape {self.buffers[n].shape}, expected ({fan_out},)")
                if np.any(self.buffers[f"running_var{i}"] <= 0):
                    raise NumericError(f"running_var{i} must be strictly positive")

    def train(self) -> "SwitcherModel":
        self.training = True
        return self

    def eval(self) -> "SwitcherModel":
        self.training = False
        return self

    @property
    def dtype(self):
        return self.params["W0"].dtype

    def astype(self, dtype) -> "SwitcherModel":
        out = SwitcherModel(
            self.arch,
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
            self.momentum,
            self.eps,
        )
        out.training = self.training
        return out

    def copy(self) -> "SwitcherModel":
        return copy.deepcopy(self)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode raw predictions; the model's mode flag is left untouched."""
        out, _ = forward(self, x, training=False)
        return out


@dataclass
class ForwardCache:
    x: np.ndarray
    layers: list[dict[str, np.ndarray]] = field(default_factory=list)
    training: bool = True


def _as_batch(model: SwitcherModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.arch.input_dim:
        raise ShapeError(f"expected inputs of dim {model.arch.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("inputs contain NaN or inf")
    return x.astype(model.dtype, copy=False)


def forward(
    model: SwitcherModel,
    x: np.ndarray,
    *,
    training: Optional[bool] = None,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[Sequence[Optional[np.ndarray]]] = None,
    update_stats: bool = True,
) -> tuple[np.ndarray, ForwardCache]:
    """Return raw ``(N, 2)`` predictions and the cache needed by ``backward``.

    ``training`` defaults to the model's flag. In training mode batch
    statistics are used (``N >= 2`` required) and, unless ``update_stats`` is
    false, running statistics move with the configured momentum. Dropout
    masks come from ``masks`` when given, else from ``rng``; with neither,
    dropout is skipped.
    """
    training = model.training if training is None else training
    h = _as_batch(model, x)
    n = h.shape[0]
    if training and n < 2:
        raise BatchSizeError("train-mode forward needs a batch of at least 2 rows")
    p = model.params
    cache = ForwardCache(x=h, training=training)
    drop = model.arch.dropout_rate
    for i in range(model.arch.n_hidden):
        layer: dict[str, np.ndarray] = {"input": h}
        z = h @ p[f"W{i}"] + p[f"b{i}"]
        if training:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            if update_stats:
                m = model.momentum
                unbiased = var * n / (n - 1)
                rm, rv = model.buffers[f"running_mean{i}"], model.buffers[f"running_var{i}"]
                rm *= 1 - m
                rm += m * mu
                rv *= 1 - m
                rv += m * unbiased
        else:
            mu = model.buffers[f"running_mean{i}"]
            var = model.buffers[f"running_var{i}"]
        inv_std = 1.0 / np.sqrt(var + model.eps)
        xhat = (z - mu) * inv_std
        a = p[f"gamma{i}"] * xhat + p[f"beta{i}"]
        active = a > 0
        h = a * active
        mask = None
        if training:
            if masks is not None:
                mask = masks[i]
            elif rng is not None and drop > 0:
                mask = (rng.random(h.shape) >= drop).astype(h.dtype) / (1.0 - drop)
            if mask is not None:
                h = h * mask
        layer.update(xhat=xhat, inv_std=inv_std, active=active)
        if mask is not None:
            layer["mask"] = mask
        cache.layers.append(layer)
    last = model.arch.n_hidden
    cache.layers.append({"input": h})
    out = h @ p[f"W{last}"] + p[f"b{last}"]
    return out, cache


def backward(model: SwitcherModel, cache: ForwardCache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable parameter.

    ``dout`` is the loss gradient w.r.t. the raw ``(N, 2)`` outputs. The
    cache must come from a training-mode forward pass.
    """
    if not cache.training:
        raise ValueError("backward needs a training-mode forward cache")
    p = model.params
    grads: dict[str, np.ndarray] = {}
    last = model.arch.n_hidden
    h = cache.layers[last]["input"]
    grads[f"W{last}"] = h.T @ dout
    grads[f"b{last}"] = dout.sum(axis=0)
    dh = dout @ p[f"W{last}"].T
    for i in range(model.arch.n_hidden - 1, -1, -1):
        layer = cache.layers[i]
        if "mask" in layer:
            dh = dh * layer["mask"]
        da = dh * layer["active"]
        xhat, inv_std = layer["xhat"], layer["inv_std"]
        grads[f"gamma{i}"] = (da * xhat).sum(axis=0)
        grads[f"beta{i}"] = da.sum(axis=0)
        dxhat = da * p[f"gamma{i}"]
        n = dxhat.shape[0]
        dz = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        grads[f"W{i}"] = layer["input"].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ p[f"W{i}"].T
    return grads


def clamp_predictions(preds: np.ndarray) -> np.ndarray:
    return np.clip(preds, 0.0, 1.0)
