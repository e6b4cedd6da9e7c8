"""Feedforward regressor with dropout and two scalar heads.

The trunk is a stack of affine layers with relu or tanh activations, a
dropout mask after every hidden activation, and two linear heads on top:
one predicting the target value, one predicting the log of the aleatoric
variance (kept in log space so the variance is positive by construction).
Forward passes record everything needed for an exact reverse-mode gradient,
including the sampled dropout masks, so a stored trace can be replayed
bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, StaleTraceError
from .matrix import Matrix
from .rng import Rng, sample_dropout_mask

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    dropout_p: float = 0.05
    activation: str = "relu"
    # Log-variance outputs are clamped to keep exp(-log_var) bounded during
    # early training; the range is configurable and the gradient is zeroed
    # wherever the clamp is active.
    log_var_min: float = -6.0
    log_var_max: float = 6.0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ParameterError(f"input_dim must be >= 1, got {self.input_dim}")
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if any(d < 1 for d in self.hidden_dims):
            raise ParameterError(f"hidden dims must all be >= 1, got {self.hidden_dims}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.activation not in _ACTIVATIONS:
            raise ParameterError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")
        if not self.log_var_min < self.log_var_max:
            raise ParameterError("log_var_min must be below log_var_max")

    @property
    def trunk_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims)


@dataclass
class MlpModel:
    """Parameter container; mutated only by the optimizer between steps."""

    config: MlpConfig
    params: dict[str, Matrix]

    def param_shapes(self) -> tuple[tuple[str, tuple[int, int]], ...]:
        return tuple((name, m.shape) for name, m in self.params.items())


@dataclass
class ForwardTrace:
    """Bookkeeping for one forward pass, sufficient for exact backprop."""

    x: Matrix
    layer_inputs: list[np.ndarray]  # h_0 = x.data, then post-dropout activations
    activations: list[np.ndarray]  # post-nonlinearity, pre-dropout
    masks: list[Matrix]
    y_hat: np.ndarray
    log_var: np.ndarray
    clamp_active: np.ndarray
    param_shapes: tuple = field(repr=False, default=())


def _param_names(config: MlpConfig):
    for i in range(len(config.hidden_dims)):
        yield f"layer{i}.weight"
        yield f"layer{i}.bias"
    yield "head_y.weight"
    yield "head_y.bias"
    yield "head_logvar.weight"
    yield "head_logvar.bias"


def _fan_in_uniform(rng: Rng, fan_in: int, fan_out: int) -> Matrix:
    bound = 1.0 / np.sqrt(fan_in)
    vals = rng.uniforms(fan_in * fan_out) * (2.0 * bound) - bound
    return Matrix._wrap(vals.reshape(fan_in, fan_out), check_finite=True)


def init_model(config: MlpConfig, rng: Rng) -> MlpModel:
    """Fan-in-scaled uniform weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases.

    Zero biases make the initial log-variance prediction 0 on zero input,
    i.e. unit variance, which matches standardized targets. Weights are drawn
    trunk-first, then target head, then log-variance head, row-major.
    """
    dims = config.trunk_dims
    params: dict[str, Matrix] = {}
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"layer{i}.weight"] = _fan_in_uniform(rng, din, dout)
        params[f"layer{i}.bias"] = Matrix.zeros(1, dout)
    trunk_out = dims[-1]
    params["head_y.weight"] = _fan_in_uniform(rng, trunk_out, 1)
    params["head_y.bias"] = Matrix.zeros(1, 1)
    params["head_logvar.weight"] = _fan_in_uniform(rng, trunk_out, 1)
    params["head_logvar.bias"] = Matrix.zeros(1, 1)
    return MlpModel(config=config, params=params)


def forward(
    model: MlpModel,
    x: Matrix,
    rng: Rng | None = None,
    masks: list[Matrix] | None = None,
) -> tuple[np.ndarray, np.ndarray, ForwardTrace]:
    """One forward pass over a batch.

    Modes: pass ``rng`` to sample fresh dropout masks (one stochastic draw),
    pass ``masks`` to replay stored ones, pass neither for the deterministic
    all-ones-mask forward. Returns (y_hat, log_var, trace) with the
    log-variance clamped to the config range.
    """
    if rng is not None and masks is not None:
        raise ParameterError("pass rng or masks, not both")
    cfg = model.config
    if x.cols != cfg.input_dim:
        raise ShapeError(f"input has {x.cols} columns, model expects {cfg.input_dim}")
    n_hidden = len(cfg.hidden_dims)
    if masks is not None and len(masks) != n_hidden:
        raise ShapeError(f"expected {n_hidden} masks, got {len(masks)}")

    params = model.params
    h = x.data
    layer_inputs = [h]
    activations: list[np.ndarray] = []
    used_masks: list[Matrix] = []
    # overflow to inf is tolerated here; loss kernels reject non-finite values
    with np.errstate(over="ignore", invalid="ignore"):
        for i, width in enumerate(cfg.hidden_dims):
            pre = h @ params[f"layer{i}.weight"].data + params[f"layer{i}.bias"].data
            act = np.maximum(pre, 0.0) if cfg.activation == "relu" else np.tanh(pre)
            if rng is not None:
                mask = sample_dropout_mask(rng, act.shape[0], width, cfg.dropout_p)
            elif masks is not None:
                if masks[i].shape != act.shape:
                    raise ShapeError(f"mask {i} has shape {masks[i].shape}, need {act.shape}")
                mask = masks[i]
            else:
                mask = Matrix._wrap(np.ones_like(act))
            h = act * mask.data
            activations.append(act)
            used_masks.append(mask)
            layer_inputs.append(h)

        y_hat = (h @ params["head_y.weight"].data + params["head_y.bias"].data).ravel()
        raw_log_var = (
            h @ params["head_logvar.weight"].data + params["head_logvar.bias"].data
        ).ravel()
    log_var = np.clip(raw_log_var, cfg.log_var_min, cfg.log_var_max)
    clamp_active = (raw_log_var < cfg.log_var_min) | (raw_log_var > cfg.log_var_max)
    for arr in (y_hat, log_var):
        arr.setflags(write=False)
    trace = ForwardTrace(
        x=x,
        layer_inputs=layer_inputs,
        activations=activations,
        masks=used_masks,
        y_hat=y_hat,
        log_var=log_var,
        clamp_active=clamp_active,
        param_shapes=model.param_shapes(),
    )
    return y_hat, log_var, trace


def backward(
    model: MlpModel,
    trace: ForwardTrace,
    d_y_hat: np.ndarray,
    d_log_var: np.ndarray,
) -> dict[str, Matrix]:
    """Exact gradients of a scalar loss w.r.t. every parameter.

    ``d_y_hat`` and ``d_log_var`` are the upstream gradients of the loss with
    respect to the two head outputs. Gradients flow only through units that
    survived dropout and only where the log-variance clamp is inactive.
    """
    if trace.param_shapes != model.param_shapes():
        raise StaleTraceError("trace does not match the model's current parameters")
    d_y_hat = np.asarray(d_y_hat, dtype=np.float64)
    d_log_var = np.asarray(d_log_var, dtype=np.float64)
    batch = trace.y_hat.size
    if d_y_hat.shape != (batch,) or d_log_var.shape != (batch,):
        raise ShapeError(
            f"upstream gradients must have shape ({batch},), "
            f"got {d_y_hat.shape} and {d_log_var.shape}"
        )

    cfg = model.config
    params = model.params
    grads: dict[str, Matrix] = {}

    d_lv = np.where(trace.clamp_active, 0.0, d_log_var)
    dcol_y = d_y_hat[:, None]
    dcol_z = d_lv[:, None]
    h_last = trace.layer_inputs[-1]
    grads["head_y.weight"] = Matrix._wrap(h_last.T @ dcol_y, check_finite=True)
    grads["head_y.bias"] = Matrix._wrap(dcol_y.sum(axis=0, keepdims=True), check_finite=True)
    grads["head_logvar.weight"] = Matrix._wrap(h_last.T @ dcol_z, check_finite=True)
    grads["head_logvar.bias"] = Matrix._wrap(dcol_z.sum(axis=0, keepdims=True), check_finite=True)

    d_h = dcol_y @ params["head_y.weight"].data.T + dcol_z @ params["head_logvar.weight"].data.T
    for i in reversed(range(len(cfg.hidden_dims))):
        act = trace.activations[i]
        d_act = d_h * trace.masks[i].data
        if cfg.activation == "relu":
            d_pre = d_act * (act > 0.0)
        else:
            d_pre = d_act * (1.0 - act * act)
        grads[f"layer{i}.weight"] = Matrix._wrap(
            trace.layer_inputs[i].T @ d_pre, check_finite=True
        )
        grads[f"layer{i}.bias"] = Matrix._wrap(
            d_pre.sum(axis=0, keepdims=True), check_finite=True
        )
        d_h = d_pre @ params[f"layer{i}.weight"].data.T
    return {name: grads[name] for name in _param_names(cfg)}


CHECKPOINT_FORMAT = "semireg-model"
CHECKPOINT_VERSION = 1


def save_model(model: MlpModel, path, provenance: dict | None = None) -> None:
    """Write a versioned JSON checkpoint; floats round-trip bit-exactly.

    ``provenance`` (e.g. config hash and seed) is stored verbatim for audit
    purposes and ignored by load_model.
    """
    cfg = model.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_dim": cfg.input_dim,
            "hidden_dims": list(cfg.hidden_dims),
            "dropout_p": cfg.dropout_p,
            "activation": cfg.activation,
            "log_var_min": cfg.log_var_min,
            "log_var_max": cfg.log_var_max,
        },
        "params": {
            name: {"rows": m.rows, "cols": m.cols, "data": m.flat()}
            for name, m in model.params.items()
        },
    }
    if provenance:
        doc["provenance"] = provenance
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ParameterError(f"not a model checkpoint: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = MlpConfig(
        input_dim=doc["config"]["input_dim"],
        hidden_dims=tuple(doc["config"]["hidden_dims"]),
        dropout_p=doc["config"]["dropout_p"],
        activation=doc["config"]["activation"],
        log_var_min=doc["config"]["log_var_min"],
        log_var_max=doc["config"]["log_var_max"],
    )
    params = {
        name: Matrix.from_flat(entry["rows"], entry["cols"], entry["data"])
        for name, entry in doc["params"].items()
    }
    expected = list(_param_names(cfg))
    if sorted(params) != sorted(expected):
        raise ParameterError("checkpoint parameter names do not match its config")
    return MlpModel(config=cfg, params={name: params[name] for name in expected})
