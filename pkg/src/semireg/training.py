"""Co-training loop for two dropout regressors with pseudo-labeled data.

Each step runs one stochastic labeled forward per model, regenerates
pseudo-labels for the unlabeled batch from the current weights, evaluates the
four loss terms the active variant uses, and applies one first-order update
to both models. Pseudo-labels are constants: no gradient reaches the weights
that produced them.

Variants (the ablation lattice):
  baseline      heteroscedastic losses only; each model's unlabeled targets
                come from a single stochastic pass of the other model
                (cross-supervision).
  baseline_con  baseline plus the uncertainty consistency losses.
  baseline_ens  baseline with cross-supervision replaced by ensembled
                pseudo-labels shared by both models.
  full          consistency losses and ensembled pseudo-labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import Normalizer, SemiSupervisedSplit
from .ensemble import PseudoLabels, generate_pseudo_labels, predict
from .errors import (
    DivergenceError,
    NonFiniteError,
    NonFiniteLossError,
    ParameterError,
    ShapeError,
    UsageError,
)
from .evaluation import BinReport, mae, r_squared, spearman_rank_corr, uncertainty_binning
from .losses import LossBreakdown
from .matrix import Matrix
from .mlp import MlpConfig, MlpModel, backward, forward, init_model
from .rng import Rng

VARIANTS = ("baseline", "baseline_con", "baseline_ens", "full")
OPTIMIZERS = ("adam", "sgd_momentum")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_labeled: int = 32
    batch_unlabeled: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    unlabeled_weight: float = 10.0
    ensemble_draws: int = 5
    dropout_p: float = 0.05
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    seed: int = 0
    variant: str = "full"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    report_bins: int = 10

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ParameterError("batch sizes must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.unlabeled_weight < 0:
            raise ParameterError(f"unlabeled_weight must be >= 0, got {self.unlabeled_weight}")
        if self.ensemble_draws < 1:
            raise ParameterError(f"ensemble_draws must be >= 1, got {self.ensemble_draws}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def uses_consistency(self) -> bool:
        return self.variant in ("baseline_con", "full")

    @property
    def uses_ensembling(self) -> bool:
        return self.variant in ("baseline_ens", "full")

    def model_config(self, input_dim: int) -> MlpConfig:
        return MlpConfig(
            input_dim=input_dim,
            hidden_dims=self.hidden_dims,
            dropout_p=self.dropout_p,
            activation=self.activation,
        )


@dataclass
class OptimizerState:
    kind: str
    step: int
    slots: dict[str, dict[str, np.ndarray]]


def init_optimizer_state(config: TrainConfig, params: dict[str, Matrix]) -> OptimizerState:
    slots: dict[str, dict[str, np.ndarray]] = {}
    for name, p in params.items():
        if config.optimizer == "adam":
            slots[name] = {"m": np.zeros(p.shape), "v": np.zeros(p.shape)}
        else:
            slots[name] = {"velocity": np.zeros(p.shape)}
    return OptimizerState(kind=config.optimizer, step=0, slots=slots)


def optimizer_update(
    params: dict[str, Matrix],
    grads: dict[str, Matrix],
    state: OptimizerState,
    config: TrainConfig,
) -> dict[str, Matrix]:
    """One deterministic optimizer step; accumulators are updated in place.

    sgd_momentum: v <- momentum*v + g; p <- p - lr*v
    adam: standard bias-corrected moments, p <- p - lr*m_hat/(sqrt(v_hat)+eps)
    """
    if set(params) != set(grads):
        raise ShapeError("params and grads must have identical keys")
    state.step += 1
    lr = config.learning_rate
    out: dict[str, Matrix] = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, param {p.shape}")
            slot = state.slots[name]
            if state.kind == "adam":
                slot["m"] = config.adam_beta1 * slot["m"] + (1 - config.adam_beta1) * g.data
                slot["v"] = config.adam_beta2 * slot["v"] + (1 - config.adam_beta2) * g.data**2
                m_hat = slot["m"] / (1 - config.adam_beta1**state.step)
                v_hat = slot["v"] / (1 - config.adam_beta2**state.step)
                new = p.data - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
            else:
                slot["velocity"] = config.momentum * slot["velocity"] + g.data
                new = p.data - lr * slot["velocity"]
            out[name] = Matrix._wrap(new, check_finite=True)
    return out


@dataclass
class TrainState:
    model_a: MlpModel
    model_b: MlpModel
    opt_a: OptimizerState
    opt_b: OptimizerState
    rng: Rng
    epoch: int = 0
    step: int = 0
    history: list[LossBreakdown] = field(default_factory=list)


def init_train_state(config: TrainConfig, input_dim: int) -> TrainState:
    """Two models with identical architecture, independently seeded inits."""
    root = Rng(config.seed)
    model_cfg = config.model_config(input_dim)
    model_a = init_model(model_cfg, root.split("init_a"))
    model_b = init_model(model_cfg, root.split("init_b"))
    return TrainState(
        model_a=model_a,
        model_b=model_b,
        opt_a=init_optimizer_state(config, model_a.params),
        opt_b=init_optimizer_state(config, model_b.params),
        rng=root.split("train"),
    )


def _cross_targets(
    model_a: MlpModel, model_b: MlpModel, x: Matrix, rng: Rng
) -> tuple[PseudoLabels, PseudoLabels]:
    # Single stochastic pass per model; each prediction becomes the *other*
    # model's detached target.
    y_a, lv_a, _ = forward(model_a, x, rng=rng.split("a"))
    y_b, lv_b, _ = forward(model_b, x, rng=rng.split("b"))
    target_for_a = PseudoLabels(y=y_b.copy(), log_var=lv_b.copy(), draws=1)
    target_for_b = PseudoLabels(y=y_a.copy(), log_var=lv_a.copy(), draws=1)
    return target_for_a, target_for_b


def _sum_grads(*grad_dicts: dict[str, Matrix] | None) -> dict[str, Matrix]:
    present = [g for g in grad_dicts if g is not None]
    total: dict[str, Matrix] = dict(present[0])
    for extra in present[1:]:
        for name, g in extra.items():
            total[name] = Matrix._wrap(total[name].data + g.data)
    return total


def train_step(
    state: TrainState,
    labeled: tuple[Matrix, np.ndarray],
    unlabeled: Matrix | None,
    config: TrainConfig,
) -> LossBreakdown:
    """One optimization step over a labeled batch and an unlabeled batch.

    Mutates ``state`` (parameters, optimizer accumulators, counters,
    history) and returns the step's loss components. A non-finite loss or
    update aborts the step before any parameter changes and raises
    NonFiniteLossError carrying the offending components.
    """
    return _train_step_impl(state, labeled, unlabeled, config)


def _train_step_impl(
    state: TrainState,
    labeled: tuple[Matrix, np.ndarray],
    unlabeled: Matrix | None,
    config: TrainConfig,
    *,
    injected_targets: tuple[PseudoLabels, PseudoLabels] | None = None,
) -> LossBreakdown:
    x_lab, y_lab = labeled
    if x_lab.rows == 0:
        raise UsageError("labeled batch must be non-empty")
    y_lab = np.asarray(y_lab, dtype=np.float64)
    if y_lab.shape != (x_lab.rows,):
        raise UsageError("labeled batch must carry one target per row")
    if unlabeled is None and config.unlabeled_weight > 0:
        raise UsageError("unlabeled batch required when unlabeled_weight > 0")

    # Substreams are derived from the step index so that injecting
    # pseudo-labels does not shift any other stream.
    step_rng = state.rng.split(f"step:{state.step}")
    model_a, model_b = state.model_a, state.model_b

    try:
        y_a, lv_a, trace_a = forward(model_a, x_lab, rng=step_rng.split("labeled_a"))
        y_b, lv_b, trace_b = forward(model_b, x_lab, rng=step_rng.split("labeled_b"))

        reg_a, d_y_a, d_lv_a = losses.hetero_loss(y_a, lv_a, y_lab)
        reg_b, d_y_b, d_lv_b = losses.hetero_loss(y_b, lv_b, y_lab)
        labeled_reg = reg_a + reg_b

        if config.uses_consistency:
            labeled_unc, d_con_a, d_con_b = losses.consistency_loss_labeled(lv_a, lv_b)
            d_lv_a = d_lv_a + d_con_a
            d_lv_b = d_lv_b + d_con_b
        else:
            labeled_unc = 0.0

        unlabeled_reg = 0.0
        unlabeled_unc = 0.0
        grads_ulb_a = grads_ulb_b = None
        if unlabeled is not None and unlabeled.rows > 0:
            if injected_targets is not None:
                target_a, target_b = injected_targets
            elif config.uses_ensembling:
                shared = generate_pseudo_labels(
                    model_a, model_b, unlabeled, config.ensemble_draws, step_rng.split("pseudo")
                )
                target_a = target_b = shared
            else:
                target_a, target_b = _cross_targets(
                    model_a, model_b, unlabeled, step_rng.split("pseudo")
                )

            yu_a, lvu_a, trace_ua = forward(model_a, unlabeled, rng=step_rng.split("unlabeled_a"))
            yu_b, lvu_b, trace_ub = forward(model_b, unlabeled, rng=step_rng.split("unlabeled_b"))

            # Targets are constants: the log-variance gradient of the hetero
            # kernel is discarded, only d w.r.t. the live prediction survives.
            ureg_a, d_yu_a, _ = losses.hetero_loss(yu_a, target_a.log_var, target_a.y)
            ureg_b, d_yu_b, _ = losses.hetero_loss(yu_b, target_b.log_var, target_b.y)
            unlabeled_reg = ureg_a + ureg_b

            d_lvu_a = np.zeros_like(lvu_a)
            d_lvu_b = np.zeros_like(lvu_b)
            if config.uses_consistency:
                ucon_a, d_ucon_a = losses.consistency_loss_unlabeled(lvu_a, target_a.log_var)
                ucon_b, d_ucon_b = losses.consistency_loss_unlabeled(lvu_b, target_b.log_var)
                unlabeled_unc = ucon_a + ucon_b
                d_lvu_a = d_ucon_a
                d_lvu_b = d_ucon_b

            w = config.unlabeled_weight
            if w > 0:
                grads_ulb_a = backward(model_a, trace_ua, w * d_yu_a, w * d_lvu_a)
                grads_ulb_b = backward(model_b, trace_ub, w * d_yu_b, w * d_lvu_b)
    except NonFiniteError as err:
        raise NonFiniteLossError(f"non-finite loss at step {state.step}: {err}", {}) from err

    components = {
        "labeled_reg": labeled_reg,
        "labeled_unc": labeled_unc,
        "unlabeled_reg": unlabeled_reg,
        "unlabeled_unc": unlabeled_unc,
    }
    if not all(math.isfinite(v) for v in components.values()):
        raise NonFiniteLossError(f"non-finite loss at step {state.step}", components)

    breakdown = LossBreakdown.build(
        labeled_reg, labeled_unc, unlabeled_reg, unlabeled_unc, config.unlabeled_weight
    )

    try:
        grads_a = _sum_grads(backward(model_a, trace_a, d_y_a, d_lv_a), grads_ulb_a)
        grads_b = _sum_grads(backward(model_b, trace_b, d_y_b, d_lv_b), grads_ulb_b)
        new_a = optimizer_update(model_a.params, grads_a, state.opt_a, config)
        new_b = optimizer_update(model_b.params, grads_b, state.opt_b, config)
    except NonFiniteError as err:
        raise NonFiniteLossError(
            f"non-finite gradient or update at step {state.step}: {err}", components
        ) from err
    model_a.params = new_a
    model_b.params = new_b

    state.step += 1
    state.history.append(breakdown)
    return breakdown


@dataclass
class ExperimentResult:
    seed: int
    variant: str
    test_mae: float
    test_r2: float
    best_epoch: int
    val_mae: list[float]
    history: list[LossBreakdown]
    bin_report: BinReport | None
    uncertainty_error_spearman: float | None
    model_a: MlpModel
    model_b: MlpModel
    normalizer: Normalizer


class _BatchCycler:
    """Endless stream of index batches, reshuffled whenever it runs out."""

    def __init__(self, n: int, batch: int, rng: Rng):
        self.n = n
        self.batch = batch
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next_batch(self) -> np.ndarray:
        if self.pos >= self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        batch = self.order[self.pos : self.pos + self.batch]
        self.pos += self.batch
        return batch


def run_experiment(config: TrainConfig, split: SemiSupervisedSplit) -> ExperimentResult:
    """Train on a split, select the best epoch by validation MAE, score the test set.

    Features and labeled targets are standardized with labeled-set statistics;
    all reported metrics are in original target units. Validation before the
    first epoch is included, so epochs=0 reports untrained-model metrics. The
    experiment fails with the loss history attached if two consecutive steps
    produce non-finite losses.
    """
    if split.labeled.targets is None:
        raise UsageError("labeled partition must carry targets")
    has_unlabeled = split.unlabeled.n > 0
    if config.unlabeled_weight > 0 and not has_unlabeled:
        raise UsageError("unlabeled_weight > 0 requires a non-empty unlabeled set")

    normalizer = Normalizer(split.labeled)
    x_lab = normalizer.transform_features(split.labeled.features)
    y_lab = normalizer.transform_targets(split.labeled.targets)
    x_ulb = normalizer.transform_features(split.unlabeled.features) if has_unlabeled else None
    x_val = normalizer.transform_features(split.validation.features)
    x_test = normalizer.transform_features(split.test.features)

    root = Rng(config.seed)
    state = init_train_state(config, split.labeled.input_dim)

    def validation_mae(epoch: int) -> float:
        y_pred, _ = predict(
            state.model_a, state.model_b, x_val, config.ensemble_draws, root.split(f"val:{epoch}")
        )
        return mae(normalizer.inverse_targets(y_pred), split.validation.targets)

    n_lab = split.labeled.n
    steps_per_epoch = max(1, math.ceil(n_lab / config.batch_labeled))
    val_curve = [validation_mae(0)]
    best_mae, best_epoch = val_curve[0], 0
    best_params = (dict(state.model_a.params), dict(state.model_b.params))

    unlabeled_cycler = (
        _BatchCycler(split.unlabeled.n, config.batch_unlabeled, root.split("unlabeled_order"))
        if has_unlabeled
        else None
    )
    consecutive_bad = 0
    for epoch in range(1, config.epochs + 1):
        order = root.split(f"batches:{epoch}").permutation(n_lab)
        for s in range(steps_per_epoch):
            idx = order[s * config.batch_labeled : (s + 1) * config.batch_labeled]
            batch = (Matrix(x_lab.data[idx]), y_lab[idx])
            ulb_batch = None
            if unlabeled_cycler is not None:
                ulb_batch = Matrix(x_ulb.data[unlabeled_cycler.next_batch()])
            try:
                train_step(state, batch, ulb_batch, config)
            except NonFiniteLossError as err:
                consecutive_bad += 1
                if consecutive_bad >= 2:
                    raise DivergenceError(
                        f"training diverged at step {state.step}: {err}", state.history
                    ) from err
            else:
                consecutive_bad = 0
        state.epoch = epoch
        epoch_mae = validation_mae(epoch)
        val_curve.append(epoch_mae)
        if epoch_mae < best_mae:
            best_mae, best_epoch = epoch_mae, epoch
            best_params = (dict(state.model_a.params), dict(state.model_b.params))

    # Pseudo-label quality is a property of the models as trained, so the
    # uncertainty report is captured from the final-epoch weights, before the
    # best-validation restore that test metrics use.
    bin_report = None
    spearman = None
    if has_unlabeled and split.oracle_unlabeled_targets is not None:
        y_pl, lv_pl = predict(
            state.model_a, state.model_b, x_ulb, config.ensemble_draws, root.split("bin_report")
        )
        y_pl_orig = normalizer.inverse_targets(y_pl)
        lv_orig = lv_pl + normalizer.log_var_offset
        truth = split.oracle_unlabeled_targets
        if split.unlabeled.n >= config.report_bins:
            bin_report = uncertainty_binning(lv_orig, y_pl_orig, truth, config.report_bins)
        sq_err = (y_pl_orig - truth) ** 2
        if split.unlabeled.n >= 3 and not np.all(lv_orig == lv_orig[0]):
            spearman = spearman_rank_corr(np.exp(lv_orig), sq_err)

    state.model_a.params, state.model_b.params = best_params

    y_test_pred, _ = predict(
        state.model_a, state.model_b, x_test, config.ensemble_draws, root.split("test")
    )
    y_test_pred = normalizer.inverse_targets(y_test_pred)
    test_mae = mae(y_test_pred, split.test.targets)
    test_r2 = r_squared(y_test_pred, split.test.targets)

    return ExperimentResult(
        seed=config.seed,
        variant=config.variant,
        test_mae=test_mae,
        test_r2=test_r2,
        best_epoch=best_epoch,
        val_mae=val_curve,
        history=state.history,
        bin_report=bin_report,
        uncertainty_error_spearman=spearman,
        model_a=state.model_a,
        model_b=state.model_b,
        normalizer=normalizer,
    )
