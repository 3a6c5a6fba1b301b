"""Training procedures for the black-box model and its linear surrogate.

The joint trainers share one loop: each step first refines the surrogate by
an Adam step on the fidelity loss with the black-box held fixed, then moves
the black-box along a method-specific combination of the predictive and
fidelity gradients.  The min-norm solver picks that combination adaptively;
the weighted baselines fix it by schedule; the ablations decouple or
distill.  Stationarity is checked once per epoch on full-batch gradients.

Metrics in a report are computed on the test split, falling back to all
rows when the dataset has no test rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import CLASSIFICATION, Dataset, TEST, TRAIN, subset
from .errors import NumericError
from .losses import (
    BCE,
    DISTILL,
    MSE,
    POINT_FIDELITY,
    loss_point_fidelity,
    loss_pred,
    upstream_derivative,
)
from .metrics import f1_score, global_fidelity, mse_metric
from .moo import (
    DEFAULT_STATIONARITY_TOL,
    combine_direction,
    is_pareto_stationary,
    solve_alpha,
)
from .nn import (
    BINARY_PROBABILITY,
    MlpModel,
    REGRESSION_SCALAR,
    adam_init,
    adam_step,
    flatten_params,
    forward_batch,
    init_mlp,
    mlp_backward,
    param_count,
    sigmoid,
    unflatten_params,
)
from .seeding import rng_for
from .surrogate import (
    LinearSurrogate,
    init_surrogate,
    predict_batch,
    surrogate_from_params,
    surrogate_grad,
    surrogate_params,
)

MOO = "MOO"
STL = "STL"
UNI = "UNI"
GS = "GS"
RND = "RND"
LINEAR = "LINEAR"
JSEP = "JSEP"
JDIST = "JDIST"
METHODS = (MOO, STL, UNI, GS, RND, LINEAR, JSEP, JDIST)

STOP_STATIONARY = "stationary"
STOP_BUDGET = "budget"

AlphaSchedule = Callable[[int, np.random.Generator], float]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by every training method.

    ``alpha`` only applies to GS.  ``inner_steps`` is the number of
    surrogate refinements per black-box step.  ``phi_max_epochs`` and
    ``phi_tol`` govern the surrogate-only fitting stage used by STL and by
    degenerate local fits.
    """

    method: str = MOO
    lr_theta: float = 1e-3
    lr_phi: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    stationarity_tol: float = DEFAULT_STATIONARITY_TOL
    hidden: tuple[int, ...] = (32, 32)
    alpha: float | None = None
    inner_steps: int = 1
    phi_max_epochs: int = 4000
    phi_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.lr_theta <= 0 or self.lr_phi <= 0:
            raise ValueError("learning rates must be positive")
        if self.max_epochs < 1 or self.batch_size < 1 or self.inner_steps < 1:
            raise ValueError("max_epochs, batch_size, inner_steps must be >= 1")
        if self.method == GS:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError("GS requires alpha in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch loss trace plus final test metrics for one run.

    ``alpha_history`` holds each epoch's mean step weight on the predictive
    gradient.  ``gf`` is None for the linear-only method, where fidelity is
    zero by construction.  ``min_dot_pred``/``min_dot_pf`` track the
    smallest step-direction dot products with the two gradients.
    """

    method: str
    seed: int
    loss_pred_history: tuple[float, ...]
    loss_pf_history: tuple[float, ...]
    alpha_history: tuple[float, ...]
    epochs_run: int
    stopped_reason: str
    task_metric: float
    gf: float | None
    gnf: float | None = None
    min_dot_pred: float | None = None
    min_dot_pf: float | None = None


def report_to_dict(report: TrainReport) -> dict:
    """JSON-ready dictionary with all report fields."""
    return {
        "method": report.method,
        "seed": report.seed,
        "loss_pred_history": list(report.loss_pred_history),
        "loss_pf_history": list(report.loss_pf_history),
        "alpha_history": list(report.alpha_history),
        "epochs_run": report.epochs_run,
        "stopped_reason": report.stopped_reason,
        "task_metric": report.task_metric,
        "gf": report.gf,
        "gnf": report.gnf,
        "min_dot_pred": report.min_dot_pred,
        "min_dot_pf": report.min_dot_pf,
    }


def _pred_kind(dataset: Dataset) -> str:
    return BCE if dataset.task == CLASSIFICATION else MSE


def _output_kind(dataset: Dataset) -> str:
    return BINARY_PROBABILITY if dataset.task == CLASSIFICATION else REGRESSION_SCALAR


def _eval_rows(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    X, y = subset(dataset, TEST)
    if X.shape[0] == 0:
        return dataset.features, dataset.targets
    return X, y


def _grad_pred(model: MlpModel, X: np.ndarray, y: np.ndarray, kind: str) -> np.ndarray:
    out = forward_batch(model, X)
    return mlp_backward(model, X, upstream_derivative(out, y, kind))


def _grad_pf_theta(model: MlpModel, g: LinearSurrogate, X: np.ndarray) -> np.ndarray:
    f_out = forward_batch(model, X)
    g_out = predict_batch(g, X)
    return mlp_backward(model, X, upstream_derivative(f_out, g_out, POINT_FIDELITY))


def _grad_pf_phi(model: MlpModel, g: LinearSurrogate, X: np.ndarray) -> np.ndarray:
    # The black-box output is the fitting target here, never differentiated.
    residuals = forward_batch(model, X) - predict_batch(g, X)
    return surrogate_grad(g, X, residuals)


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def task_metric(outputs: np.ndarray, targets: np.ndarray, task: str) -> float:
    """Test-split score: F1 of thresholded outputs or plain MSE."""
    if task == CLASSIFICATION:
        return f1_score((np.asarray(outputs) >= 0.5).astype(np.float64), targets)
    return mse_metric(outputs, targets)


def _final_metrics(
    model: MlpModel, g: LinearSurrogate, dataset: Dataset
) -> tuple[float, float]:
    X, y = _eval_rows(dataset)
    metric = task_metric(forward_batch(model, X), y, dataset.task)
    return metric, global_fidelity(model, g, X)


DirectionFn = Callable[
    [MlpModel, LinearSurrogate, np.ndarray, np.ndarray, np.ndarray, np.ndarray, int,
     np.random.Generator],
    tuple[np.ndarray, float],
]
EpochPairFn = Callable[
    [MlpModel, LinearSurrogate, np.ndarray, np.ndarray],
    tuple[np.ndarray, np.ndarray],
]


def _joint_loop(
    dataset: Dataset,
    config: TrainConfig,
    method_tag: str,
    direction: DirectionFn,
    epoch_pair: EpochPairFn | None = None,
    init_model: MlpModel | None = None,
    update_phi: bool = True,
    stop_on_stationary: bool = True,
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Shared epoch/step loop for all joint training methods.

    Per step: refine the surrogate (unless disabled), compute predictive and
    fidelity gradients on the batch, ask ``direction`` for the update, take
    one Adam step.  Per epoch: record full-batch losses and stop if the
    full-batch gradient pair from ``epoch_pair`` is Pareto stationary.
    """
    X, y = subset(dataset, TRAIN)
    n = X.shape[0]
    kind = _pred_kind(dataset)
    if init_model is None:
        model = init_mlp(
            dataset.n_features, config.hidden, _output_kind(dataset),
            rng_for(config.seed, "init-theta"),
        )
    else:
        model = init_model
    g = init_surrogate(dataset.n_features)
    theta_state = adam_init(param_count(model))
    phi_state = adam_init(dataset.n_features + 1)
    rng_batch = rng_for(config.seed, "batch")
    rng_alpha = rng_for(config.seed, "alpha")
    if epoch_pair is None:
        def epoch_pair(m, s, Xf, yf):
            return _grad_pred(m, Xf, yf, kind), _grad_pf_theta(m, s, Xf)

    pred_hist: list[float] = []
    pf_hist: list[float] = []
    alpha_hist: list[float] = []
    min_dot_pred = np.inf
    min_dot_pf = np.inf
    stopped = STOP_BUDGET
    step = 0
    epochs_run = 0

    for epoch in range(config.max_epochs):
        step_alphas: list[float] = []
        for batch in _batches(rng_batch, n, config.batch_size):
            Xb, yb = X[batch], y[batch]
            if update_phi:
                for _ in range(config.inner_steps):
                    phi_grad = _grad_pf_phi(model, g, Xb)
                    new_phi, phi_state = adam_step(
                        surrogate_params(g), phi_grad, phi_state, config.lr_phi
                    )
                    g = surrogate_from_params(new_phi)
            g_pred = _grad_pred(model, Xb, yb, kind)
            g_pf = _grad_pf_theta(model, g, Xb)
            d, alpha = direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha)
            min_dot_pred = min(min_dot_pred, float(d @ g_pred))
            min_dot_pf = min(min_dot_pf, float(d @ g_pf))
            new_theta, theta_state = adam_step(
                flatten_params(model), d, theta_state, config.lr_theta
            )
            model = unflatten_params(model, new_theta)
            step_alphas.append(alpha)
            step += 1

        out = forward_batch(model, X)
        g_out = predict_batch(g, X)
        lp = loss_pred(out, y, kind)
        lpf = loss_point_fidelity(out, g_out)
        if not (np.isfinite(lp) and np.isfinite(lpf)):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        pred_hist.append(lp)
        pf_hist.append(lpf)
        alpha_hist.append(float(np.mean(step_alphas)))
        epochs_run = epoch + 1
        if stop_on_stationary:
            ga, gb = epoch_pair(model, g, X, y)
            if is_pareto_stationary(ga, gb, config.stationarity_tol):
                stopped = STOP_STATIONARY
                break

    metric, gf = _final_metrics(model, g, dataset)
    report = TrainReport(
        method=method_tag,
        seed=config.seed,
        loss_pred_history=tuple(pred_hist),
        loss_pf_history=tuple(pf_hist),
        alpha_history=tuple(alpha_hist),
        epochs_run=epochs_run,
        stopped_reason=stopped,
        task_metric=metric,
        gf=gf,
        min_dot_pred=float(min_dot_pred),
        min_dot_pf=float(min_dot_pf),
    )
    return model, g, report


def train_joint_moo(
    dataset: Dataset,
    config: TrainConfig,
    init_model: MlpModel | None = None,
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Joint training with the per-step min-norm gradient combination.

    Each step solves for the weight making the combined direction shortest,
    which guarantees it is a common descent direction for both the
    predictive and fidelity objectives until Pareto stationarity.
    """

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        alpha = solve_alpha(g_pred, g_pf).alpha
        return combine_direction(alpha, g_pred, g_pf), alpha

    return _joint_loop(dataset, config, MOO, direction, init_model=init_model)


def constant_alpha(alpha: float) -> AlphaSchedule:
    """Schedule returning the same weight at every step."""

    def schedule(step: int, rng: np.random.Generator) -> float:
        return alpha

    return schedule


def random_alpha(step: int, rng: np.random.Generator) -> float:
    """Fresh uniform weight on each step."""
    return float(rng.uniform(0.0, 1.0))


def train_weighted(
    dataset: Dataset,
    config: TrainConfig,
    alpha_schedule: AlphaSchedule | None = None,
    init_model: MlpModel | None = None,
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Scalarized joint training with a fixed or sampled weight schedule.

    Without an explicit schedule the method tag picks one: UNI uses the
    constant 0.5, GS the configured alpha, RND a fresh uniform draw per
    step.  The loop is otherwise identical to the min-norm trainer.
    """
    if alpha_schedule is None:
        if config.method == UNI:
            alpha_schedule = constant_alpha(0.5)
        elif config.method == GS:
            alpha_schedule = constant_alpha(config.alpha)
        elif config.method == RND:
            alpha_schedule = random_alpha
        else:
            raise ValueError(f"no default schedule for method {config.method!r}")

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        alpha = alpha_schedule(step, rng_alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"schedule produced alpha {alpha} outside [0, 1]")
        return combine_direction(alpha, g_pred, g_pf), alpha

    return _joint_loop(dataset, config, config.method, direction, init_model=init_model)


def train_jsep(
    dataset: Dataset,
    config: TrainConfig,
    init_model: MlpModel | None = None,
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Decoupled ablation: each model follows only its own loss.

    The black-box sees only the predictive gradient, so its trajectory
    matches predictive-only training step for step; the surrogate chases it
    with the usual fidelity updates.
    """

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        return g_pred, 1.0

    return _joint_loop(dataset, config, JSEP, direction, init_model=init_model)


def _fit_phi(
    model: MlpModel,
    X: np.ndarray,
    config: TrainConfig,
    g: LinearSurrogate | None = None,
) -> tuple[LinearSurrogate, list[float], str]:
    """Full-batch Adam fit of the surrogate to a frozen model's outputs.

    Stops when the per-epoch loss decrease falls below ``phi_tol`` or after
    ``phi_max_epochs`` epochs.
    """
    if g is None:
        g = init_surrogate(X.shape[1])
    state = adam_init(X.shape[1] + 1)
    targets = forward_batch(model, X)
    history: list[float] = []
    stopped = STOP_BUDGET
    prev = float(np.mean((targets - predict_batch(g, X)) ** 2))
    for _ in range(config.phi_max_epochs):
        grad = surrogate_grad(g, X, targets - predict_batch(g, X))
        params, state = adam_step(surrogate_params(g), grad, state, config.lr_phi)
        g = surrogate_from_params(params)
        cur = float(np.mean((targets - predict_batch(g, X)) ** 2))
        history.append(cur)
        if prev - cur < config.phi_tol:
            stopped = STOP_STATIONARY
            break
        prev = cur
    return g, history, stopped


def train_stl(
    dataset: Dataset, config: TrainConfig
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Sequential baseline: train the black-box, then fit the surrogate.

    Phase 1 runs predictive-only epochs to the full budget; phase 2 freezes
    the black-box and fits the surrogate to its outputs until the loss
    decrease drops below ``phi_tol``.  Phase-1 epochs are recorded with
    weight 1.0, phase-2 epochs with weight 0.0; ``stopped_reason`` reports
    the phase-2 outcome, with "stationary" meaning the tolerance was met.
    """

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        return g_pred, 1.0

    model, _, phase1 = _joint_loop(
        dataset, config, STL, direction,
        update_phi=False, stop_on_stationary=False,
    )
    X, y = subset(dataset, TRAIN)
    g, pf_hist, stopped = _fit_phi(model, X, config)
    final_pred = loss_pred(forward_batch(model, X), y, _pred_kind(dataset))
    metric, gf = _final_metrics(model, g, dataset)
    report = TrainReport(
        method=STL,
        seed=config.seed,
        loss_pred_history=phase1.loss_pred_history + (final_pred,) * len(pf_hist),
        loss_pf_history=phase1.loss_pf_history + tuple(pf_hist),
        alpha_history=phase1.alpha_history + (0.0,) * len(pf_hist),
        epochs_run=phase1.epochs_run + len(pf_hist),
        stopped_reason=stopped,
        task_metric=metric,
        gf=gf,
        min_dot_pred=phase1.min_dot_pred,
        min_dot_pf=phase1.min_dot_pf,
    )
    return model, g, report


def pretrain_theta(dataset: Dataset, config: TrainConfig) -> MlpModel:
    """Predictive-only training of the black-box (no surrogate fitting)."""

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        return g_pred, 1.0

    model, _, _ = _joint_loop(
        dataset, config, STL, direction,
        update_phi=False, stop_on_stationary=False,
    )
    return model


def train_jdist(
    dataset: Dataset,
    config: TrainConfig,
    teacher: MlpModel,
    dist_weight: float = 1.0,
) -> tuple[MlpModel, LinearSurrogate, TrainReport]:
    """Distillation ablation: a student copy of a trained teacher.

    The student minimizes 0.5*(L_pred + dist_weight*L_dist) + 0.5*L_PF by
    plain scalarized steps, with the squared-difference distillation term
    pulling it toward the teacher's outputs.  With dist_weight 0 the update
    equals the uniform-weight baseline started from the teacher.
    """
    if dist_weight < 0:
        raise ValueError("dist_weight must be nonnegative")
    kind = _pred_kind(dataset)

    def dist_grad(model: MlpModel, Xb: np.ndarray) -> np.ndarray:
        s_out = forward_batch(model, Xb)
        t_out = forward_batch(teacher, Xb)
        return mlp_backward(model, Xb, upstream_derivative(s_out, t_out, DISTILL))

    def direction(model, g, Xb, yb, g_pred, g_pf, step, rng_alpha):
        d = 0.5 * (g_pred + dist_weight * dist_grad(model, Xb)) + 0.5 * g_pf
        return d, 0.5

    def epoch_pair(model, g, Xf, yf):
        ga = _grad_pred(model, Xf, yf, kind) + dist_weight * dist_grad(model, Xf)
        return ga, _grad_pf_theta(model, g, Xf)

    return _joint_loop(
        dataset, config, JDIST, direction,
        epoch_pair=epoch_pair, init_model=teacher,
    )


def train_linear(dataset: Dataset, config: TrainConfig) -> tuple[LinearSurrogate, TrainReport]:
    """Linear model used directly as the predictor.

    Classification wraps the linear score in a sigmoid and trains with
    cross-entropy; regression trains the raw score with squared error.
    Fidelity is zero by construction, so ``gf`` is None and the fidelity
    history records zeros.  Runs to the full epoch budget.
    """
    X, y = subset(dataset, TRAIN)
    n, d = X.shape
    g = init_surrogate(d)
    state = adam_init(d + 1)
    rng_batch = rng_for(config.seed, "batch")
    classification = dataset.task == CLASSIFICATION
    pred_hist: list[float] = []

    for epoch in range(config.max_epochs):
        for batch in _batches(rng_batch, n, config.batch_size):
            Xb, yb = X[batch], y[batch]
            scores = predict_batch(g, Xb)
            if classification:
                u = (sigmoid(scores) - yb) / Xb.shape[0]
            else:
                u = 2.0 * (scores - yb) / Xb.shape[0]
            grad = np.concatenate([Xb.T @ u, [float(np.sum(u))]])
            params, state = adam_step(surrogate_params(g), grad, state, config.lr_phi)
            g = surrogate_from_params(params)
        scores = predict_batch(g, X)
        outputs = sigmoid(scores) if classification else scores
        lp = loss_pred(outputs, y, _pred_kind(dataset))
        if not np.isfinite(lp):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        pred_hist.append(lp)

    X_eval, y_eval = _eval_rows(dataset)
    scores = predict_batch(g, X_eval)
    outputs = sigmoid(scores) if classification else scores
    report = TrainReport(
        method=LINEAR,
        seed=config.seed,
        loss_pred_history=tuple(pred_hist),
        loss_pf_history=(0.0,) * len(pred_hist),
        alpha_history=(1.0,) * len(pred_hist),
        epochs_run=len(pred_hist),
        stopped_reason=STOP_BUDGET,
        task_metric=task_metric(outputs, y_eval, dataset.task),
        gf=None,
    )
    return g, report


def fit_local_surrogate(
    f: MlpModel,
    x: np.ndarray,
    neighborhood: np.ndarray,
    config: TrainConfig,
) -> tuple[LinearSurrogate, bool]:
    """Least-squares linear fit to f's outputs over a perturbation set.

    Full-rank designs are solved exactly; rank-deficient ones fall back to
    a deterministic Adam fit from the zero surrogate and are flagged as
    degenerate in the returned boolean.
    """
    nb = np.asarray(neighborhood, dtype=np.float64)
    if nb.ndim != 2 or nb.shape[1] != np.asarray(x).shape[0]:
        raise ValueError("neighborhood must be rows of perturbed copies of x")
    targets = forward_batch(f, nb)
    design = np.column_stack([nb, np.ones(nb.shape[0])])
    if np.linalg.matrix_rank(design) == design.shape[1]:
        solution = np.linalg.lstsq(design, targets, rcond=None)[0]
        return LinearSurrogate(phi=solution[:-1], bias=float(solution[-1])), False
    g, _, _ = _fit_phi(f, nb, config)
    return g, True


def local_surrogate_provider(f: MlpModel, config: TrainConfig):
    """Per-instance provider fitting a fresh local surrogate per neighborhood."""

    def provide(x: np.ndarray, neighborhood: np.ndarray) -> LinearSurrogate:
        g, _ = fit_local_surrogate(f, x, neighborhood, config)
        return g

    return provide


def run_method(
    dataset: Dataset, config: TrainConfig
) -> tuple[MlpModel | None, LinearSurrogate, TrainReport]:
    """Dispatch one training run by the config's method tag.

    The distillation ablation first trains its teacher with a
    predictive-only run at the same seed.  The linear method returns None
    for the black-box slot.
    """
    if config.method == MOO:
        return train_joint_moo(dataset, config)
    if config.method == STL:
        return train_stl(dataset, config)
    if config.method in (UNI, GS, RND):
        return train_weighted(dataset, config)
    if config.method == JSEP:
        return train_jsep(dataset, config)
    if config.method == JDIST:
        teacher = pretrain_theta(dataset, config)
        return train_jdist(dataset, config, teacher)
    if config.method == LINEAR:
        g, report = train_linear(dataset, config)
        return None, g, report
    raise ValueError(f"unknown method {config.method!r}")
