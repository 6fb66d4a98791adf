"""Direct interval construction: a two-output net pretrained on rough targets
around the truth, then tuned against a smoothed interval cost (coverage/width,
mid-interval, or coverage-width-failure-distance) with a bound-swap penalty.

The coverage indicator has zero gradient almost everywhere, so training
replaces it with a product of logistics of configurable sharpness; reported
metrics always come from the exact definitions in the metrics module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, SplitSpec, normalize, split
from .metrics import CostParams, IntervalMetrics, IntervalSet, interval_metrics
from .nnet import (
    ModelBundle,
    NetSpec,
    TrainConfig,
    fit_mse,
    forward,
    init_network,
    train_custom,
)

__all__ = [
    "BaselineError",
    "COST_KINDS",
    "BaselineConfig",
    "IntervalNet",
    "rough_targets",
    "make_interval_net",
    "pretrain",
    "smooth_picp",
    "smooth_cost",
    "finetune",
    "interval_predictions",
    "evaluate_baseline",
    "run_baseline_trials",
]

COST_KINDS = ("lube_cwc", "mid_interval", "cwfdc")

# output channel order of the interval net, fixed across the module
UPPER, LOWER = 0, 1


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class BaselineConfig:
    """Everything one baseline training needs: cost choice, schedules, net shape."""

    net: NetSpec
    cost_kind: str = "cwfdc"
    cost_params: CostParams = field(default_factory=CostParams)
    pretrain_epochs: int = 1000
    finetune_epochs: int = 5000
    pretrain_lr: float = 5e-2
    finetune_lr: float = 5e-5
    delta_t_fraction: float = 0.25
    swap_penalty_weight: float = 10.0
    sigmoid_sharpness: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.cost_kind not in COST_KINDS:
            raise BaselineError(f"cost_kind must be one of {COST_KINDS}, got {self.cost_kind!r}")
        if self.pretrain_epochs < 1 or self.finetune_epochs < 1:
            raise BaselineError("epoch counts must be positive")
        if self.pretrain_lr <= 0 or self.finetune_lr <= 0:
            raise BaselineError("learning rates must be positive")
        if not 0.0 < self.delta_t_fraction <= 0.5:
            raise BaselineError("delta_t_fraction must be in (0, 0.5]")
        if self.swap_penalty_weight <= 0 or self.sigmoid_sharpness <= 0:
            raise BaselineError("swap_penalty_weight and sigmoid_sharpness must be positive")
        if self.net.output_dim != 2:
            raise BaselineError("the interval net needs output_dim=2 (upper, lower)")


@dataclass
class IntervalNet:
    """Two-output interval net plus its training traces."""

    net: ModelBundle
    cost_trace: list = field(default_factory=list)
    width_trace: list = field(default_factory=list)
    swap_trace: list = field(default_factory=list)
    pretrain_trace: list = field(default_factory=list)


def rough_targets(
    t: np.ndarray, target_range: float, delta_t_fraction: float = 0.25
) -> tuple[np.ndarray, np.ndarray]:
    """Initial training targets: the truth shifted up and down by a margin."""
    if target_range <= 0:
        raise BaselineError("target_range must be positive")
    t = np.asarray(t, dtype=np.float64)
    dt = delta_t_fraction * target_range
    return t + dt, t - dt


def make_interval_net(cfg: BaselineConfig) -> IntervalNet:
    spec = replace(cfg.net, seed=cfg.seed)
    return IntervalNet(net=init_network(spec, role="interval"))


def pretrain(inet: IntervalNet, train: Dataset, cfg: BaselineConfig) -> IntervalNet:
    """MSE-fit the two outputs to the rough targets; converges the net to a
    sane interval shape before cost-based tuning."""
    upper, lower = rough_targets(train.targets, train.target_range, cfg.delta_t_fraction)
    y = np.column_stack([upper, lower])
    tcfg = TrainConfig(epochs=cfg.pretrain_epochs, learning_rate=cfg.pretrain_lr, seed=cfg.seed)
    net = fit_mse(inet.net, train.features, y, tcfg)
    return IntervalNet(net=net, pretrain_trace=list(net.training_meta.get("loss_trace", [])))


def smooth_picp(
    lower: np.ndarray, upper: np.ndarray, targets: np.ndarray, sharpness: float
) -> tuple[float, np.ndarray]:
    """Soft coverage: per-sample product of logistics of the distances to the
    two bounds; approaches the exact indicator as sharpness grows."""

    def sigm(z):
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))

    a = sigm(sharpness * (upper - targets))
    b = sigm(sharpness * (targets - lower))
    c = a * b
    return float(np.mean(c)), c


def _cost_and_grad(
    outputs: np.ndarray,
    targets: np.ndarray,
    nominal: float,
    target_range: float,
    cfg: BaselineConfig,
) -> tuple[float, np.ndarray]:
    """Smoothed cost and its gradient with respect to the net outputs."""
    p = cfg.cost_params
    s = cfg.sigmoid_sharpness
    u = outputs[:, UPPER]
    lo = outputs[:, LOWER]
    t = targets
    n = t.shape[0]
    r = target_range

    def sigm(z):
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))

    a = sigm(s * (u - t))
    b = sigm(s * (t - lo))
    c = a * b
    picp_s = float(np.mean(c))
    dpicp_du = s * a * (1.0 - a) * b / n
    dpicp_dl = -s * a * b * (1.0 - b) / n

    pinaw = float(np.mean(u - lo) / r)
    dpinaw_du = np.full(n, 1.0 / (r * n))
    dpinaw_dl = np.full(n, -1.0 / (r * n))

    # swap penalty on raw outputs
    gap = lo - u
    swap_mask = gap > 0
    swap_pen = cfg.swap_penalty_weight * float(np.mean(np.maximum(gap, 0.0)))
    dswap_du = np.where(swap_mask, -cfg.swap_penalty_weight / n, 0.0)
    dswap_dl = np.where(swap_mask, cfg.swap_penalty_weight / n, 0.0)

    du = np.zeros(n)
    dl = np.zeros(n)
    if cfg.cost_kind == "lube_cwc":
        e = math.exp(p.eta * (nominal - picp_s))
        gamma = 1.0 if picp_s < nominal else 0.0
        cost = pinaw * (1.0 + gamma * e)
        du += dpinaw_du * (1.0 + gamma * e) + pinaw * gamma * e * (-p.eta) * dpicp_du
        dl += dpinaw_dl * (1.0 + gamma * e) + pinaw * gamma * e * (-p.eta) * dpicp_dl
    elif cfg.cost_kind == "mid_interval":
        e_mid = t - (u + lo) / 2.0
        pen = math.exp(-p.eta * (picp_s - nominal))
        cost = p.beta1_mid * pinaw + p.beta2_mid * float(np.sum(e_mid * e_mid)) + pen
        du += p.beta1_mid * dpinaw_du - p.beta2_mid * e_mid + pen * (-p.eta) * dpicp_du
        dl += p.beta1_mid * dpinaw_dl - p.beta2_mid * e_mid + pen * (-p.eta) * dpicp_dl
    else:  # cwfdc
        # exact-indicator failure distances; the quadratic term uses smoothed PICP
        miss = (t < lo) | (t > u)
        dist_u = np.abs(t - u)
        dist_l = np.abs(lo - t)
        denom = r * float(np.sum(miss)) + p.epsilon
        pinafd = float(np.sum(np.minimum(dist_u, dist_l)[miss])) / denom
        use_u = miss & (dist_u <= dist_l)
        use_l = miss & ~use_u
        delta = p.resolved_delta(nominal)
        gapq = nominal + delta - picp_s
        cost = pinaw + p.rho * pinafd + p.beta * gapq * gapq
        du += dpinaw_du + 2.0 * p.beta * gapq * (-dpicp_du)
        dl += dpinaw_dl + 2.0 * p.beta * gapq * (-dpicp_dl)
        du[use_u] += p.rho * np.sign(u - t)[use_u] / denom
        dl[use_l] += p.rho * np.sign(lo - t)[use_l] / denom

    cost += swap_pen
    du += dswap_du
    dl += dswap_dl
    grad = np.zeros_like(outputs)
    grad[:, UPPER] = du
    grad[:, LOWER] = dl
    return float(cost), grad


def smooth_cost(
    outputs: np.ndarray,
    targets: np.ndarray,
    nominal: float,
    cfg: BaselineConfig,
    target_range: float = 1.0,
) -> float:
    """The training objective value for a batch of (upper, lower) outputs."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[1] != 2:
        raise BaselineError("outputs must be an (N, 2) array of (upper, lower)")
    if outputs.shape[0] == 0:
        raise BaselineError("empty batch")
    targets = np.asarray(targets, dtype=np.float64).ravel()
    return _cost_and_grad(outputs, targets, nominal, target_range, cfg)[0]


def finetune(inet: IntervalNet, train: Dataset, nominal: float, cfg: BaselineConfig) -> IntervalNet:
    """Gradient descent on the smoothed cost, tracing cost, mean width, and
    swap count per epoch."""
    r = train.target_range
    t = train.targets
    widths, swaps = [], []

    def hook(epoch, outputs):
        widths.append(float(np.mean(outputs[:, UPPER] - outputs[:, LOWER])))
        swaps.append(int(np.sum(outputs[:, LOWER] > outputs[:, UPPER])))

    def loss_and_grad(outputs):
        return _cost_and_grad(outputs, t, nominal, r, cfg)

    tcfg = TrainConfig(epochs=cfg.finetune_epochs, learning_rate=cfg.finetune_lr, seed=cfg.seed)
    net = train_custom(inet.net, train.features, loss_and_grad, tcfg, trace_hook=hook)
    out = IntervalNet(
        net=net,
        cost_trace=list(net.training_meta.get("loss_trace", [])),
        width_trace=widths,
        swap_trace=swaps,
        pretrain_trace=list(inet.pretrain_trace),
    )
    final = forward(net, train.features)
    n_swapped = int(np.sum(final[:, LOWER] > final[:, UPPER]))
    if n_swapped == final.shape[0]:
        raise BaselineError("finetune collapsed: every prediction is bound-swapped")
    net.training_meta["final_swap_count"] = n_swapped
    return out


def interval_predictions(inet: IntervalNet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Repaired (lower, upper) plus the number of swaps that were repaired."""
    out = forward(inet.net, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    u, lo = out[:, UPPER], out[:, LOWER]
    swapped = lo > u
    return np.where(swapped, u, lo), np.where(swapped, lo, u), int(np.sum(swapped))


def evaluate_baseline(
    inet: IntervalNet, test: Dataset, nominal: float, params: CostParams = CostParams()
) -> IntervalMetrics:
    """Exact metrics of the trained interval net on a held-out set."""
    lo, hi, _ = interval_predictions(inet, test.features)
    intervals = IntervalSet(lower=lo, upper=hi, nominal_coverage=nominal)
    return interval_metrics(test.targets, intervals, test.target_range, params)


def run_baseline_trials(
    data: Dataset,
    nominal: float,
    cfg: BaselineConfig,
    n_trials: int,
    split_spec: SplitSpec,
) -> tuple[list[IntervalMetrics], list[IntervalNet], dict]:
    """Retrain the baseline n_trials times (seeds cfg.seed + trial) on one split.

    Returns per-trial held-out metrics, the trained nets, and swap statistics
    accumulated over all held-out predictions.
    """
    train_raw, test_raw = split(data, split_spec)
    train, norm = normalize(train_raw)
    test = norm.transform(test_raw)
    results, nets = [], []
    n_swapped = 0
    n_predictions = 0
    for trial in range(n_trials):
        trial_cfg = replace(cfg, seed=cfg.seed + trial)
        inet = make_interval_net(trial_cfg)
        inet = pretrain(inet, train, trial_cfg)
        inet = finetune(inet, train, nominal, trial_cfg)
        lo, hi, swaps = interval_predictions(inet, test.features)
        n_swapped += swaps
        n_predictions += len(lo)
        intervals = IntervalSet(lower=lo, upper=hi, nominal_coverage=nominal)
        results.append(interval_metrics(test.targets, intervals, test.target_range, cfg.cost_params))
        nets.append(inet)
    stats = {"n_swapped": n_swapped, "n_predictions": n_predictions}
    return results, nets, stats
