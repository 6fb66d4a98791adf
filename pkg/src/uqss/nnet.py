"""Minimal fully-connected network engine: seeded init, batch forward, Adam/MSE
training, analytic input gradients, and an exact-round-trip text model format."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Normalizer

__all__ = [
    "NnetError",
    "TrainingDivergedError",
    "ModelFormatError",
    "NetSpec",
    "TrainConfig",
    "ModelBundle",
    "ROLES",
    "MODEL_HEADER",
    "init_network",
    "forward",
    "predict",
    "fit_mse",
    "train_mse",
    "train_custom",
    "input_gradient",
    "save_model",
    "load_model",
]

ACTIVATIONS = ("tanh", "relu")
ROLES = ("point", "abs_error", "density", "bound_correction", "ub", "interval")
MODEL_HEADER = "UQSS-MODEL v1"


class NnetError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NetSpec:
    """Architecture of a fully-connected net: hidden activation, identity output."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1:
            raise NnetError("dimensions must be positive")
        if len(self.hidden_layers) < 1 or any(h < 1 for h in self.hidden_layers):
            raise NnetError("at least one positive hidden layer is required")
        if self.activation not in ACTIVATIONS:
            raise NnetError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)


@dataclass
class TrainConfig:
    """Adam/MSE training parameters.  batch_size "full" uses one batch per epoch."""

    epochs: int
    learning_rate: float
    batch_size: int | str = "full"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise NnetError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise NnetError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise NnetError("adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise NnetError("adam_epsilon must be positive")
        if self.batch_size != "full" and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise NnetError('batch_size must be a positive integer or "full"')

    def to_meta(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
        }


@dataclass
class ModelBundle:
    """A network's parameters plus the context needed to reuse it: its role in
    the pipeline, the normalizer its training data used, and training metadata."""

    spec: NetSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    role: str = "point"
    normalizer: Normalizer | None = None
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise NnetError(f"role must be one of {ROLES}, got {self.role!r}")
        dims = self.spec.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise NnetError("layer count does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise NnetError(f"layer {i} parameter shapes do not match spec")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NnetError(f"layer {i} has non-finite parameters")

    def clone(self) -> "ModelBundle":
        return ModelBundle(
            spec=self.spec,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            role=self.role,
            normalizer=self.normalizer,
            training_meta=copy.deepcopy(self.training_meta),
        )


def init_network(
    spec: NetSpec, role: str = "point", normalizer: Normalizer | None = None
) -> ModelBundle:
    """Seeded init: weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.layer_dims
    weights, biases = [], []
    for i in range(len(dims) - 1):
        bound = np.sqrt(6.0 / dims[i])
        weights.append(rng.uniform(-bound, bound, (dims[i], dims[i + 1])))
        biases.append(np.zeros(dims[i + 1]))
    return ModelBundle(spec=spec, weights=weights, biases=biases, role=role, normalizer=normalizer)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _check_input(m: ModelBundle, x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != m.spec.input_dim:
        raise NnetError(f"expected input of width {m.spec.input_dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NnetError("non-finite input")
    return arr, single


def _forward_cache(m: ModelBundle, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer, inputs first, raw output last."""
    acts = [x]
    a = x
    last = len(m.weights) - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ w + b
        a = z if i == last else _act(z, m.spec.activation)
        acts.append(a)
    return acts


def forward(m: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Evaluate the raw network on a vector or a batch of rows."""
    arr, single = _check_input(m, x)
    out = _forward_cache(m, arr)[-1]
    return out[0] if single else out


def predict(m: ModelBundle, x: np.ndarray) -> np.ndarray:
    """forward() plus the role clamp: absolute-error and density outputs are >= 0."""
    out = forward(m, x)
    if m.role in ("abs_error", "density"):
        out = np.maximum(out, 0.0)
    return out


def _act_grad(a: np.ndarray, kind: str) -> np.ndarray:
    # gradient written in terms of the activation output
    return 1.0 - a * a if kind == "tanh" else (a > 0.0).astype(np.float64)


def _backward(
    m: ModelBundle, acts: list[np.ndarray], d_out: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Parameter gradients from the loss gradient at the output layer."""
    g = d_out
    gws: list = [None] * len(m.weights)
    gbs: list = [None] * len(m.biases)
    for i in range(len(m.weights) - 1, -1, -1):
        gws[i] = acts[i].T @ g
        gbs[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ m.weights[i].T) * _act_grad(acts[i], m.spec.activation)
    return gws, gbs


class _Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.cfg = cfg

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.adam_beta1**self.t
        b2t = 1.0 - c.adam_beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.adam_beta1
            m += (1.0 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1.0 - c.adam_beta2) * g * g
            p -= c.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + c.adam_epsilon)


def train_custom(
    m: ModelBundle,
    x: np.ndarray,
    loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    cfg: TrainConfig,
    trace_hook: Callable[[int, np.ndarray], None] | None = None,
) -> ModelBundle:
    """Full-batch training against a caller-supplied loss.

    loss_and_grad maps the (N, output_dim) network output to (loss, dloss/doutput).
    trace_hook, when given, sees (epoch, outputs) before each update.  Returns a
    new bundle; the input bundle is untouched.
    """
    if cfg.batch_size != "full":
        raise NnetError("train_custom supports full-batch training only")
    x, _ = _check_input(m, x)
    out = m.clone()
    params = out.weights + out.biases
    adam = _Adam(params, cfg)
    trace = []
    for epoch in range(cfg.epochs):
        acts = _forward_cache(out, x)
        loss, d_out = loss_and_grad(acts[-1])
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (learning_rate={cfg.learning_rate})"
            )
        if trace_hook is not None:
            trace_hook(epoch, acts[-1])
        trace.append(float(loss))
        gws, gbs = _backward(out, acts, d_out)
        adam.step(params, gws + gbs)
    final_loss = float(loss_and_grad(_forward_cache(out, x)[-1])[0]) if cfg.epochs else None
    out.training_meta = dict(out.training_meta)
    out.training_meta.update(
        {
            "config": cfg.to_meta(),
            "loss_trace": trace,
            "initial_loss": trace[0] if trace else None,
            "final_loss": final_loss,
        }
    )
    return out


def fit_mse(m: ModelBundle, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> ModelBundle:
    """Mean-squared-error fit of raw array targets (column matrix or vector)."""
    x, _ = _check_input(m, x)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (x.shape[0], m.spec.output_dim):
        raise NnetError(f"targets of shape {y.shape} do not match ({x.shape[0]}, {m.spec.output_dim})")
    if cfg.batch_size == "full":

        def loss_and_grad(out):
            r = out - y
            return float(np.mean(r * r)), 2.0 * r / r.size

        return train_custom(m, x, loss_and_grad, cfg)
    return _fit_mse_minibatch(m, x, y, cfg)


def _fit_mse_minibatch(m, x, y, cfg):
    n = x.shape[0]
    out = m.clone()
    params = out.weights + out.biases
    adam = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, int(cfg.batch_size)):
            rows = order[start : start + int(cfg.batch_size)]
            acts = _forward_cache(out, x[rows])
            r = acts[-1] - y[rows]
            loss = float(np.mean(r * r))
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (learning_rate={cfg.learning_rate})"
                )
            batch_losses.append(loss)
            gws, gbs = _backward(out, acts, 2.0 * r / r.size)
            adam.step(params, gws + gbs)
        trace.append(float(np.mean(batch_losses)))
    r = _forward_cache(out, x)[-1] - y
    out.training_meta = dict(out.training_meta)
    out.training_meta.update(
        {
            "config": cfg.to_meta(),
            "loss_trace": trace,
            "initial_loss": trace[0] if trace else None,
            "final_loss": float(np.mean(r * r)) if cfg.epochs else None,
        }
    )
    return out


def train_mse(m: ModelBundle, data, cfg: TrainConfig) -> ModelBundle:
    """MSE-fit a scalar-output net to a Dataset's targets."""
    if m.spec.output_dim != 1:
        raise NnetError("train_mse expects a scalar-output model")
    if data.n_inputs != m.spec.input_dim:
        raise NnetError(
            f"dataset has {data.n_inputs} inputs but the model expects {m.spec.input_dim}"
        )
    return fit_mse(m, data.features, data.targets, cfg)


def input_gradient(m: ModelBundle, x: np.ndarray) -> np.ndarray:
    """d(output)/d(input) of a scalar-output net, for a vector or batch of rows."""
    if m.spec.output_dim != 1:
        raise NnetError("input_gradient requires a scalar-output model")
    arr, single = _check_input(m, x)
    acts = _forward_cache(m, arr)
    g = np.ones((arr.shape[0], 1))
    for i in range(len(m.weights) - 1, -1, -1):
        g = g @ m.weights[i].T
        if i > 0:
            g = g * _act_grad(acts[i], m.spec.activation)
    return g[0] if single else g


def _normalizer_doc(norm: Normalizer | None):
    if norm is None:
        return None
    return {
        "input_min": norm.input_min.tolist(),
        "input_max": norm.input_max.tolist(),
        "target_min": norm.target_min,
        "target_max": norm.target_max,
    }


def save_model(m: ModelBundle, path) -> None:
    """Write the documented text format: a version header line followed by JSON.

    Parameters serialize as shortest-round-trip decimal floats, so a load on
    any IEEE-754 platform reproduces them bit for bit.
    """
    doc = {
        "role": m.role,
        "spec": {
            "input_dim": m.spec.input_dim,
            "hidden_layers": list(m.spec.hidden_layers),
            "output_dim": m.spec.output_dim,
            "activation": m.spec.activation,
            "seed": m.spec.seed,
        },
        "normalizer": _normalizer_doc(m.normalizer),
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "training_meta": m.training_meta,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MODEL_HEADER + "\n")
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    """Parse a model file; any malformed input raises without a partial model."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != MODEL_HEADER:
            if header.startswith("UQSS-MODEL"):
                raise ModelFormatError(f"unsupported model version {header!r}")
            raise ModelFormatError(f"not a model file: bad header {header!r}")
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"corrupt model file {path!s}: {exc}") from exc
    try:
        spec = NetSpec(
            input_dim=doc["spec"]["input_dim"],
            hidden_layers=tuple(doc["spec"]["hidden_layers"]),
            output_dim=doc["spec"]["output_dim"],
            activation=doc["spec"]["activation"],
            seed=doc["spec"]["seed"],
        )
        norm_doc = doc["normalizer"]
        norm = None
        if norm_doc is not None:
            norm = Normalizer(
                input_min=np.array(norm_doc["input_min"], dtype=np.float64),
                input_max=np.array(norm_doc["input_max"], dtype=np.float64),
                target_min=float(norm_doc["target_min"]),
                target_max=float(norm_doc["target_max"]),
            )
        return ModelBundle(
            spec=spec,
            weights=[np.array(w, dtype=np.float64) for w in doc["weights"]],
            biases=[np.array(b, dtype=np.float64) for b in doc["biases"]],
            role=doc["role"],
            normalizer=norm,
            training_meta=doc.get("training_meta", {}),
        )
    except (KeyError, TypeError, NnetError) as exc:
        raise ModelFormatError(f"corrupt model file {path!s}: {exc}") from exc
