"""Minimal MLP autoencoder on numpy: forward pass, backprop, training.

The network is a mirror-symmetric stack of fully connected layers with
ReLU on every hidden layer and an identity output layer, trained with
mean squared error. The per-sample loss is

    R(x) = (1/D) * sum_i (x_i - xhat_i)^2

with D the feature dimension, which doubles as the reconstruction
score used for out-of-distribution decisions downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._ser import as_float_list, dump_json_doc, load_json_doc, require
from .errors import DimensionError, InputError, SchemaError, TrainingError

MODEL_SCHEMA = "owssd.model.v1"

DEFAULT_LAYER_DIMS = (1024, 256, 64, 256, 1024)


@dataclass(frozen=True)
class AeArchitecture:
    """Layer widths of a symmetric autoencoder.

    ``layer_dims`` must read the same forwards and backwards, have odd
    length >= 3, and its middle entry (the bottleneck) must be the
    smallest width.
    """

    layer_dims: tuple[int, ...] = DEFAULT_LAYER_DIMS

    def __post_init__(self) -> None:
        dims = tuple(self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 3 or len(dims) % 2 == 0:
            raise InputError(f"layer_dims must have odd length >= 3, got {dims!r}")
        if any(not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims):
            raise InputError(f"layer widths must be integers >= 1, got {dims!r}")
        if dims != dims[::-1]:
            raise InputError(f"layer_dims must be palindromic, got {dims!r}")
        mid = dims[len(dims) // 2]
        if mid != min(dims):
            raise InputError(
                f"bottleneck (middle width {mid}) must be the smallest layer, got {dims!r}"
            )

    @property
    def feature_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def bottleneck_dim(self) -> int:
        return self.layer_dims[len(self.layer_dims) // 2]

    @property
    def n_weight_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for autoencoder training.

    ``optimizer`` is "adam" (adaptive moments, the default) or "sgd"
    (plain mini-batch gradient descent). ``normalize`` folds a
    per-dimension affine rescaling of the inputs into the model; the
    reconstruction error stays in the raw input space either way.
    """

    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 64
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    normalize: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise InputError(f"epochs must be an integer >= 1, got {self.epochs!r}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InputError(f"learning_rate must be a positive finite number, got {self.learning_rate!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise InputError(f"batch_size must be an integer >= 1, got {self.batch_size!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise InputError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InputError("beta1 and beta2 must lie in [0, 1)")
        if self.eps_stab <= 0:
            raise InputError("eps_stab must be positive")


class MlpAutoencoder:
    """Weights and biases of one trained (or freshly initialized) network.

    ``weights[l]`` has shape (layer_dims[l+1], layer_dims[l]); forward
    uses x @ W.T + b. Instances are treated as immutable: training
    returns a new model and never touches the input.
    """

    def __init__(
        self,
        arch: AeArchitecture,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        input_mean: Optional[np.ndarray] = None,
        input_std: Optional[np.ndarray] = None,
    ):
        dims = arch.layer_dims
        if len(weights) != arch.n_weight_layers or len(biases) != arch.n_weight_layers:
            raise InputError(
                f"expected {arch.n_weight_layers} weight/bias layers, got {len(weights)}/{len(biases)}"
            )
        ws, bs = [], []
        for l, (w, b) in enumerate(zip(weights, biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            want = (dims[l + 1], dims[l])
            if w.shape != want:
                raise InputError(f"layer {l} weights must have shape {want}, got {w.shape}")
            if b.shape != (dims[l + 1],):
                raise InputError(f"layer {l} bias must have shape ({dims[l + 1]},), got {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InputError(f"layer {l} parameters must be finite")
            ws.append(w)
            bs.append(b)
        if (input_mean is None) != (input_std is None):
            raise InputError("input_mean and input_std must be given together or not at all")
        if input_mean is not None:
            input_mean = np.asarray(input_mean, dtype=np.float64)
            input_std = np.asarray(input_std, dtype=np.float64)
            if input_mean.shape != (dims[0],) or input_std.shape != (dims[0],):
                raise InputError("normalization vectors must match the feature dimension")
            if not (np.isfinite(input_mean).all() and np.isfinite(input_std).all()):
                raise InputError("normalization vectors must be finite")
            if (input_std <= 0).any():
                raise InputError("normalization std must be strictly positive")
        self.arch = arch
        self.weights = ws
        self.biases = bs
        self.input_mean = input_mean
        self.input_std = input_std

    @property
    def feature_dim(self) -> int:
        return self.arch.feature_dim

    @property
    def normalized(self) -> bool:
        return self.input_mean is not None

    def copy(self) -> "MlpAutoencoder":
        return MlpAutoencoder(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.input_mean is None else self.input_mean.copy(),
            None if self.input_std is None else self.input_std.copy(),
        )

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Activations at the bottleneck layer for one feature vector."""
        X = _as_batch(x, self.feature_dim)
        h = self._normalize(X)
        n_enc = self.arch.n_weight_layers // 2
        for l in range(n_enc):
            h = np.maximum(h @ self.weights[l].T + self.biases[l], 0.0)
        return h[0]

    def _normalize(self, X: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return X
        return (X - self.input_mean) / self.input_std

    def _denormalize(self, out: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return out
        return out * self.input_std + self.input_mean


def auto_architecture(feature_dim: int) -> AeArchitecture:
    """Five-layer widths derived from the feature dimension: D, D/4, D/16, mirrored.

    Reproduces the default stack for 1024-dimensional features and
    degrades gracefully for small toy dimensions (widths floor at 1).
    """
    if not isinstance(feature_dim, int) or isinstance(feature_dim, bool) or feature_dim < 1:
        raise InputError(f"feature_dim must be a positive integer, got {feature_dim!r}")
    a = max(feature_dim // 4, 1)
    b = max(feature_dim // 16, 1)
    return AeArchitecture((feature_dim, a, b, a, feature_dim))


def init_autoencoder(arch: AeArchitecture, seed: int) -> MlpAutoencoder:
    """Fresh model with weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    ws, bs = [], []
    for l in range(arch.n_weight_layers):
        fan_in = dims[l]
        bound = 1.0 / math.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(dims[l + 1], dims[l])))
        bs.append(np.zeros(dims[l + 1]))
    return MlpAutoencoder(arch, ws, bs)


def _as_batch(x, dim: int) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionError(f"expected feature vectors of dimension {dim}, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise InputError("feature vectors must be finite")
    return X


def _forward(model: MlpAutoencoder, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pass normalized inputs through the stack.

    Returns (activations, preactivations); activations[0] is the
    (normalized) input, activations[-1] the raw network output before
    denormalization. The final layer is identity, all others ReLU.
    """
    acts = [X]
    pre = []
    h = X
    last = model.arch.n_weight_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def reconstruct(model: MlpAutoencoder, x) -> np.ndarray:
    """The network's reconstruction of one feature vector, raw scale."""
    X = _as_batch(x, model.feature_dim)
    acts, _ = _forward(model, model._normalize(X))
    return model._denormalize(acts[-1])[0]


def reconstruction_errors(model: MlpAutoencoder, X) -> np.ndarray:
    """Per-sample mean squared reconstruction error for a batch, raw scale."""
    Xb = _as_batch(X, model.feature_dim)
    acts, _ = _forward(model, model._normalize(Xb))
    xhat = model._denormalize(acts[-1])
    return np.mean((Xb - xhat) ** 2, axis=1)


def reconstruction_error(model: MlpAutoencoder, x) -> float:
    """R(x) = (1/D) * ||x - xhat||^2 for one feature vector."""
    return float(reconstruction_errors(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def _loss_and_grads(model, Xraw, Xnorm):
    """Batch MSE loss (raw scale) and its gradients w.r.t. all parameters."""
    acts, pre = _forward(model, Xnorm)
    xhat = model._denormalize(acts[-1])
    diff = xhat - Xraw
    n, D = Xraw.shape
    loss = float(np.sum(diff * diff) / (D * n))
    g = (2.0 / (D * n)) * diff
    if model.input_std is not None:
        # d xhat / d out = std, elementwise.
        g = g * model.input_std
    n_layers = model.arch.n_weight_layers
    gws = [None] * n_layers
    gbs = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        gws[l] = g.T @ acts[l]
        gbs[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ model.weights[l]) * (pre[l - 1] > 0)
    return loss, gws, gbs


def train(model: MlpAutoencoder, data, cfg: TrainConfig) -> tuple[MlpAutoencoder, list[float]]:
    """Train a copy of ``model`` on ``data`` (n, D); the input model is untouched.

    Returns (trained model, per-epoch loss history). Each history entry
    is the sample-weighted mean of the batch losses measured before
    that batch's update, so the first entry reflects the initial model.
    A batch size larger than the dataset degenerates to full-batch
    training. Any non-finite batch loss aborts with a training error
    naming the epoch and batch.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError(f"training data must be a non-empty (n, D) array, got shape {X.shape}")
    if X.shape[1] != model.feature_dim:
        raise DimensionError(
            f"training vectors have dimension {X.shape[1]}, model expects {model.feature_dim}"
        )
    if not np.isfinite(X).all():
        raise InputError("training data must be finite")

    out = model.copy()
    if cfg.normalize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)  # constant dimensions pass through
        out.input_mean = mean
        out.input_std = std
    Xnorm_all = out._normalize(X)

    n = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    use_adam = cfg.optimizer == "adam"
    if use_adam:
        m_w = [np.zeros_like(w) for w in out.weights]
        v_w = [np.zeros_like(w) for w in out.weights]
        m_b = [np.zeros_like(b) for b in out.biases]
        v_b = [np.zeros_like(b) for b in out.biases]
        t = 0

    history: list[float] = []
    # divergence is detected by the finiteness check below, so the transient
    # numpy overflow warnings on the way there are noise
    with np.errstate(all="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n) if cfg.shuffle else np.arange(n)
            epoch_loss = 0.0
            for bi, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                loss, gws, gbs = _loss_and_grads(out, X[idx], Xnorm_all[idx])
                if not math.isfinite(loss):
                    raise TrainingError(
                        "loss diverged to a non-finite value", epoch=epoch, batch=bi
                    )
                epoch_loss += loss * len(idx)
                if use_adam:
                    t += 1
                    c1 = 1.0 - cfg.beta1**t
                    c2 = 1.0 - cfg.beta2**t
                    for l in range(out.arch.n_weight_layers):
                        for p, g, mm, vv in (
                            (out.weights[l], gws[l], m_w[l], v_w[l]),
                            (out.biases[l], gbs[l], m_b[l], v_b[l]),
                        ):
                            mm *= cfg.beta1
                            mm += (1 - cfg.beta1) * g
                            vv *= cfg.beta2
                            vv += (1 - cfg.beta2) * g * g
                            p -= cfg.learning_rate * (mm / c1) / (np.sqrt(vv / c2) + cfg.eps_stab)
                else:
                    for l in range(out.arch.n_weight_layers):
                        out.weights[l] -= cfg.learning_rate * gws[l]
                        out.biases[l] -= cfg.learning_rate * gbs[l]
            history.append(epoch_loss / n)
    return out, history


def gradient_check(model: MlpAutoencoder, x, epsilon: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    Checks every weight and bias on a single input. The relative error
    of one parameter is |ga - gn| / max(1e-8, |ga| + |gn|). The model
    is left untouched.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InputError(f"epsilon must be a positive finite number, got {epsilon!r}")
    X = _as_batch(x, model.feature_dim)
    work = model.copy()
    Xn = work._normalize(X)
    _, gws, gbs = _loss_and_grads(work, X, Xn)

    def loss_at() -> float:
        acts, _ = _forward(work, Xn)
        diff = work._denormalize(acts[-1]) - X
        return float(np.sum(diff * diff) / diff.size)

    worst = 0.0
    for analytic, params in ((gws, work.weights), (gbs, work.biases)):
        for ga, p in zip(analytic, params):
            flat = p.reshape(-1)
            gaf = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                lp = loss_at()
                flat[i] = orig - epsilon
                lm = loss_at()
                flat[i] = orig
                gn = (lp - lm) / (2 * epsilon)
                rel = abs(gaf[i] - gn) / max(1e-8, abs(gaf[i]) + abs(gn))
                worst = max(worst, rel)
    return worst


def min_hidden_preactivation(model: MlpAutoencoder, x) -> float:
    """Smallest |pre-activation| over all hidden units for one input.

    Near-zero values sit on a ReLU kink where finite differences and
    backprop legitimately disagree; callers can filter on this.
    """
    X = _as_batch(x, model.feature_dim)
    _, pre = _forward(model, model._normalize(X))
    hidden = pre[:-1]
    if not hidden:
        return math.inf
    return float(min(np.abs(z).min() for z in hidden))


def model_to_dict(model: MlpAutoencoder) -> dict:
    norm = None
    if model.input_mean is not None:
        norm = {"mean": model.input_mean.tolist(), "std": model.input_std.tolist()}
    return {
        "schema": MODEL_SCHEMA,
        "layer_dims": list(model.arch.layer_dims),
        "normalization": norm,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(obj: dict, *, path: str | None = None) -> MlpAutoencoder:
    require(isinstance(obj, dict) and obj.get("schema") == MODEL_SCHEMA,
            f"expected schema {MODEL_SCHEMA!r}", path=path)
    dims = obj.get("layer_dims")
    require(isinstance(dims, list) and all(isinstance(d, int) and not isinstance(d, bool) for d in dims),
            "layer_dims must be a list of integers", path=path)
    try:
        arch = AeArchitecture(tuple(dims))
    except InputError as e:
        raise SchemaError(f"bad layer_dims: {e}", path=path) from e
    layers = obj.get("layers")
    require(isinstance(layers, list) and len(layers) == arch.n_weight_layers,
            f"expected {arch.n_weight_layers} layers", path=path)
    ws, bs = [], []
    for l, layer in enumerate(layers):
        require(isinstance(layer, dict), f"layer {l} must be an object", path=path)
        wrows = layer.get("weights")
        require(isinstance(wrows, list) and len(wrows) == arch.layer_dims[l + 1],
                f"layer {l} weights must have {arch.layer_dims[l + 1]} rows", path=path)
        ws.append(np.array([as_float_list(r, f"layer {l} weight row", path=path) for r in wrows]))
        bs.append(np.array(as_float_list(layer.get("bias"), f"layer {l} bias", path=path)))
    norm = obj.get("normalization")
    mean = std = None
    if norm is not None:
        require(isinstance(norm, dict), "normalization must be null or an object", path=path)
        mean = np.array(as_float_list(norm.get("mean"), "normalization mean", path=path))
        std = np.array(as_float_list(norm.get("std"), "normalization std", path=path))
    try:
        return MlpAutoencoder(arch, ws, bs, mean, std)
    except InputError as e:
        raise SchemaError(f"inconsistent model parameters: {e}", path=path) from e


def save_model(path: str, model: MlpAutoencoder) -> None:
    dump_json_doc(path, model_to_dict(model))


def load_model(path: str) -> MlpAutoencoder:
    return model_from_dict(load_json_doc(path, MODEL_SCHEMA), path=path)
