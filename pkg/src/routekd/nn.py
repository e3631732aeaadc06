"""Minimal feedforward network engine.

Dense / dropout / batchnorm / ReLU layers with exact backpropagation,
temperature softmax, cross-entropy losses, and plain SGD. Everything runs
on float64 and is deterministic given a seed: weight init draws from a
per-layer generator, dropout masks from a per-dropout-layer generator, and
no other randomness exists.

The arithmetic-heavy steps are delegated to `routekd.backend`, which picks
the compiled kernels when available and the NumPy fallback otherwise.
"""

from dataclasses import dataclass, field

import numpy as np

from routekd import backend as K
from routekd.errors import ShapeError, UsageError, ValidationError

TRAIN = "train"
EVAL = "eval"

BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.9
LOG_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# architecture descriptors


@dataclass(frozen=True)
class LayerSpec:
    """One layer in an architecture description."""

    kind: str  # dense | dropout | batchnorm | relu
    units: int | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.kind == "dense":
            if self.units is None or self.units < 1:
                raise ValidationError(f"dense layer needs units >= 1, got {self.units}")
        elif self.kind == "dropout":
            if self.rate is None or not 0.0 <= self.rate < 1.0:
                raise ValidationError(f"dropout rate must be in [0, 1), got {self.rate}")
        elif self.kind not in ("batchnorm", "relu"):
            raise ValidationError(f"unknown layer kind {self.kind!r}")


def dense(units):
    return LayerSpec("dense", units=units)


def dropout(rate):
    return LayerSpec("dropout", rate=rate)


def batchnorm():
    return LayerSpec("batchnorm")


def relu():
    return LayerSpec("relu")


def parse_architecture(text):
    """Expand a compact descriptor like ``10n-0.25DP-30n`` into layer specs.

    Tokens: ``<int>n`` starts a dense block (dense + ReLU), ``<float>DP``
    adds dropout after the current block's activation, ``BN`` inserts
    batch normalization between the current dense layer and its ReLU.
    The classification head is appended by `build_mlp`, not listed here.
    """
    groups = []
    for token in text.split("-"):
        token = token.strip()
        if not token:
            continue
        if token == "BN":
            if not groups:
                raise ValidationError(f"{text!r}: BN before any dense layer")
            groups[-1]["bn"] = True
        elif token.endswith("DP"):
            if not groups:
                raise ValidationError(f"{text!r}: dropout before any dense layer")
            try:
                groups[-1]["dropout"] = float(token[:-2])
            except ValueError:
                raise ValidationError(f"{text!r}: bad dropout token {token!r}") from None
        elif token.endswith("n"):
            try:
                units = int(token[:-1])
            except ValueError:
                raise ValidationError(f"{text!r}: bad dense token {token!r}") from None
            groups.append({"units": units, "bn": False, "dropout": None})
        else:
            raise ValidationError(f"{text!r}: unknown token {token!r}")
    specs = []
    for g in groups:
        specs.append(dense(g["units"]))
        if g["bn"]:
            specs.append(batchnorm())
        specs.append(relu())
        if g["dropout"] is not None:
            specs.append(dropout(g["dropout"]))
    return specs


# ---------------------------------------------------------------------------
# layers


def _as_matrix(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {x.shape}")
    return x


class DenseLayer:
    kind = "dense"

    def __init__(self, in_dim, units, rng=None):
        self.in_dim = in_dim
        self.units = units
        if rng is None:
            self.w = np.zeros((in_dim, units))
        else:
            limit = np.sqrt(6.0 / in_dim)
            self.w = rng.uniform(-limit, limit, size=(in_dim, units))
        self.b = np.zeros(units)
        self._x = None

    @property
    def out_dim(self):
        return self.units

    def forward(self, x, train):
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"dense expected {self.in_dim} inputs, got {x.shape[1]}")
        if train:
            self._x = x
        return K.dense_forward(x, self.w, self.b)

    def backward(self, dout):
        if self._x is None:
            raise UsageError("dense backward called without a cached forward pass")
        dx, dw, db = K.dense_backward(self._x, self.w, dout)
        return dx, {"w": dw, "b": db}

    def params(self):
        return {"w": self.w, "b": self.b}


class ReluLayer:
    kind = "relu"

    def __init__(self):
        self._x = None

    def forward(self, x, train):
        if train:
            self._x = x
        return K.relu_forward(x)

    def backward(self, dout):
        if self._x is None:
            raise UsageError("relu backward called without a cached forward pass")
        return K.relu_backward(self._x, dout), {}

    def params(self):
        return {}


class DropoutLayer:
    """Inverted dropout: survivors scaled by 1/(1-rate), eval is identity."""

    kind = "dropout"

    def __init__(self, rate, rng):
        self.rate = rate
        self.rng = rng
        self.mask = None
        self.freeze_mask = False  # reuse the cached mask (gradient-check replay)

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            if train:
                self.mask = np.ones_like(x)
            return x
        if not (self.freeze_mask and self.mask is not None and self.mask.shape == x.shape):
            keep = self.rng.random(x.shape) >= self.rate
            self.mask = keep / (1.0 - self.rate)
        return x * self.mask

    def backward(self, dout):
        if self.mask is None:
            raise UsageError("dropout backward called without a cached forward pass")
        return dout * self.mask, {}

    def params(self):
        return {}


class BatchNormLayer:
    kind = "batchnorm"

    def __init__(self, dim, eps=BATCHNORM_EPS, momentum=BATCHNORM_MOMENTUM):
        self.dim = dim
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._xhat = None
        self._var = None

    def forward(self, x, train):
        if x.shape[1] != self.dim:
            raise ShapeError(f"batchnorm expected {self.dim} features, got {x.shape[1]}")
        if train:
            y, xhat, mean, var = K.batchnorm_forward_train(x, self.gamma, self.beta, self.eps)
            self._xhat, self._var = xhat, var
            m = self.momentum
            self.running_mean = m * self.running_mean + (1.0 - m) * mean
            self.running_var = m * self.running_var + (1.0 - m) * var
            return y
        xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma * xhat + self.beta

    def backward(self, dout):
        if self._xhat is None:
            raise UsageError("batchnorm backward called without a cached forward pass")
        dx, dgamma, dbeta = K.batchnorm_backward(dout, self._xhat, self._var, self.gamma, self.eps)
        return dx, {"gamma": dgamma, "beta": dbeta}

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}


# ---------------------------------------------------------------------------
# model


class MlpModel:
    """An ordered layer stack with a train/eval switch.

    Build instances with `build_mlp`; direct construction takes ready layer
    objects (used by deserialization).
    """

    def __init__(self, layers, input_dim, output_dim, seed=None):
        self.layers = layers
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.seed = seed
        self.mode = TRAIN

    # -- mode ---------------------------------------------------------------

    def set_mode(self, mode):
        if mode not in (TRAIN, EVAL):
            raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
        self.mode = mode
        return self

    def train(self):
        return self.set_mode(TRAIN)

    def eval(self):
        return self.set_mode(EVAL)

    # -- forward / backward ---------------------------------------------------

    def forward(self, batch):
        """Run the stack on a batch of rows; returns logits.

        In train mode every layer caches what its backward pass needs.
        """
        x = _as_matrix(batch)
        if x.shape[0] < 1:
            raise ShapeError("batch must contain at least one row")
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"model expects {self.input_dim} features, got {x.shape[1]}")
        if not np.isfinite(x).all():
            raise ValidationError("batch contains non-finite values")
        train = self.mode == TRAIN
        for layer in self.layers:
            x = layer.forward(x, train)
        if not np.isfinite(x).all():
            raise ValidationError("forward pass produced non-finite logits")
        return x

    def backward(self, upstream):
        """Backpropagate dL/dlogits; returns per-layer parameter gradients.

        The result is a list parallel to `self.layers`; each entry maps
        parameter name to gradient array (empty for parameter-free layers).
        """
        dout = _as_matrix(upstream)
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dout, g = self.layers[i].backward(dout)
            grads[i] = g
        return grads

    # -- parameter access -----------------------------------------------------

    def parameters(self):
        """Yields (layer_index, name, array) for every trainable parameter."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                yield i, name, arr

    def param_bytes(self):
        """Concatenated little-endian bytes of all parameters (hash input)."""
        return b"".join(arr.astype("<f8").tobytes() for _, _, arr in self.parameters())

    def freeze_dropout(self, frozen=True):
        for layer in self.layers:
            if isinstance(layer, DropoutLayer):
                layer.freeze_mask = frozen
        return self

    def spec_list(self):
        specs = []
        for layer in self.layers:
            if layer.kind == "dense":
                specs.append(dense(layer.units))
            elif layer.kind == "dropout":
                specs.append(dropout(layer.rate))
            elif layer.kind == "batchnorm":
                specs.append(batchnorm())
            else:
                specs.append(relu())
        return specs


def build_mlp(input_dim, hidden, output_dim, seed=0):
    """Assemble an MlpModel from hidden-layer specs plus a logits head.

    `hidden` is a sequence of LayerSpec (or a descriptor string accepted by
    `parse_architecture`). A final dense layer of `output_dim` units is
    appended; the head emits raw logits, softmax lives in the loss.
    """
    if isinstance(hidden, str):
        hidden = parse_architecture(hidden)
    layers = []
    width = input_dim
    dense_count = 0
    for spec in hidden:
        if spec.kind == "dense":
            rng = np.random.default_rng(np.random.SeedSequence((seed, dense_count)))
            layers.append(DenseLayer(width, spec.units, rng))
            width = spec.units
            dense_count += 1
        elif spec.kind == "dropout":
            rng = np.random.default_rng(np.random.SeedSequence((seed, 1000 + len(layers))))
            layers.append(DropoutLayer(spec.rate, rng))
        elif spec.kind == "batchnorm":
            layers.append(BatchNormLayer(width))
        else:
            layers.append(ReluLayer())
    rng = np.random.default_rng(np.random.SeedSequence((seed, dense_count)))
    layers.append(DenseLayer(width, output_dim, rng))
    return MlpModel(layers, input_dim, output_dim, seed=seed)


def set_mode(model, mode):
    return model.set_mode(mode)


# ---------------------------------------------------------------------------
# functional pieces


def softmax(logits, temperature=1.0):
    """Row-wise softened softmax: softmax(z, T) == softmax(z / T, 1).

    Implemented exactly as the T=1 softmax of z/T with per-row max
    subtraction, so the identity above holds bitwise.
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    z = _as_matrix(logits)
    return K.softmax_rows(np.ascontiguousarray(z / temperature))


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError("label outside [0, num_classes)")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probabilities, targets):
    """Mean cross-entropy over batch rows; targets may be one-hot or soft.

    Log arguments are clamped to [1e-12, 1] so a zero predicted
    probability cannot produce an infinite loss.
    """
    p = _as_matrix(probabilities)
    t = _as_matrix(targets)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    logp = np.log(np.clip(p, LOG_CLAMP, 1.0))
    return float(-(t * logp).sum() / p.shape[0])


def softmax_cross_entropy_grad(logits, targets, temperature=1.0):
    """d/dlogits of mean CE(softmax(logits, T), targets).

    Returns (probabilities, gradient); the gradient is
    (softmax(z, T) - targets) / (N * T).
    """
    probs = softmax(logits, temperature)
    grad = (probs - targets) / (logits.shape[0] * temperature)
    return probs, grad


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class SgdState:
    """Plain SGD with optional classical momentum (v = m*v + g; p -= lr*v)."""

    learning_rate: float
    momentum: float = 0.0
    velocities: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")


def sgd_step(model, grads, state):
    """Apply one SGD update in place; `grads` comes from model.backward."""
    if len(grads) != len(model.layers):
        raise ShapeError("gradient list does not match the layer stack")
    for i, layer in enumerate(model.layers):
        params = layer.params()
        for name, g in grads[i].items():
            p = params[name]
            if g.shape != p.shape:
                raise ShapeError(
                    f"layer {i} param {name!r}: gradient shape {g.shape} != {p.shape}"
                )
            if state.momentum > 0.0:
                key = (i, name)
                v = state.velocities.get(key)
                v = g if v is None else state.momentum * v + g
                state.velocities[key] = v
                p -= state.learning_rate * v
            else:
                p -= state.learning_rate * g
    return model
