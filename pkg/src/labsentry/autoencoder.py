"""Attention one-class autoencoder: model, forward/backward, training.

Architecture for hidden width d (even): a shared 1->d ReLU encoder over
the 7 channel tokens, a scalar-score attention pool (tanh logits through
a softmax, context = weighted sum of token encodings), a d->d/2 ReLU
bottleneck, a d/2->d/2 and d/2->d ReLU decoder pair, and a d->7 sigmoid
output.  Reconstruction error (mean squared) is the anomaly score.

`forward`/`backward` here are the single-sample reference path; the
training loop runs on the batched kernels (numba or numpy, see
labsentry.kernels) which are cross-checked against this reference in the
test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from labsentry import kernels
from labsentry.errors import DivergenceError, InsufficientDataError
from labsentry.preprocess import N_CHANNELS, to_model_input

LAYOUT_CHANNEL_TOKENS = 1  # seven tokens of one scalar each
LAYOUT_SINGLE_TOKEN = 0  # degenerate: one token carrying all channels

POOL_ATTENTION = "attention"
POOL_MEAN = "mean"

# minimum decrease of validation loss that counts as progress
EARLY_STOP_TOL = 1e-6


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str  # relu | sigmoid | linear

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class AttentionParams:
    w: np.ndarray  # (d, 1)
    b: float

    def copy(self) -> "AttentionParams":
        return AttentionParams(self.w.copy(), self.b)


@dataclass
class AttentionAutoencoder:
    enc1: DenseLayer
    attn: AttentionParams
    bottleneck: DenseLayer
    dec1: DenseLayer
    dec2: DenseLayer
    out: DenseLayer
    hidden_dim: int
    layout: int = LAYOUT_CHANNEL_TOKENS
    pooling: str = POOL_ATTENTION

    @property
    def n_tokens(self) -> int:
        return N_CHANNELS if self.layout == LAYOUT_CHANNEL_TOKENS else 1

    @property
    def token_dim(self) -> int:
        return 1 if self.layout == LAYOUT_CHANNEL_TOKENS else N_CHANNELS

    @property
    def uses_attention(self) -> bool:
        return self.pooling == POOL_ATTENTION

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Parameters in the canonical (file and kernel) order."""
        return [
            ("enc1.weights", self.enc1.weights),
            ("enc1.bias", self.enc1.bias),
            ("attn.w", self.attn.w),
            ("attn.b", np.asarray(self.attn.b, dtype=np.float64).reshape(())),
            ("bottleneck.weights", self.bottleneck.weights),
            ("bottleneck.bias", self.bottleneck.bias),
            ("dec1.weights", self.dec1.weights),
            ("dec1.bias", self.dec1.bias),
            ("dec2.weights", self.dec2.weights),
            ("dec2.bias", self.dec2.bias),
            ("out.weights", self.out.weights),
            ("out.bias", self.out.bias),
        ]

    @property
    def param_count(self) -> int:
        return sum(int(a.size) for _, a in self.param_arrays())

    def kernel_params(self) -> tuple:
        return (
            self.enc1.weights,
            self.enc1.bias,
            self.attn.w[:, 0],
            float(self.attn.b),
            self.bottleneck.weights,
            self.bottleneck.bias,
            self.dec1.weights,
            self.dec1.bias,
            self.dec2.weights,
            self.dec2.bias,
            self.out.weights,
            self.out.bias,
        )

    def copy(self) -> "AttentionAutoencoder":
        return AttentionAutoencoder(
            enc1=self.enc1.copy(),
            attn=self.attn.copy(),
            bottleneck=self.bottleneck.copy(),
            dec1=self.dec1.copy(),
            dec2=self.dec2.copy(),
            out=self.out.copy(),
            hidden_dim=self.hidden_dim,
            layout=self.layout,
            pooling=self.pooling,
        )


@dataclass
class ForwardTrace:
    """Intermediate activations of one forward pass.

    d1/d2 are the decoder activations, cached so backward() does not
    recompute them.
    """

    h: np.ndarray  # (T, d)
    e: np.ndarray  # (T,)
    alpha: np.ndarray  # (T,)
    c: np.ndarray  # (d,)
    z: np.ndarray  # (d/2,)
    x_hat: np.ndarray  # (7,)
    d1: np.ndarray  # (d/2,)
    d2: np.ndarray  # (d,)


@dataclass
class Gradients:
    """Loss gradients, same shapes as the model parameters."""

    enc1_w: np.ndarray
    enc1_b: np.ndarray
    attn_w: np.ndarray  # (d, 1)
    attn_b: float
    bottleneck_w: np.ndarray
    bottleneck_b: np.ndarray
    dec1_w: np.ndarray
    dec1_b: np.ndarray
    dec2_w: np.ndarray
    dec2_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [
            self.enc1_w,
            self.enc1_b,
            self.attn_w,
            np.asarray(self.attn_b, dtype=np.float64).reshape(()),
            self.bottleneck_w,
            self.bottleneck_b,
            self.dec1_w,
            self.dec1_b,
            self.dec2_w,
            self.dec2_b,
            self.out_w,
            self.out_b,
        ]


@dataclass
class TrainConfig:
    batch_size: int
    learning_rate: float
    epochs: int
    patience: int = 5
    val_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return min(self.val_loss) if self.val_loss else math.inf

    @property
    def best_epoch(self) -> int:
        return int(np.argmin(self.val_loss)) if self.val_loss else -1


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init(
    hidden_dim: int,
    seed: int,
    layout: int = LAYOUT_CHANNEL_TOKENS,
    pooling: str = POOL_ATTENTION,
) -> AttentionAutoencoder:
    """Build a freshly initialised model (Glorot-uniform weights, zero biases).

    Deterministic for a given (hidden_dim, seed, layout) triple.
    """
    if hidden_dim < 2 or hidden_dim % 2 != 0:
        raise ValueError(f"hidden_dim must be a positive even integer, got {hidden_dim}")
    if layout not in (LAYOUT_CHANNEL_TOKENS, LAYOUT_SINGLE_TOKEN):
        raise ValueError(f"unknown layout {layout}")
    if pooling not in (POOL_ATTENTION, POOL_MEAN):
        raise ValueError(f"unknown pooling {pooling!r}")

    d = hidden_dim
    dh = d // 2
    in_dim = 1 if layout == LAYOUT_CHANNEL_TOKENS else N_CHANNELS
    rng = np.random.default_rng(seed)
    return AttentionAutoencoder(
        enc1=DenseLayer(_glorot(rng, (in_dim, d)), np.zeros(d), "relu"),
        attn=AttentionParams(_glorot(rng, (d, 1)), 0.0),
        bottleneck=DenseLayer(_glorot(rng, (d, dh)), np.zeros(dh), "relu"),
        dec1=DenseLayer(_glorot(rng, (dh, dh)), np.zeros(dh), "relu"),
        dec2=DenseLayer(_glorot(rng, (dh, d)), np.zeros(d), "relu"),
        out=DenseLayer(_glorot(rng, (d, N_CHANNELS)), np.zeros(N_CHANNELS), "sigmoid"),
        hidden_dim=d,
        layout=layout,
        pooling=pooling,
    )


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_tokens(model: AttentionAutoencoder, tokens) -> np.ndarray:
    x = np.asarray(tokens, dtype=np.float64)
    if x.shape == (N_CHANNELS,):
        x = to_model_input(x, model.layout)
    expected = (model.n_tokens, model.token_dim)
    if x.shape != expected:
        raise ValueError(f"tokens must have shape {expected}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("tokens must be finite")
    return x


def forward(model: AttentionAutoencoder, tokens) -> ForwardTrace:
    """Single-sample forward pass returning all intermediates."""
    x = _as_tokens(model, tokens)
    T = x.shape[0]

    h = np.maximum(x @ model.enc1.weights + model.enc1.bias, 0.0)  # (T, d)
    if model.uses_attention:
        e = np.tanh(h @ model.attn.w[:, 0] + model.attn.b)  # (T,)
        alpha = kernels.softmax(e)
    else:
        e = np.zeros(T)
        alpha = np.full(T, 1.0 / T)
    c = alpha @ h  # (d,)
    z = np.maximum(c @ model.bottleneck.weights + model.bottleneck.bias, 0.0)
    d1 = np.maximum(z @ model.dec1.weights + model.dec1.bias, 0.0)
    d2 = np.maximum(d1 @ model.dec2.weights + model.dec2.bias, 0.0)
    x_hat = _sigmoid_vec(d2 @ model.out.weights + model.out.bias)
    return ForwardTrace(h=h, e=e, alpha=alpha, c=c, z=z, x_hat=x_hat, d1=d1, d2=d2)


def mse(x, x_hat) -> float:
    """Mean squared difference over the 7 channels."""
    x = np.asarray(x, dtype=np.float64).ravel()
    x_hat = np.asarray(x_hat, dtype=np.float64).ravel()
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def backward(model: AttentionAutoencoder, tokens, trace: ForwardTrace) -> Gradients:
    """Analytic gradients of mse(tokens, x_hat) for one sample.

    `trace` must come from forward() on the same tokens.
    """
    x = _as_tokens(model, tokens)
    T = x.shape[0]
    target = x.ravel()
    n_out = target.size

    h, e, alpha, c, z, d1, d2, x_hat = (
        trace.h,
        trace.e,
        trace.alpha,
        trace.c,
        trace.z,
        trace.d1,
        trace.d2,
        trace.x_hat,
    )

    dr = (2.0 / n_out) * (x_hat - target) * x_hat * (1.0 - x_hat)
    g_out_w = np.outer(d2, dr)
    g_out_b = dr.copy()
    dq2 = (model.out.weights @ dr) * (d2 > 0)
    g_dec2_w = np.outer(d1, dq2)
    g_dec2_b = dq2.copy()
    dq1 = (model.dec2.weights @ dq2) * (d1 > 0)
    g_dec1_w = np.outer(z, dq1)
    g_dec1_b = dq1.copy()
    dp = (model.dec1.weights @ dq1) * (z > 0)
    g_bott_w = np.outer(c, dp)
    g_bott_b = dp.copy()
    dc = model.bottleneck.weights @ dp  # (d,)

    if model.uses_attention:
        wa = model.attn.w[:, 0]
        dalpha = h @ dc  # (T,)
        de = alpha * (dalpha - float(alpha @ dalpha))
        du = de * (1.0 - e * e)
        g_attn_w = (h.T @ du).reshape(-1, 1)
        g_attn_b = float(du.sum())
        dh = alpha[:, None] * dc[None, :] + du[:, None] * wa[None, :]
    else:
        g_attn_w = np.zeros_like(model.attn.w)
        g_attn_b = 0.0
        dh = np.tile(dc / T, (T, 1))

    da1 = dh * (h > 0)
    g_enc1_w = x.T @ da1
    g_enc1_b = da1.sum(axis=0)

    return Gradients(
        enc1_w=g_enc1_w,
        enc1_b=g_enc1_b,
        attn_w=g_attn_w,
        attn_b=g_attn_b,
        bottleneck_w=g_bott_w,
        bottleneck_b=g_bott_b,
        dec1_w=g_dec1_w,
        dec1_b=g_dec1_b,
        dec2_w=g_dec2_w,
        dec2_b=g_dec2_b,
        out_w=g_out_w,
        out_b=g_out_b,
    )


def to_token_batch(model: AttentionAutoencoder, scaled: np.ndarray) -> np.ndarray:
    """Reshape an (n, 7) matrix of scaled rows into the model's batch layout."""
    scaled = np.ascontiguousarray(scaled, dtype=np.float64)
    if scaled.ndim != 2 or scaled.shape[1] != N_CHANNELS:
        raise ValueError(f"expected (n, {N_CHANNELS}) scaled rows, got {scaled.shape}")
    if model.layout == LAYOUT_CHANNEL_TOKENS:
        return scaled.reshape(-1, N_CHANNELS, 1)
    return scaled.reshape(-1, 1, N_CHANNELS)


def batch_reconstruction_errors(model: AttentionAutoencoder, scaled: np.ndarray) -> np.ndarray:
    """Reconstruction error per row of an (n, 7) scaled matrix."""
    X = to_token_batch(model, scaled)
    return kernels.batch_scores(X, model.kernel_params(), model.uses_attention)


class _Adam:
    """Adam with the standard constants (b1 0.9, b2 0.999, eps 1e-8)."""

    def __init__(self, shapes: list[tuple], learning_rate: float):
        self.lr = learning_rate
        self.b1 = 0.9
        self.b2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _params_as_list(model: AttentionAutoencoder) -> list[np.ndarray]:
    # attn.b as a 0-d array so the optimizer treats every parameter alike
    return [np.array(a, dtype=np.float64) for _, a in model.param_arrays()]


def _model_from_list(template: AttentionAutoencoder, params: list[np.ndarray]) -> AttentionAutoencoder:
    w1, b1, wa, ba, wb, bb, wd1, bd1, wd2, bd2, wo, bo = params
    return AttentionAutoencoder(
        enc1=DenseLayer(w1.copy(), b1.copy(), "relu"),
        attn=AttentionParams(wa.copy(), float(ba)),
        bottleneck=DenseLayer(wb.copy(), bb.copy(), "relu"),
        dec1=DenseLayer(wd1.copy(), bd1.copy(), "relu"),
        dec2=DenseLayer(wd2.copy(), bd2.copy(), "relu"),
        out=DenseLayer(wo.copy(), bo.copy(), "sigmoid"),
        hidden_dim=template.hidden_dim,
        layout=template.layout,
        pooling=template.pooling,
    )


def _kernel_view(params: list[np.ndarray]) -> tuple:
    w1, b1, wa, ba, wb, bb, wd1, bd1, wd2, bd2, wo, bo = params
    return (w1, b1, wa[:, 0], float(ba), wb, bb, wd1, bd1, wd2, bd2, wo, bo)


def train(
    model: AttentionAutoencoder, data, cfg: TrainConfig
) -> tuple[AttentionAutoencoder, TrainHistory]:
    """Train on scaled normal rows; returns the best-validation weights.

    Deterministic for a fixed seed: one seeded shuffle selects the split
    (the last ceil(val_fraction*n) rows of the shuffled order become the
    validation set), minibatch order is reshuffled each epoch from the
    same RNG stream, and the whole loop is single-threaded.  Stops early
    after `patience` epochs without a validation improvement of at least
    1e-6.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != N_CHANNELS:
        raise ValueError(f"training data must be (n, {N_CHANNELS}), got {data.shape}")
    n = data.shape[0]
    if n < 20:
        raise InsufficientDataError(f"need at least 20 rows to train, got {n}")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = math.ceil(cfg.val_fraction * n)
    train_rows = data[perm[: n - n_val]]
    val_rows = data[perm[n - n_val :]]

    X_train = to_token_batch(model, train_rows)
    X_val = to_token_batch(model, val_rows)
    use_attention = model.uses_attention

    params = _params_as_list(model)
    adam = _Adam([p.shape for p in params], cfg.learning_rate)
    history = TrainHistory()
    best_val = math.inf
    best_params = [p.copy() for p in params]
    stall = 0

    n_train = X_train.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = kernels.batch_loss_and_grads(
                X_train[idx], _kernel_view(params), use_attention
            )
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            grad_list = [np.asarray(g, dtype=np.float64) for g in grads]
            # optimizer sees attn.w as (d, 1); the kernel gradient is flat
            grad_list[2] = grad_list[2].reshape(params[2].shape)
            adam.step(params, grad_list)
            batch_losses.append(loss)

        val_errs = kernels.batch_scores(X_val, _kernel_view(params), use_attention)
        val_loss = float(np.mean(val_errs))
        if not math.isfinite(val_loss):
            raise DivergenceError(epoch)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(val_loss)

        if best_val - val_loss >= EARLY_STOP_TOL:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    return _model_from_list(model, best_params), history
