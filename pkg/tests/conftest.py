import numpy as np
import pytest

from labsentry import autoencoder as ae
from labsentry import detector, simgen
from labsentry.preprocess import fit_scaler, frames_to_matrix


def zero_model(hidden_dim=8, layout=1):
    """All parameters zero: alpha uniform, every output exactly 0.5."""
    m = ae.init(hidden_dim, seed=0, layout=layout)
    for layer in (m.enc1, m.bottleneck, m.dec1, m.dec2, m.out):
        layer.weights[:] = 0.0
        layer.bias[:] = 0.0
    m.attn.w[:] = 0.0
    m.attn.b = 0.0
    return m


@pytest.fixture(scope="session")
def gen_config():
    return simgen.default_config(seed=42)


@pytest.fixture(scope="session")
def trained_setup(gen_config):
    """Reference pipeline at the pinned evaluation settings (seed 42).

    Shared across tests; everything downstream treats it as read-only.
    """
    frames = simgen.generate(gen_config, 2000)
    scaler = fit_scaler(frames)
    scaled = scaler.transform(frames_to_matrix(frames))
    model = ae.init(64, seed=42)
    cfg = ae.TrainConfig(batch_size=16, learning_rate=7e-4, epochs=10, seed=42)
    trained, history = ae.train(model, scaled, cfg)
    errors = ae.batch_reconstruction_errors(trained, scaled)
    threshold = detector.calibrate(errors)
    return {
        "frames": frames,
        "scaler": scaler,
        "scaled": scaled,
        "model": trained,
        "history": history,
        "threshold": threshold,
    }


def forward_oracle(model, tokens):
    """Straight-line re-implementation of the forward equations.

    Written with explicit loops, independent of the library code paths;
    used as the second opinion for forward().
    """
    import math

    x = np.asarray(tokens, dtype=np.float64)
    T, in_dim = x.shape
    d = model.hidden_dim
    w1, b1 = model.enc1.weights, model.enc1.bias
    wa, ba = model.attn.w[:, 0], model.attn.b

    h = np.zeros((T, d))
    for t in range(T):
        for j in range(d):
            acc = b1[j]
            for k in range(in_dim):
                acc += x[t, k] * w1[k, j]
            h[t, j] = max(acc, 0.0)

    e = np.zeros(T)
    for t in range(T):
        acc = ba
        for j in range(d):
            acc += h[t, j] * wa[j]
        e[t] = math.tanh(acc)

    mx = max(e)
    exp = [math.exp(v - mx) for v in e]
    s = sum(exp)
    alpha = np.array([v / s for v in exp])

    c = np.zeros(d)
    for j in range(d):
        for t in range(T):
            c[j] += alpha[t] * h[t, j]

    def dense(vec, layer, act):
        w, b = layer.weights, layer.bias
        out = np.zeros(w.shape[1])
        for j in range(w.shape[1]):
            acc = b[j]
            for k in range(w.shape[0]):
                acc += vec[k] * w[k, j]
            if act == "relu":
                out[j] = max(acc, 0.0)
            else:
                out[j] = 1.0 / (1.0 + math.exp(-acc)) if acc >= 0 else math.exp(acc) / (1.0 + math.exp(acc))
        return out

    z = dense(c, model.bottleneck, "relu")
    d1 = dense(z, model.dec1, "relu")
    d2 = dense(d1, model.dec2, "relu")
    x_hat = dense(d2, model.out, "sigmoid")
    return alpha, x_hat


def gradcheck(model, x, h=1e-5):
    """Central finite differences over every parameter.

    Returns the worst relative error, with the usual max(1, |a|, |b|)
    denominator so near-zero gradients compare absolutely.
    """
    from labsentry.autoencoder import backward, forward, mse

    trace = forward(model, x)
    g = backward(model, x, trace)
    pairs = [
        (model.enc1.weights, g.enc1_w), (model.enc1.bias, g.enc1_b),
        (model.attn.w, g.attn_w),
        (model.bottleneck.weights, g.bottleneck_w), (model.bottleneck.bias, g.bottleneck_b),
        (model.dec1.weights, g.dec1_w), (model.dec1.bias, g.dec1_b),
        (model.dec2.weights, g.dec2_w), (model.dec2.bias, g.dec2_b),
        (model.out.weights, g.out_w), (model.out.bias, g.out_b),
    ]

    def loss():
        return mse(np.asarray(x).ravel(), forward(model, x).x_hat)

    worst = 0.0
    for arr, grad in pairs:
        flat, gflat = arr.reshape(-1), np.asarray(grad).reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp = loss()
            flat[k] = old - h
            lm = loss()
            flat[k] = old
            fd = (lp - lm) / (2 * h)
            rel = abs(fd - gflat[k]) / max(1.0, abs(fd), abs(gflat[k]))
            worst = max(worst, rel)
    # scalar attention bias
    old = model.attn.b
    model.attn.b = old + h
    lp = loss()
    model.attn.b = old - h
    lm = loss()
    model.attn.b = old
    fd = (lp - lm) / (2 * h)
    rel = abs(fd - g.attn_b) / max(1.0, abs(fd), abs(g.attn_b))
    return max(worst, rel)
