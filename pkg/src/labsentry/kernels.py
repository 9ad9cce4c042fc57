"""Batched numeric kernels for training and scoring.

Two interchangeable backends compute the same math:

* ``numba`` -- @njit per-sample loops (default when numba is importable)
* ``numpy`` -- vectorized pure-numpy fallback

Select with the ``LABSENTRY_BACKEND`` environment variable (``numba`` or
``numpy``).  Both are deterministic run-to-run; tiny float differences
between backends are possible because summation order differs, so tests
compare them with tolerances, not bit equality.

Kernel inputs are raw float64 arrays in a fixed order:

    W1 (in_dim, d), b1 (d,)        encoder, shared across tokens
    wa (d,), ba ()                 attention score weights
    Wb (d, d/2), bb (d/2,)         bottleneck
    Wd1 (d/2, d/2), bd1 (d/2,)     decoder 1
    Wd2 (d/2, d), bd2 (d,)         decoder 2
    Wo (d, 7), bo (7,)             sigmoid output

``X`` is a (batch, tokens, in_dim) array with tokens*in_dim == 7.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

_ENV_VAR = "LABSENTRY_BACKEND"


def _pick_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        import labsentry._kernels_nb  # noqa: F401  raises if numba missing

        return "numba"
    if choice:
        raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    try:
        import labsentry._kernels_nb  # noqa: F401

        return "numba"
    except ImportError:
        logger.info("numba unavailable, falling back to numpy kernels")
        return "numpy"


_BACKEND = _pick_backend()


def active_backend() -> str:
    """Name of the backend selected at import time."""
    return _BACKEND


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(e: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shift-invariant softmax: softmax(e + k) == softmax(e)."""
    e = np.asarray(e, dtype=np.float64)
    shifted = e - e.max(axis=axis, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=axis, keepdims=True)
    return out


def _forward_parts_numpy(X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention):
    B, T, _ = X.shape
    H = np.maximum(X @ W1 + b1, 0.0)  # (B,T,d)
    if use_attention:
        E = np.tanh(H @ wa + ba)  # (B,T)
        A = softmax(E, axis=1)
    else:
        E = np.zeros((B, T))
        A = np.full((B, T), 1.0 / T)
    C = np.einsum("bt,btd->bd", A, H)
    Z = np.maximum(C @ Wb + bb, 0.0)
    G1 = np.maximum(Z @ Wd1 + bd1, 0.0)
    G2 = np.maximum(G1 @ Wd2 + bd2, 0.0)
    XH = _sigmoid(G2 @ Wo + bo)  # (B,7)
    return H, E, A, C, Z, G1, G2, XH


def _scores_numpy(X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention):
    *_, XH = _forward_parts_numpy(
        X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention
    )
    target = X.reshape(X.shape[0], -1)
    return np.mean((target - XH) ** 2, axis=1)


def _grads_numpy(X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention):
    B, T, _ = X.shape
    H, E, A, C, Z, G1, G2, XH = _forward_parts_numpy(
        X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention
    )
    target = X.reshape(B, -1)
    n_out = target.shape[1]
    diff = XH - target
    loss = float(np.mean(diff**2))

    dR = (2.0 / (n_out * B)) * diff * XH * (1.0 - XH)  # (B,7)
    gWo = G2.T @ dR
    gbo = dR.sum(axis=0)
    dQ2 = (dR @ Wo.T) * (G2 > 0)
    gWd2 = G1.T @ dQ2
    gbd2 = dQ2.sum(axis=0)
    dQ1 = (dQ2 @ Wd2.T) * (G1 > 0)
    gWd1 = Z.T @ dQ1
    gbd1 = dQ1.sum(axis=0)
    dP = (dQ1 @ Wd1.T) * (Z > 0)
    gWb = C.T @ dP
    gbb = dP.sum(axis=0)
    dC = dP @ Wb.T  # (B,d)

    if use_attention:
        dA = np.einsum("bd,btd->bt", dC, H)
        dE = A * (dA - (A * dA).sum(axis=1, keepdims=True))
        dU = dE * (1.0 - E * E)
        gwa = np.einsum("bt,btd->d", dU, H)
        gba = float(dU.sum())
        dH = A[..., None] * dC[:, None, :] + dU[..., None] * wa
    else:
        gwa = np.zeros_like(wa)
        gba = 0.0
        dH = np.broadcast_to(dC[:, None, :] / T, H.shape)

    dA1 = dH * (H > 0)
    gW1 = np.einsum("bti,btd->id", X, dA1)
    gb1 = dA1.sum(axis=(0, 1))
    return loss, (gW1, gb1, gwa, gba, gWb, gbb, gWd1, gbd1, gWd2, gbd2, gWo, gbo)


def _check_inputs(X, W1, Wo):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"X must be (batch, tokens, in_dim), got shape {X.shape}")
    if X.shape[1] * X.shape[2] != Wo.shape[1]:
        raise ValueError("tokens * in_dim must equal the output width")
    if X.shape[2] != W1.shape[0]:
        raise ValueError("in_dim does not match encoder weights")
    return X


def batch_scores(X, params, use_attention: bool = True, backend: str | None = None) -> np.ndarray:
    """Per-sample reconstruction errors for a (B, T, in_dim) batch."""
    W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo = params
    X = _check_inputs(X, W1, Wo)
    chosen = backend or _BACKEND
    if chosen == "numba":
        from labsentry import _kernels_nb

        return _kernels_nb.scores_nb(
            X, W1, b1, wa, float(ba), Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention
        )
    return _scores_numpy(X, W1, b1, wa, float(ba), Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention)


def batch_loss_and_grads(
    X, params, use_attention: bool = True, backend: str | None = None
) -> tuple[float, tuple]:
    """Mean reconstruction loss over the batch and its parameter gradients.

    Gradients come back as a tuple in the canonical parameter order; the
    attention gradient ``gba`` is a plain float.
    """
    W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo = params
    X = _check_inputs(X, W1, Wo)
    chosen = backend or _BACKEND
    if chosen == "numba":
        from labsentry import _kernels_nb

        out = _kernels_nb.grads_nb(
            X, W1, b1, wa, float(ba), Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention
        )
        return out[0], tuple(out[1:])
    return _grads_numpy(X, W1, b1, wa, float(ba), Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention)
