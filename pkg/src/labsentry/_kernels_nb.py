"""numba @njit implementations of the hot kernels.

Import fails cleanly when numba is not installed; labsentry.kernels then
falls back to the vectorized numpy path.  Loops are written per sample
with fixed iteration order, so results are deterministic run-to-run.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _forward_sample(x, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention,
                    H, E, A, C, Z, G1, G2, XH):
    T, in_dim = x.shape
    d = W1.shape[1]
    dh = Wb.shape[1]
    n_out = Wo.shape[1]

    for t in range(T):
        for j in range(d):
            acc = b1[j]
            for k in range(in_dim):
                acc += x[t, k] * W1[k, j]
            H[t, j] = acc if acc > 0.0 else 0.0

    if use_attention:
        for t in range(T):
            u = ba
            for j in range(d):
                u += H[t, j] * wa[j]
            E[t] = math.tanh(u)
        m = E[0]
        for t in range(1, T):
            if E[t] > m:
                m = E[t]
        s = 0.0
        for t in range(T):
            A[t] = math.exp(E[t] - m)
            s += A[t]
        for t in range(T):
            A[t] /= s
    else:
        for t in range(T):
            E[t] = 0.0
            A[t] = 1.0 / T

    for j in range(d):
        acc = 0.0
        for t in range(T):
            acc += A[t] * H[t, j]
        C[j] = acc

    for j in range(dh):
        acc = bb[j]
        for k in range(d):
            acc += C[k] * Wb[k, j]
        Z[j] = acc if acc > 0.0 else 0.0

    for j in range(dh):
        acc = bd1[j]
        for k in range(dh):
            acc += Z[k] * Wd1[k, j]
        G1[j] = acc if acc > 0.0 else 0.0

    for j in range(d):
        acc = bd2[j]
        for k in range(dh):
            acc += G1[k] * Wd2[k, j]
        G2[j] = acc if acc > 0.0 else 0.0

    for j in range(n_out):
        acc = bo[j]
        for k in range(d):
            acc += G2[k] * Wo[k, j]
        if acc >= 0.0:
            XH[j] = 1.0 / (1.0 + math.exp(-acc))
        else:
            ex = math.exp(acc)
            XH[j] = ex / (1.0 + ex)


@njit(cache=True)
def scores_nb(X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention):
    B, T, in_dim = X.shape
    d = W1.shape[1]
    dh = Wb.shape[1]
    n_out = Wo.shape[1]

    H = np.empty((T, d))
    E = np.empty(T)
    A = np.empty(T)
    C = np.empty(d)
    Z = np.empty(dh)
    G1 = np.empty(dh)
    G2 = np.empty(d)
    XH = np.empty(n_out)

    errs = np.empty(B)
    for n in range(B):
        _forward_sample(X[n], W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo,
                        use_attention, H, E, A, C, Z, G1, G2, XH)
        acc = 0.0
        j = 0
        for t in range(T):
            for k in range(in_dim):
                diff = X[n, t, k] - XH[j]
                acc += diff * diff
                j += 1
        errs[n] = acc / n_out
    return errs


@njit(cache=True)
def grads_nb(X, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo, use_attention):
    B, T, in_dim = X.shape
    d = W1.shape[1]
    dh = Wb.shape[1]
    n_out = Wo.shape[1]

    H = np.empty((T, d))
    E = np.empty(T)
    A = np.empty(T)
    C = np.empty(d)
    Z = np.empty(dh)
    G1 = np.empty(dh)
    G2 = np.empty(d)
    XH = np.empty(n_out)

    dR = np.empty(n_out)
    dQ2 = np.empty(d)
    dQ1 = np.empty(dh)
    dP = np.empty(dh)
    dC = np.empty(d)
    dAt = np.empty(T)
    dU = np.empty(T)

    gW1 = np.zeros((in_dim, d))
    gb1 = np.zeros(d)
    gwa = np.zeros(d)
    gba = 0.0
    gWb = np.zeros((d, dh))
    gbb = np.zeros(dh)
    gWd1 = np.zeros((dh, dh))
    gbd1 = np.zeros(dh)
    gWd2 = np.zeros((dh, d))
    gbd2 = np.zeros(d)
    gWo = np.zeros((d, n_out))
    gbo = np.zeros(n_out)

    loss = 0.0
    for n in range(B):
        x = X[n]
        _forward_sample(x, W1, b1, wa, ba, Wb, bb, Wd1, bd1, Wd2, bd2, Wo, bo,
                        use_attention, H, E, A, C, Z, G1, G2, XH)

        # output layer: dL/dr with sigmoid derivative folded in
        err = 0.0
        j = 0
        for t in range(T):
            for k in range(in_dim):
                diff = XH[j] - x[t, k]
                err += diff * diff
                dR[j] = (2.0 / (n_out * B)) * diff * XH[j] * (1.0 - XH[j])
                gbo[j] += dR[j]
                j += 1
        loss += err / (n_out * B)

        for j in range(d):
            acc = 0.0
            for k in range(n_out):
                gWo[j, k] += G2[j] * dR[k]
                acc += dR[k] * Wo[j, k]
            dQ2[j] = acc if G2[j] > 0.0 else 0.0

        for k in range(d):
            gbd2[k] += dQ2[k]
        for j in range(dh):
            acc = 0.0
            for k in range(d):
                gWd2[j, k] += G1[j] * dQ2[k]
                acc += dQ2[k] * Wd2[j, k]
            dQ1[j] = acc if G1[j] > 0.0 else 0.0

        for k in range(dh):
            gbd1[k] += dQ1[k]
        for j in range(dh):
            acc = 0.0
            for k in range(dh):
                gWd1[j, k] += Z[j] * dQ1[k]
                acc += dQ1[k] * Wd1[j, k]
            dP[j] = acc if Z[j] > 0.0 else 0.0

        for k in range(dh):
            gbb[k] += dP[k]
        for j in range(d):
            acc = 0.0
            for k in range(dh):
                gWb[j, k] += C[j] * dP[k]
                acc += dP[k] * Wb[j, k]
            dC[j] = acc

        if use_attention:
            sAdA = 0.0
            for t in range(T):
                acc = 0.0
                for j in range(d):
                    acc += dC[j] * H[t, j]
                dAt[t] = acc
                sAdA += A[t] * acc
            for t in range(T):
                dE = A[t] * (dAt[t] - sAdA)
                dU[t] = dE * (1.0 - E[t] * E[t])
            for t in range(T):
                gba += dU[t]
                for j in range(d):
                    gwa[j] += dU[t] * H[t, j]
            for t in range(T):
                for j in range(d):
                    if H[t, j] > 0.0:
                        da = A[t] * dC[j] + dU[t] * wa[j]
                        gb1[j] += da
                        for k in range(in_dim):
                            gW1[k, j] += x[t, k] * da
        else:
            for t in range(T):
                for j in range(d):
                    if H[t, j] > 0.0:
                        da = dC[j] / T
                        gb1[j] += da
                        for k in range(in_dim):
                            gW1[k, j] += x[t, k] * da

    return loss, gW1, gb1, gwa, gba, gWb, gbb, gWd1, gbd1, gWd2, gbd2, gWo, gbo
