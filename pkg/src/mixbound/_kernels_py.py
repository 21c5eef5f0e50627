"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or ``MIXBOUND_PURE_PYTHON`` is set.
Arithmetic is ordered exactly as in the compiled version.
"""
import numpy as np


def sample_path(cum, start, u):
    n_states = cum.shape[0]
    out = np.empty(len(u) + 1, dtype=np.int64)
    s = int(start)
    out[0] = s
    for t, v in enumerate(u):
        j = 0
        row = cum[s]
        while j < n_states - 1 and not (v < row[j]):
            j += 1
        s = j
        out[t + 1] = s
    return out


def svm_sweep(G, y, C, alpha, f):
    max_change = 0.0
    for i in range(G.shape[0]):
        gii = G[i, i]
        if gii <= 0.0:
            continue
        new = alpha[i] + (1.0 - y[i] * f[i]) / gii
        new = min(max(new, 0.0), C)
        d = new - alpha[i]
        if d == 0.0:
            continue
        alpha[i] = new
        f += (d * y[i]) * G[i]
        max_change = max(max_change, abs(d))
    return float(max_change)


def svr_sweep(G, y, C, eps, beta, f):
    max_change = 0.0
    for i in range(G.shape[0]):
        gii = G[i, i]
        if gii <= 0.0:
            continue
        g = y[i] - (f[i] - gii * beta[i])
        if g > eps:
            new = (g - eps) / gii
        elif g < -eps:
            new = (g + eps) / gii
        else:
            new = 0.0
        new = min(max(new, -C), C)
        d = new - beta[i]
        if d == 0.0:
            continue
        beta[i] = new
        f += d * G[i]
        max_change = max(max_change, abs(d))
    return float(max_change)
