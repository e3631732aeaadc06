"""Pure-NumPy implementations of the numeric hot kernels.

This is the fallback backend; `routekd._kernels` (Cython) implements the
same signatures. Every function takes and returns float64 arrays, and the
two backends follow the same formulas so results agree to rounding error.
"""

import numpy as np

NAME = "python"


def dense_forward(x, w, b):
    """y = x @ w + b for a batch of row vectors."""
    return x @ w + b


def dense_backward(x, w, dout):
    """Gradients of a dense layer given upstream dout = dL/dy.

    Returns (dx, dw, db) with dx = dout @ w.T, dw = x.T @ dout,
    db = column sums of dout.
    """
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dout):
    return np.where(x > 0.0, dout, 0.0)


def batchnorm_forward_train(x, gamma, beta, eps):
    """Train-mode batchnorm: normalize by batch statistics.

    Returns (y, xhat, mean, var); var is the biased batch variance.
    """
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    xhat = (x - mean) / np.sqrt(var + eps)
    return gamma * xhat + beta, xhat, mean, var


def batchnorm_backward(dout, xhat, var, gamma, eps):
    """Backward pass through batch statistics (full chain rule)."""
    n = dout.shape[0]
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    inv_std = 1.0 / np.sqrt(var + eps)
    # dL/dx via dmean and dvar folded into one expression
    dx = (inv_std / n) * (
        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    return dx, dgamma, dbeta


def softmax_rows(z):
    """Numerically stable row-wise softmax."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logsumexp_rows(z):
    m = z.max(axis=1)
    return m + np.log(np.exp(z - m[:, None]).sum(axis=1))


def gmm_log_components(x, means, variances, log_weights):
    """log w_k + log N(x_i | mu_k, diag sigma_k^2) for every record/component.

    x: (n, d), means/variances: (k, d), log_weights: (k,). Returns (n, k).
    """
    n, d = x.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        diff = x - means[j]
        quad = (diff * diff / variances[j]).sum(axis=1)
        norm = np.log(2.0 * np.pi) * d + np.log(variances[j]).sum()
        out[:, j] = log_weights[j] - 0.5 * (norm + quad)
    return out
