"""Pure numpy implementations of the hot kernels.

These double as the reference the compiled backend is tested against, so
they favour straightforward array expressions over cleverness.
"""

import numpy as np
from scipy.special import expit

NAME = "numpy"


def mlp_loss_grad(W1, b1, W2, b2, X, y):
    """Mean squared error of a tanh/linear net and its exact gradients.

    Returns ``(E, dW1, db1, dW2, db2, delta_out, delta_hidden)`` where
    ``delta_out = 2 (yhat - y) / n`` and ``delta_hidden`` is its image
    through the output weights and the tanh derivative.
    """
    n = X.shape[0]
    A = np.tanh(X @ W1.T + b1)
    yhat = A @ W2[0] + b2
    resid = yhat - y
    E = float(resid @ resid) / n
    delta_out = (2.0 / n) * resid
    delta_hidden = (1.0 - A * A) * np.outer(delta_out, W2[0])
    dW2 = (delta_out @ A)[None, :]
    db2 = float(delta_out.sum())
    dW1 = delta_hidden.T @ X
    db1 = delta_hidden.sum(axis=0)
    return E, dW1, db1, dW2, db2, delta_out, delta_hidden


def _log_membership(a, b, c, X):
    """Per (sample, rule, input): z, log(z^2), b*log(z^2), log mu."""
    z = (X[:, None, :] - c[None, :, :]) / a[None, :, :]
    s = z * z
    with np.errstate(divide="ignore"):
        log_s = np.log(s)
    L = b[None, :, :] * log_s
    log_mu = -np.logaddexp(0.0, L)
    return z, log_s, L, log_mu


def _normalize(log_w):
    top = np.max(log_w, axis=1, keepdims=True)
    dead = ~np.isfinite(top[:, 0])
    top[dead] = 0.0
    e = np.exp(log_w - top)
    total = e.sum(axis=1, keepdims=True)
    wbar = np.divide(e, total, out=np.zeros_like(e), where=total > 0)
    wbar[dead] = 1.0 / log_w.shape[1]
    return wbar


def anfis_forward(a, b, c, P, X):
    """Firing strengths, normalized strengths, rule outputs and model output."""
    _, _, _, log_mu = _log_membership(a, b, c, X)
    log_w = log_mu.sum(axis=2)
    w = np.exp(log_w)
    wbar = _normalize(log_w)
    f = P[:, 0][None, :] + X @ P[:, 1:].T
    out = np.sum(wbar * f, axis=1)
    return w, wbar, f, out


def anfis_premise_grad(a, b, c, P, X, y):
    """Mean squared error and its gradient w.r.t. every premise (a, b, c)."""
    n = X.shape[0]
    z, log_s, L, log_mu = _log_membership(a, b, c, X)
    log_w = log_mu.sum(axis=2)
    wbar = _normalize(log_w)
    f = P[:, 0][None, :] + X @ P[:, 1:].T
    out = np.sum(wbar * f, axis=1)
    resid = out - y
    E = float(resid @ resid) / n
    G = (2.0 / n) * resid[:, None] * wbar * (f - out[:, None])  # dE/dlog w, (n, R)
    live = G != 0.0
    q = expit(L)  # 1 - mu
    two_b = 2.0 * b[None, :, :]
    dlog_da = two_b * q / a[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog_dc = np.where(z != 0.0, two_b * q / (a[None, :, :] * z), 0.0)
        dlog_db = np.where(np.isfinite(log_s), -q * log_s, 0.0)
    Gx = np.where(live, G, 0.0)[:, :, None]
    mask = live[:, :, None]
    da = np.where(mask, Gx * dlog_da, 0.0).sum(axis=0)
    db = np.where(mask, Gx * dlog_db, 0.0).sum(axis=0)
    dc = np.where(mask, Gx * dlog_dc, 0.0).sum(axis=0)
    return E, da, db, dc


def subclust_potential(Xn, radius):
    """Mountain potential ``sum_j exp(-4 |x_i - x_j|^2 / radius^2)`` per row."""
    diff = Xn[:, None, :] - Xn[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.exp(-4.0 * d2 / (radius * radius)).sum(axis=1)
