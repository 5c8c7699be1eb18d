"""Forward/backward primitives for the demand network.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and the cache and returns the input gradient followed by
parameter gradients.  Arrays are float64, channel-first ``(N, C, H, W)``.
"""
from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def sigmoid(x):
    """Logistic function, evaluated branch-wise so neither side overflows."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- 3x3 convolution, stride 1, zero padding 1 -------------------------------

def conv_forward(x, w, b):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    # channel-last padded copy; im2col by one contiguous slice write per tap
    xp = np.zeros((n, h + 2 * ph, wd + 2 * pw, cin))
    xp[:, ph:ph + h, pw:pw + wd, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((n, h, wd, kh * kw, cin))
    for k in range(kh * kw):
        i, j = divmod(k, kw)
        cols[:, :, :, k, :] = xp[:, i:i + h, j:j + wd, :]
    cols = cols.reshape(n * h * wd, kh * kw * cin)
    out = cols @ w.transpose(0, 2, 3, 1).reshape(cout, -1).T + b
    out = out.reshape(n, h, wd, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, cols, w)


def conv_backward(dout, cache, need_dx=True):
    (n, cin, h, wd), cols, w = cache
    cout, _, kh, kw = w.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * h * wd, cout)
    dw = (dmat.T @ cols).reshape(cout, kh, kw, cin).transpose(0, 3, 1, 2)
    db = dmat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    # input gradient is a convolution of dout with the flipped, transposed kernel
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx, _ = conv_forward(dout, wt, np.zeros(cin))
    return dx, dw, db


# -- batch normalization over (N, H, W) per channel ---------------------------

def bn_forward(x, gamma, beta, running_mean, running_var, training, momentum=0.1, update=True):
    """Batch norm; in training mode the running statistics are updated in place."""
    if training:
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * m / max(m - 1, 1)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv, gamma, training)


def bn_backward(dout, cache):
    xhat, inv, gamma, training = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if training:
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = inv[None, :, None, None] / m * (m * dxhat - s1 - xhat * s2)
    else:
        dx = dxhat * inv[None, :, None, None]
    return dx, dgamma, dbeta


# -- spatial attention --------------------------------------------------------

def attention_forward(e, p):
    """Spatial self-attention with a residual connection.

    Three 1x1 projections reduce ``e`` (N, C, H, W) to per-position scalars
    m1, m2, m3.  The attention map is ``a[n, j, i] = softmax_i(m1[i] * m2[j])``;
    the attended vector ``a @ m3`` is reshaped to H x W, lifted back to C
    channels by a 1x1 convolution (``wa``, ``ba``) and added to ``e``.
    """
    n, c, h, w = e.shape
    flat = e.reshape(n, c, h * w)
    proj = np.stack([p["att_w1"], p["att_w2"], p["att_w3"]])
    m = proj @ flat  # n, 3, hw
    m1 = m[:, 0] + p["att_b1"][0]
    m2 = m[:, 1] + p["att_b2"][0]
    m3 = m[:, 2] + p["att_b3"][0]
    # row max of m2[j] * m1[i] over i, without materializing a reduction
    hi = m1.max(axis=1, keepdims=True)
    lo = m1.min(axis=1, keepdims=True)
    rowmax = np.where(m2 >= 0, m2 * hi, m2 * lo)
    a = m2[:, :, None] * m1[:, None, :]
    a -= rowmax[:, :, None]
    np.exp(a, out=a)
    a /= a.sum(axis=2, keepdims=True)
    o = (a @ m3[:, :, None])[:, :, 0]
    out = p["att_wa"][None, :, None] * o[:, None, :] + p["att_ba"][None, :, None] + flat
    return out.reshape(n, c, h, w), (flat, m1, m2, m3, a, o, (n, c, h, w))


def attention_backward(dout, cache, p):
    flat, m1, m2, m3, a, o, shape = cache
    n, c, h, w = shape
    d = dout.reshape(n, c, h * w)
    g = {}
    g["att_wa"] = np.einsum("ncj,nj->c", d, o)
    g["att_ba"] = d.sum(axis=(0, 2))
    do = (p["att_wa"][None, None, :] @ d)[:, 0]
    dm3 = (do[:, None, :] @ a)[:, 0]
    # dlog = a * (da - rowsum(a * da)) with da[j, i] = do[j] * m3[i]
    am3 = (a @ m3[:, :, None])[:, :, 0]
    dlog = a * (m3[:, None, :] - am3[:, :, None])
    dlog *= do[:, :, None]
    dm2 = (dlog @ m1[:, :, None])[:, :, 0]
    dm1 = (m2[:, None, :] @ dlog)[:, 0]
    dm = np.stack([dm1, dm2, dm3], axis=1)  # n, 3, hw
    gw = np.einsum("nkp,ncp->kc", dm, flat)
    for k in range(3):
        g[f"att_w{k + 1}"] = gw[k]
        g[f"att_b{k + 1}"] = np.array([dm[:, k].sum()])
    proj = np.stack([p["att_w1"], p["att_w2"], p["att_w3"]])
    dflat = d + np.einsum("kc,nkp->ncp", proj, dm)
    return dflat.reshape(n, c, h, w), g


# -- dense ------------------------------------------------------------------

def dense_forward(x, w, b):
    return x @ w.T + b, x


def dense_backward(dout, x, w):
    return dout @ w, dout.T @ x, dout.sum(axis=0)
