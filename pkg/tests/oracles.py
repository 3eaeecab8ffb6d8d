"""Independent reference computations used by the tests."""

import math

import numpy as np


def naive_pearson(x, z):
    n = len(x)
    mx = sum(x) / n
    mz = sum(z) / n
    sxz = sum((x[i] - mx) * (z[i] - mz) for i in range(n))
    sxx = sum((x[i] - mx) ** 2 for i in range(n))
    szz = sum((z[i] - mz) ** 2 for i in range(n))
    return sxz / (math.sqrt(sxx) * math.sqrt(szz))


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def naive_linear_decoder(weight, bias, x):
    """Triple loop over time, channel and lag; future samples past the end are zero."""
    t_len, n_ch = x.shape
    n_lag = weight.shape[1]
    y = np.zeros(t_len)
    for t in range(t_len):
        acc = bias
        for c in range(n_ch):
            for tau in range(n_lag):
                if t + tau < t_len:
                    acc += weight[c, tau] * x[t + tau, c]
        y[t] = acc
    return y


def adam_reference(theta, g, m, v, step, lr, b1, b2, eps, wd):
    """Straight-line AdamW update written element by element."""
    out_theta, out_m, out_v = [], [], []
    for i in range(len(theta)):
        mi = b1 * m[i] + (1 - b1) * g[i]
        vi = b2 * v[i] + (1 - b2) * g[i] * g[i]
        mhat = mi / (1 - b1 ** step)
        vhat = vi / (1 - b2 ** step)
        out_theta.append(theta[i] * (1 - lr * wd) - lr * mhat / (math.sqrt(vhat) + eps))
        out_m.append(mi)
        out_v.append(vi)
    return np.array(out_theta), np.array(out_m), np.array(out_v)
