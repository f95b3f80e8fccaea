"""Pure-NumPy reference kernels for the scalar MLP forward/tangent/backward
passes. A compiled Cython twin (`_speedups`) implements the same signatures;
`_backend` picks one at import time.

Layout (shared by both backends):
  x        (n,)            scalar inputs
  w_in     (w,)            first-layer input weights
  b        (depth, w)      biases per hidden layer
  a_hidden (depth-1, w, w) hidden-to-hidden weights (row = output unit)
  w_skip   (depth-1, w)    input passthrough into layers 2..depth (only read
                           when has_skip, the input-convex wiring)
  a_out    (w,)            hidden-to-output weights
  w_out    float           input passthrough into the output (has_skip only)
  b_out    float           output bias

The forward pass propagates, per `order`, the value (0), plus the derivative
with respect to the scalar input (1), plus the second derivative (2). The
tangent quantities are part of the recorded tape so the backward pass can
produce parameter gradients of losses that involve both net(x) and net'(x).
"""

import numpy as np


def _act(pre):
    # ELU(alpha=1) with its first/second derivatives; the exp branch is taken
    # at pre == 0 so the pieces agree there
    neg = pre <= 0.0
    ex = np.exp(np.where(neg, pre, 0.0))
    z = np.where(neg, ex - 1.0, pre)
    e1 = np.where(neg, ex, 1.0)
    e2 = np.where(neg, ex, 0.0)
    return z, e1, e2


def forward(x, w_in, b, a_hidden, w_skip, a_out, w_out, b_out, has_skip,
            order=0, want_cache=False):
    """Batched forward pass; returns (y, dy, d2y, cache).

    dy/d2y are None below the requested order; cache is None unless
    requested. A cache forces order >= 1 (the tape stores tangents).
    """
    if want_cache and order < 1:
        order = 1
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    depth, w = b.shape

    z = np.empty((depth, n, w))
    e1s = np.empty((depth, n, w)) if want_cache else None
    e2s = np.empty((depth, n, w)) if want_cache else None
    zdot = np.empty((depth, n, w)) if order >= 1 else None
    hdot = np.empty((depth, n, w)) if want_cache else None

    pre = np.outer(x, w_in) + b[0]
    zl, e1, e2 = _act(pre)
    z[0] = zl
    if order >= 1:
        zdot[0] = e1 * w_in
    if order >= 2:
        zddot = e2 * (w_in * w_in)
    if want_cache:
        e1s[0], e2s[0] = e1, e2
        hdot[0] = np.broadcast_to(w_in, (n, w))

    for l in range(1, depth):
        A = a_hidden[l - 1]
        pre = z[l - 1] @ A.T + b[l]
        if has_skip:
            pre += np.outer(x, w_skip[l - 1])
        zl, e1, e2 = _act(pre)
        z[l] = zl
        if order >= 1:
            hd = zdot[l - 1] @ A.T
            if has_skip:
                hd += w_skip[l - 1]
            zdot[l] = e1 * hd
            if want_cache:
                hdot[l] = hd
        if order >= 2:
            hdd = zddot @ A.T
            zddot = e2 * hd * hd + e1 * hdd
        if want_cache:
            e1s[l], e2s[l] = e1, e2

    y = z[depth - 1] @ a_out + b_out
    dy = d2y = None
    if has_skip:
        y = y + w_out * x
    if order >= 1:
        dy = zdot[depth - 1] @ a_out
        if has_skip:
            dy = dy + w_out
    if order >= 2:
        d2y = zddot @ a_out

    cache = (x, z, zdot, e1s, e2s, hdot) if want_cache else None
    return y, dy, d2y, cache


def backward(cache, w_in, a_hidden, w_skip, a_out, w_out, has_skip,
             gy, gdy=None, want_gx=False):
    """Reverse pass over a recorded tape.

    gy is dLoss/d(y) per sample; gdy, when given, is dLoss/d(dy/dx) per
    sample (reverse through the tangent propagation). Returns a dict of
    parameter gradients plus d(loss)/d(x) when requested.
    """
    x, z, zdot, e1s, e2s, hdot = cache
    n = x.shape[0]
    depth, w = z.shape[0], z.shape[2]
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    tangent = gdy is not None
    if tangent:
        gdy = np.ascontiguousarray(gdy, dtype=np.float64)

    g_b = np.zeros((depth, w))
    g_A = np.zeros_like(a_hidden)
    g_skip = np.zeros_like(w_skip)
    gx = np.zeros(n) if want_gx else None

    gz = np.outer(gy, a_out)
    gzd = np.outer(gdy, a_out) if tangent else None
    g_aout = z[depth - 1].T @ gy
    if tangent:
        g_aout += zdot[depth - 1].T @ gdy
    g_bout = float(gy.sum())
    g_wout = 0.0
    if has_skip:
        g_wout = float(gy @ x)
        if tangent:
            g_wout += float(gdy.sum())
        if want_gx:
            gx += gy * w_out

    for l in range(depth - 1, 0, -1):
        if tangent:
            gh = gz * e1s[l] + gzd * (e2s[l] * hdot[l])
            ghd = gzd * e1s[l]
        else:
            gh = gz * e1s[l]
            ghd = None
        A = a_hidden[l - 1]
        g_A[l - 1] = gh.T @ z[l - 1]
        if tangent:
            g_A[l - 1] += ghd.T @ zdot[l - 1]
        g_b[l] = gh.sum(axis=0)
        if has_skip:
            g_skip[l - 1] = gh.T @ x
            if tangent:
                g_skip[l - 1] += ghd.sum(axis=0)
            if want_gx:
                gx += gh @ w_skip[l - 1]
        gz = gh @ A
        if tangent:
            gzd = ghd @ A

    if tangent:
        gh = gz * e1s[0] + gzd * (e2s[0] * hdot[0])
        ghd = gzd * e1s[0]
        g_win = gh.T @ x + ghd.sum(axis=0)
    else:
        gh = gz * e1s[0]
        g_win = gh.T @ x
    g_b[0] = gh.sum(axis=0)
    if want_gx:
        gx += gh @ w_in

    return g_win, g_b, g_A, g_skip, g_aout, g_wout, g_bout, gx
