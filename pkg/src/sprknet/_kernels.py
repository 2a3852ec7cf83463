"""Compiled rollout kernels for the learned-force problem.

Rows (trajectories) are independent in the forward pass, so each kernel
loops over rows outermost and works on length-``n`` vectors. The numpy
implementation in :mod:`sprknet.composed` is the reference these kernels
are tested against.
"""

import numpy as np
from numba import njit

TANH, SIGMOID = 0, 1


@njit(cache=True, inline="always")
def _act(x, kind):
    if kind == TANH:
        return np.tanh(x)
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True, inline="always")
def _dact(y, kind):
    if kind == TANH:
        return 1.0 - y * y
    return y * (1.0 - y)


@njit(cache=True)
def _net_forward(x, W1, W2, be1, be2, e1, e2, W0, b0, h, b, B, shared, kind,
                 t_pin, t_yq, t_qin, t_yp, out):
    N, _, n, _ = W1.shape
    s = b.shape[0]
    Q = np.zeros(n)
    P = x.copy()
    a = np.empty(n)
    for l in range(N):
        for i in range(s):
            j = 0 if shared else i
            if b[i] != 0.0:
                for u in range(n):
                    t_pin[l, i, u] = P[u]
                    acc = be2[l, j, u]
                    for v in range(n):
                        acc += W2[l, j, u, v] * P[v]
                    a[u] = _act(acc, kind)
                    t_yq[l, i, u] = a[u]
                for v in range(n):
                    acc = e2[l, j, v]
                    for u in range(n):
                        acc += W2[l, j, u, v] * a[u]
                    Q[v] += h * b[i] * acc
            if B[i] != 0.0:
                for u in range(n):
                    t_qin[l, i, u] = Q[u]
                    acc = be1[l, j, u]
                    for v in range(n):
                        acc += W1[l, j, u, v] * Q[v]
                    a[u] = _act(acc, kind)
                    t_yp[l, i, u] = a[u]
                for v in range(n):
                    acc = e1[l, j, v]
                    for u in range(n):
                        acc -= W1[l, j, u, v] * a[u]
                    P[v] += h * B[i] * acc
    m = W0.shape[0]
    for r in range(m):
        acc = b0[r]
        for u in range(n):
            acc += W0[r, u] * Q[u] + W0[r, n + u] * P[u]
        out[r] = acc
    return Q, P


@njit(cache=True)
def _net_backward(gy, zq, zp, W1, W2, W0, h, b, B, shared, kind,
                  t_pin, t_yq, t_qin, t_yp,
                  gW1, gW2, gbe1, gbe2, ge1, ge2, gW0, gb0):
    N, _, n, _ = W1.shape
    s = b.shape[0]
    m = W0.shape[0]
    qbar = np.zeros(n)
    pbar = np.zeros(n)
    for r in range(m):
        gb0[r] += gy[r]
        for u in range(n):
            gW0[r, u] += gy[r] * zq[u]
            gW0[r, n + u] += gy[r] * zp[u]
            qbar[u] += gy[r] * W0[r, u]
            pbar[u] += gy[r] * W0[r, n + u]
    v_ = np.empty(n)
    d = np.empty(n)
    for l in range(N - 1, -1, -1):
        for i in range(s - 1, -1, -1):
            j = 0 if shared else i
            if B[i] != 0.0:
                c = h * B[i]
                for u in range(n):
                    v_[u] = c * pbar[u]
                    ge1[l, j, u] += v_[u]
                for u in range(n):
                    acc = 0.0
                    for w in range(n):
                        acc += W1[l, j, u, w] * v_[w]
                    d[u] = -acc * _dact(t_yp[l, i, u], kind)
                    gbe1[l, j, u] += d[u]
                for u in range(n):
                    for w in range(n):
                        gW1[l, j, u, w] += d[u] * t_qin[l, i, w] - t_yp[l, i, u] * v_[w]
                for w in range(n):
                    acc = 0.0
                    for u in range(n):
                        acc += d[u] * W1[l, j, u, w]
                    qbar[w] += acc
            if b[i] != 0.0:
                c = h * b[i]
                for u in range(n):
                    v_[u] = c * qbar[u]
                    ge2[l, j, u] += v_[u]
                for u in range(n):
                    acc = 0.0
                    for w in range(n):
                        acc += W2[l, j, u, w] * v_[w]
                    d[u] = acc * _dact(t_yq[l, i, u], kind)
                    gbe2[l, j, u] += d[u]
                for u in range(n):
                    for w in range(n):
                        gW2[l, j, u, w] += t_yq[l, i, u] * v_[w] + d[u] * t_pin[l, i, w]
                for w in range(n):
                    acc = 0.0
                    for u in range(n):
                        acc += d[u] * W2[l, j, u, w]
                    pbar[w] += acc
    return pbar


@njit(cache=True)
def rollout_forward(z0, dt, n_steps, W1, W2, be1, be2, e1, e2, W0, b0, h, b, B, shared, kind):
    rows, dim = z0.shape
    n = dim // 2
    N = W1.shape[0]
    s = b.shape[0]
    states = np.empty((n_steps + 1, rows, dim))
    t_pin = np.zeros((rows, n_steps, s, N, s, n))
    t_yq = np.zeros_like(t_pin)
    t_qin = np.zeros_like(t_pin)
    t_yp = np.zeros_like(t_pin)
    t_z = np.zeros((rows, n_steps, s, 2 * n))
    out = np.empty(W0.shape[0])
    for r in range(rows):
        q = z0[r, :n].copy()
        p = z0[r, n:].copy()
        states[0, r] = z0[r]
        for k in range(n_steps):
            for i in range(s):
                if b[i] != 0.0:
                    for u in range(n):
                        q[u] += dt[r] * b[i] * p[u]
                if B[i] != 0.0:
                    Qn, Pn = _net_forward(q, W1, W2, be1, be2, e1, e2, W0, b0, h, b, B, shared, kind,
                                          t_pin[r, k, i], t_yq[r, k, i], t_qin[r, k, i], t_yp[r, k, i], out)
                    t_z[r, k, i, :n] = Qn
                    t_z[r, k, i, n:] = Pn
                    for u in range(n):
                        p[u] += dt[r] * B[i] * out[u]
            states[k + 1, r, :n] = q
            states[k + 1, r, n:] = p
    return states, (t_pin, t_yq, t_qin, t_yp, t_z)


@njit(cache=True)
def rollout_backward(dstates, dt, W1, W2, W0, h, b, B, shared, kind, tape,
                     gW1, gW2, gbe1, gbe2, ge1, ge2, gW0, gb0):
    t_pin, t_yq, t_qin, t_yp, t_z = tape
    L, rows, dim = dstates.shape
    n = dim // 2
    s = b.shape[0]
    gy = np.empty(W0.shape[0])
    for r in range(rows):
        qbar = np.zeros(n)
        pbar = np.zeros(n)
        for k in range(L - 2, -1, -1):
            for u in range(n):
                qbar[u] += dstates[k + 1, r, u]
                pbar[u] += dstates[k + 1, r, n + u]
            for i in range(s - 1, -1, -1):
                if B[i] != 0.0:
                    for u in range(n):
                        gy[u] = dt[r] * B[i] * pbar[u]
                    gx = _net_backward(gy, t_z[r, k, i, :n], t_z[r, k, i, n:], W1, W2, W0, h, b, B,
                                       shared, kind, t_pin[r, k, i], t_yq[r, k, i], t_qin[r, k, i],
                                       t_yp[r, k, i], gW1, gW2, gbe1, gbe2, ge1, ge2, gW0, gb0)
                    for u in range(n):
                        qbar[u] += gx[u]
                if b[i] != 0.0:
                    for u in range(n):
                        pbar[u] += dt[r] * b[i] * qbar[u]
