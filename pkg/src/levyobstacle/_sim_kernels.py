"""Path-simulation kernels: a per-path numba loop and a path-vectorised numpy twin.

Both walk the same event sequence.  Path ``i`` consumes uniforms
``2j`` (inter-arrival) and ``2j + 1`` (mark) for its ``j``-th retained jump;
between events the state follows the drift-plus-compensator flow, which is
integrated exactly for affine drift with constant amplitude and by explicit
Euler otherwise.
"""
import math

import numpy as np

from ._backend import njit
from .coefficients import (AMP_CONSTANT, AMP_TANH, DRIFT_AFFINE, DRIFT_CLAMPED,
                           DRIFT_CONSTANT, DRIFT_TANH, eval_amp_np, eval_drift_np)
from .rng import uniform_at, uniforms_np


# ---------------------------------------------------------------- numba side
@njit
def _drift_nb(kind, p, x):
    if kind == DRIFT_CONSTANT:
        return p[0]
    if kind == DRIFT_AFFINE:
        return p[0] - p[1] * x
    if kind == DRIFT_TANH:
        return p[0] + p[1] * p[3] * math.tanh((x - p[2]) / p[3])
    if kind == DRIFT_CLAMPED:
        return p[0] - p[1] * min(max(x, p[2]), p[3])
    return math.nan


@njit
def _amp_nb(kind, q, x):
    if kind == AMP_CONSTANT:
        return q[0]
    if kind == AMP_TANH:
        return q[0] + q[1] * math.tanh(x - q[2])
    return math.nan


@njit
def _flow_nb(x, h, dk, dp, ak, ap, comp, exact):
    if h <= 0.0:
        return x
    if exact:
        beta = dp[0] - ap[0] * comp
        kappa = dp[1] if dk == DRIFT_AFFINE else 0.0
        if kappa == 0.0:
            return x + beta * h
        return x * math.exp(-kappa * h) + beta * (-math.expm1(-kappa * h)) / kappa
    return x + (_drift_nb(dk, dp, x) - _amp_nb(ak, ap, x) * comp) * h


@njit
def _mark_nb(u, cum, s0, s1, sgn):
    target = u * cum[cum.shape[0] - 1]
    j = np.searchsorted(cum, target, side="right") - 1
    n = s0.shape[0]
    if j < 0:
        j = 0
    elif j > n - 1:
        j = n - 1
    width = cum[j + 1] - cum[j]
    frac = (target - cum[j]) / width if width > 0.0 else 0.5
    return sgn[j] * math.exp(s0[j] + frac * (s1[j] - s0[j]))


@njit(nogil=True)
def count_events_nb(keys, lam, horizon, counts):
    for i in range(keys.shape[0]):
        c = 0
        if lam > 0.0:
            t = -math.log(uniform_at(keys[i], 0)) / lam
            while t <= horizon:
                c += 1
                t = t - math.log(uniform_at(keys[i], 2 * c)) / lam
        counts[i] = c


@njit(nogil=True)
def simulate_nb(keys, x0, n_steps, dtg, horizon, lam, cum, s0, s1, sgn, dk, dp, ak, ap,
                comp, exact, states, record, jptr, jt, jy, bad):
    for i in range(keys.shape[0]):
        key = keys[i]
        x = x0[i]
        states[i, 0] = x
        cnt = 0
        t_cur = 0.0
        t_next = -math.log(uniform_at(key, 0)) / lam if lam > 0.0 else math.inf
        w = jptr[i] if record else 0
        for k in range(n_steps):
            t_end = horizon if k == n_steps - 1 else (k + 1) * dtg
            while t_next <= t_end:
                x = _flow_nb(x, t_next - t_cur, dk, dp, ak, ap, comp, exact)
                y = _mark_nb(uniform_at(key, 2 * cnt + 1), cum, s0, s1, sgn)
                x = x + _amp_nb(ak, ap, x) * y
                if record:
                    jt[w] = t_next
                    jy[w] = y
                    w += 1
                t_cur = t_next
                cnt += 1
                t_next = t_cur - math.log(uniform_at(key, 2 * cnt)) / lam
            x = _flow_nb(x, t_end - t_cur, dk, dp, ak, ap, comp, exact)
            t_cur = t_end
            states[i, k + 1] = x
            if not math.isfinite(x) and bad[0] < 0:
                bad[0] = i
                bad[1] = k + 1


# ---------------------------------------------------------------- numpy side
def _flow_np(x, h, dk, dp, ak, ap, comp, exact, drift_fn=None, amp_fn=None):
    if exact:
        beta = dp[0] - ap[0] * comp
        kappa = dp[1] if dk == DRIFT_AFFINE else 0.0
        if kappa == 0.0:
            out = x + beta * h
        else:
            out = x * np.exp(-kappa * h) + beta * (-np.expm1(-kappa * h)) / kappa
    else:
        b = drift_fn(x) if drift_fn is not None else eval_drift_np(dk, dp, x)
        a = amp_fn(x) if amp_fn is not None else eval_amp_np(ak, ap, x)
        out = x + (b - a * comp) * h
    return np.where(h > 0.0, out, x)


def _mark_np(u, cum, s0, s1, sgn):
    target = u * cum[-1]
    j = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, s0.size - 1)
    width = cum[j + 1] - cum[j]
    safe = np.where(width > 0.0, width, 1.0)
    frac = np.where(width > 0.0, (target - cum[j]) / safe, 0.5)
    return sgn[j] * np.exp(s0[j] + frac * (s1[j] - s0[j]))


def count_events_np(keys, lam, horizon):
    n = keys.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    if lam <= 0.0:
        return counts
    t = -np.log(uniforms_np(keys, np.zeros(n, np.uint64))) / lam
    alive = t <= horizon
    while alive.any():
        idx = np.nonzero(alive)[0]
        counts[idx] += 1
        c = counts[idx].astype(np.uint64)
        t[idx] = t[idx] - np.log(uniforms_np(keys[idx], 2 * c)) / lam
        alive[idx] = t[idx] <= horizon
    return counts


def simulate_np(keys, x0, n_steps, dtg, horizon, lam, cum, s0, s1, sgn, dk, dp, ak, ap,
                comp, exact, states, record, jptr, jt, jy, drift_fn=None, amp_fn=None):
    n = keys.shape[0]
    x = np.array(x0, dtype=float)
    states[:, 0] = x
    cnt = np.zeros(n, dtype=np.int64)
    t_cur = np.zeros(n)
    if lam > 0.0:
        t_next = -np.log(uniforms_np(keys, np.zeros(n, np.uint64))) / lam
    else:
        t_next = np.full(n, np.inf)
    wpos = jptr[:-1].copy() if record else None

    def flow(xs, hs):
        return _flow_np(xs, hs, dk, dp, ak, ap, comp, exact, drift_fn, amp_fn)

    for k in range(n_steps):
        t_end = horizon if k == n_steps - 1 else (k + 1) * dtg
        while True:
            idx = np.nonzero(t_next <= t_end)[0]
            if idx.size == 0:
                break
            xi = flow(x[idx], t_next[idx] - t_cur[idx])
            c = cnt[idx].astype(np.uint64)
            y = _mark_np(uniforms_np(keys[idx], 2 * c + np.uint64(1)), cum, s0, s1, sgn)
            a = amp_fn(xi) if amp_fn is not None else eval_amp_np(ak, ap, xi)
            x[idx] = xi + a * y
            if record:
                jt[wpos[idx]] = t_next[idx]
                jy[wpos[idx]] = y
                wpos[idx] += 1
            t_cur[idx] = t_next[idx]
            cnt[idx] += 1
            c = cnt[idx].astype(np.uint64)
            t_next[idx] = t_cur[idx] - np.log(uniforms_np(keys[idx], 2 * c)) / lam
        x = flow(x, t_end - t_cur)
        t_cur[:] = t_end
        states[:, k + 1] = x
