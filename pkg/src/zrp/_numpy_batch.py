"""Vectorised (path-parallel) endpoint samplers used when numba is off.

They advance all live paths one candidate event at a time with array
operations.  Their laws equal those of the compiled kernels but the random
streams are consumed differently, so results differ path by path.
"""

from __future__ import annotations

import numpy as np


def _finish(n_paths, n):
    return (np.zeros((n_paths, n), dtype=np.int64), np.zeros((n_paths, n), dtype=np.int64))


def c1_batch(x0, r, ucap, t_end, npaths, rng):
    n = x0.size
    X = np.tile(x0, (npaths, 1))
    gains, losses = _finish(npaths, n)
    t = rng.exponential(1.0 / (n * ucap), npaths)
    live = np.nonzero(t <= t_end)[0]
    while live.size:
        i = rng.integers(0, n, live.size)
        j = rng.integers(0, n, live.size)
        u = ucap * (1.0 - rng.random(live.size))
        ok = (i != j) & (u <= r[X[live, i]])
        p, i, j = live[ok], i[ok], j[ok]
        np.subtract.at(X, (p, i), 1)
        np.add.at(X, (p, j), 1)
        np.add.at(losses, (p, i), 1)
        np.add.at(gains, (p, j), 1)
        t[live] += rng.exponential(1.0 / (n * ucap), live.size)
        live = live[t[live] <= t_end]
    return X, gains, losses


def c2_batch(x0, r, ucap, t_end, npaths, rng):
    n = x0.size
    X = np.tile(x0, (npaths, 1))
    gains, losses = _finish(npaths, n)
    t = rng.exponential(1.0 / (n * ucap), npaths)
    live = np.nonzero(t <= t_end)[0]
    while live.size:
        j = rng.integers(0, n, live.size)
        u = ucap * (1.0 - rng.random(live.size))
        cum = np.cumsum(r[X[live]], axis=1) / n
        i = (u[:, None] > cum).sum(axis=1)  # first slot with u <= cum, n if none
        ok = (i < n) & (i != j)
        p, i, j = live[ok], i[ok], j[ok]
        np.subtract.at(X, (p, i), 1)
        np.add.at(X, (p, j), 1)
        np.add.at(losses, (p, i), 1)
        np.add.at(gains, (p, j), 1)
        t[live] += rng.exponential(1.0 / (n * ucap), live.size)
        live = live[t[live] <= t_end]
    return X, gains, losses


def gillespie_batch(x0, r, weight, cumP, t_end, npaths, rng):
    n = x0.size
    X = np.tile(x0, (npaths, 1))
    gains, losses = _finish(npaths, n)
    t = np.zeros(npaths)
    live = np.arange(npaths)
    while live.size:
        cum = np.cumsum(r[X[live]] * weight, axis=1)
        total = cum[:, -1]
        dt = rng.exponential(1.0, live.size) / np.where(total > 0, total, np.nan)
        t[live] += np.nan_to_num(dt, nan=np.inf)
        keep = t[live] <= t_end
        live, cum, total = live[keep], cum[keep], total[keep]
        if not live.size:
            break
        u = rng.random(live.size) * total
        i = (u[:, None] >= cum).sum(axis=1)
        rows = cumP[i]
        v = rng.random(live.size) * rows[:, -1]
        j = (v[:, None] >= rows).sum(axis=1)
        np.subtract.at(X, (live, i), 1)
        np.add.at(X, (live, j), 1)
        np.add.at(losses, (live, i), 1)
        np.add.at(gains, (live, j), 1)
    return X, gains, losses
