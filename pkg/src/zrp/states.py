"""Ranking of the state space Omega = {x in Z_+^n : sum x = m}.

States are ordered lexicographically from the top: index 0 is (m, 0, ..., 0)
and the last index is (0, ..., 0, m).  For n = 2, m = 2 the order is
(2, 0), (1, 1), (0, 2).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, StateSpaceCapError

DEFAULT_STATE_CAP = 200_000


def num_states(n: int, m: int) -> int:
    return math.comb(m + n - 1, n - 1)


class StateIndex:
    """Bijection between Omega(n, m) and {0, ..., |Omega| - 1}.

    The rank of x is sum_i C(rem_i - x_i - 1 + k_i, k_i) over sites with
    rem_i > x_i, where rem_i is the number of particles not yet placed before
    site i and k_i = n - i - 1 (it counts the states that agree with x up to
    site i - 1 and hold more particles at site i).
    """

    def __init__(self, n: int, m: int, cap: int = DEFAULT_STATE_CAP):
        if n < 1 or m < 0:
            raise ConfigError(f"invalid state space n={n}, m={m}", ["n", "m"])
        self.n = int(n)
        self.m = int(m)
        self.size = num_states(self.n, self.m)
        if self.size > cap:
            raise StateSpaceCapError(
                f"|Omega| = C({m + n - 1}, {n - 1}) = {self.size} exceeds the cap {cap}; "
                "use the Monte Carlo engines for this size"
            )
        # binom[a, k] = C(a, k) for 0 <= a <= m + n, 0 <= k <= n
        a = np.arange(self.m + self.n + 1)
        self._binom = np.array([[math.comb(int(ai), k) for k in range(self.n + 1)] for ai in a], dtype=np.int64)
        self._states = None

    def __len__(self):
        return self.size

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.n:
            raise ConfigError(f"state has {x.shape[-1]} sites, expected {self.n}", ["x"])
        if np.any(x < 0) or np.any(x.sum(axis=-1) != self.m):
            raise ConfigError(f"state(s) not in Omega(n={self.n}, m={self.m})", ["x"])
        return x

    def rank(self, x) -> int:
        return int(self.rank_many(np.asarray(x)[None, :])[0])

    def rank_many(self, X) -> np.ndarray:
        """Vectorised rank of the rows of X."""
        X = self._check(np.atleast_2d(X))
        rem = np.full(X.shape[0], self.m, dtype=np.int64)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        for i in range(self.n - 1):
            k = self.n - i - 1
            gap = rem - X[:, i]
            top = np.where(gap > 0, gap - 1 + k, 0)
            idx += np.where(gap > 0, self._binom[top, k], 0)
            rem = rem - X[:, i]
        return idx

    def unrank(self, i: int) -> np.ndarray:
        i = int(i)
        if not 0 <= i < self.size:
            raise ConfigError(f"index {i} out of range [0, {self.size})", ["index"])
        x = np.zeros(self.n, dtype=np.int64)
        rem = self.m
        for site in range(self.n - 1):
            k = self.n - site - 1
            v = rem
            while True:
                # states with value v at this site: compositions of rem - v into k parts
                block = math.comb(rem - v + k - 1, k - 1)
                if i < block:
                    break
                i -= block
                v -= 1
            x[site] = v
            rem -= v
        x[-1] = rem
        return x

    def states(self) -> np.ndarray:
        """All states as a read-only (|Omega|, n) array in rank order."""
        if self._states is None:
            self._states = enumerate_states(self.n, self.m)
            self._states.setflags(write=False)
        return self._states


def enumerate_states(n: int, m: int) -> np.ndarray:
    rem = np.array([m], dtype=np.int64)
    prefix = np.zeros((1, 0), dtype=np.int64)
    for _ in range(n - 1):
        counts = rem + 1
        parent = np.repeat(np.arange(rem.size), counts)
        offset = np.arange(parent.size) - np.repeat(np.cumsum(counts) - counts, counts)
        vals = rem[parent] - offset
        prefix = np.column_stack([prefix[parent], vals])
        rem = rem[parent] - vals
    return np.column_stack([prefix, rem])
