"""Compiled simulation loops.

Every function here is wrapped by :func:`zrp._accel.kernel`: numba-compiled
by default, plain Python when ``ZRP_DISABLE_NUMBA`` is set.  Kernels draw
randomness exclusively through ``rng.random()`` so that the compiled and the
interpreted versions consume the generator identically.

Rate arrays ``r`` hold ``r[k] = r(k)`` for ``0 <= k <= m`` (one more entry
where tagged particles are involved).  Draw order per candidate event is
fixed: holding time first, then the mark coordinates in the order they are
listed in each docstring.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import kernel

# --- primitives -----------------------------------------------------------


@kernel
def _expo(rng, rate):
    return -math.log(1.0 - rng.random()) / rate


@kernel
def _site(rng, n):
    k = int(rng.random() * n)
    return k if k < n else n - 1


@kernel
def _grow(a, size):
    out = np.empty(max(2 * a.size, size + 1), dtype=a.dtype)
    out[: a.size] = a
    return out


@kernel
def _c2_source(x, r, n, u):
    """Index i with (1/n) sum_{k<i} r(x_k) < u <= (1/n) sum_{k<=i} r(x_k), or -1."""
    acc = 0.0
    for i in range(n):
        acc += r[x[i]] / n
        if u <= acc:
            return i
    return -1


@kernel
def _categorical(cum, u):
    # first index with u < cum[index]; cum is increasing with cum[-1] = total
    lo = 0
    hi = cum.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cum[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@kernel
def _gillespie_draw(x, r, weight, cumP, rng, scratch):
    """Holding time, source, destination for the exact jump chain.

    Draws: holding time, source (cumulative weights), destination
    (cumulative off-diagonal row of P).  Returns dt = inf when nothing moves.
    """
    n = x.size
    acc = 0.0
    for i in range(n):
        acc += r[x[i]] * weight[i]
        scratch[i] = acc
    if acc <= 0.0:
        return math.inf, -1, -1
    dt = _expo(rng, acc)
    i = _categorical(scratch, rng.random() * acc)
    j = _categorical(cumP[i], rng.random() * cumP[i, n - 1])
    return dt, i, j


# --- recorded single paths --------------------------------------------------


@kernel
def c1_record(x0, r, ucap, t_end, rng):
    """Construction 1 with every candidate point recorded.

    Candidate points arrive at rate n * ucap; marks are (source i,
    destination j, level u in (0, ucap]).  The move is applied iff i != j and
    u <= r(X_i(t-)).
    Returns (final state, times, sources, destinations, levels, applied).
    """
    n = x0.size
    x = x0.copy()
    cap = 64
    times = np.empty(cap, dtype=np.float64)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    lev = np.empty(cap, dtype=np.float64)
    app = np.empty(cap, dtype=np.bool_)
    total = n * ucap
    t = 0.0
    k = 0
    while True:
        t += _expo(rng, total)
        if t > t_end:
            break
        i = _site(rng, n)
        j = _site(rng, n)
        u = ucap * (1.0 - rng.random())
        ok = i != j and u <= r[x[i]]
        if ok:
            x[i] -= 1
            x[j] += 1
        if k == times.size:
            times = _grow(times, k)
            src = _grow(src, k)
            dst = _grow(dst, k)
            lev = _grow(lev, k)
            app = _grow(app, k)
        times[k] = t
        src[k] = i
        dst[k] = j
        lev[k] = u
        app[k] = ok
        k += 1
    return x, times[:k].copy(), src[:k].copy(), dst[:k].copy(), lev[:k].copy(), app[:k].copy()


@kernel
def c2_record(x0, r, ucap, t_end, rng):
    """Construction 2: points per destination j at rate ucap each.

    Marks are (destination j, level u in (0, ucap]); the source is found by
    the cumulative-rate interval test and is -1 when u lies above
    (1/n) sum_k r(x_k).  Recorded source/destination follow the same layout
    as :func:`c1_record`.
    """
    n = x0.size
    x = x0.copy()
    cap = 64
    times = np.empty(cap, dtype=np.float64)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    lev = np.empty(cap, dtype=np.float64)
    app = np.empty(cap, dtype=np.bool_)
    total = n * ucap
    t = 0.0
    k = 0
    while True:
        t += _expo(rng, total)
        if t > t_end:
            break
        j = _site(rng, n)
        u = ucap * (1.0 - rng.random())
        i = _c2_source(x, r, n, u)
        ok = i >= 0 and i != j
        if ok:
            x[i] -= 1
            x[j] += 1
        if k == times.size:
            times = _grow(times, k)
            src = _grow(src, k)
            dst = _grow(dst, k)
            lev = _grow(lev, k)
            app = _grow(app, k)
        times[k] = t
        src[k] = i
        dst[k] = j
        lev[k] = u
        app[k] = ok
        k += 1
    return x, times[:k].copy(), src[:k].copy(), dst[:k].copy(), lev[:k].copy(), app[:k].copy()


@kernel
def gillespie_record(x0, r, weight, cumP, t_end, rng):
    """Exact jump chain; every recorded event is an applied move."""
    n = x0.size
    x = x0.copy()
    scratch = np.empty(n, dtype=np.float64)
    cap = 64
    times = np.empty(cap, dtype=np.float64)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    t = 0.0
    k = 0
    while True:
        dt, i, j = _gillespie_draw(x, r, weight, cumP, rng, scratch)
        t += dt
        if t > t_end:
            break
        x[i] -= 1
        x[j] += 1
        if k == times.size:
            times = _grow(times, k)
            src = _grow(src, k)
            dst = _grow(dst, k)
        times[k] = t
        src[k] = i
        dst[k] = j
        k += 1
    return x, times[:k].copy(), src[:k].copy(), dst[:k].copy()


# --- batches of endpoints ---------------------------------------------------


@kernel
def c1_batch(x0, r, ucap, t_end, npaths, rng):
    """Final states, gains and losses of ``npaths`` construction-1 paths."""
    n = x0.size
    final = np.empty((npaths, n), dtype=np.int64)
    gains = np.zeros((npaths, n), dtype=np.int64)
    losses = np.zeros((npaths, n), dtype=np.int64)
    x = np.empty(n, dtype=np.int64)
    total = n * ucap
    for p in range(npaths):
        x[:] = x0
        t = _expo(rng, total)
        while t <= t_end:
            i = _site(rng, n)
            j = _site(rng, n)
            u = ucap * (1.0 - rng.random())
            if i != j and u <= r[x[i]]:
                x[i] -= 1
                x[j] += 1
                losses[p, i] += 1
                gains[p, j] += 1
            t += _expo(rng, total)
        final[p] = x
    return final, gains, losses


@kernel
def c2_batch(x0, r, ucap, t_end, npaths, rng):
    n = x0.size
    final = np.empty((npaths, n), dtype=np.int64)
    gains = np.zeros((npaths, n), dtype=np.int64)
    losses = np.zeros((npaths, n), dtype=np.int64)
    x = np.empty(n, dtype=np.int64)
    total = n * ucap
    for p in range(npaths):
        x[:] = x0
        t = _expo(rng, total)
        while t <= t_end:
            j = _site(rng, n)
            u = ucap * (1.0 - rng.random())
            i = _c2_source(x, r, n, u)
            if i >= 0 and i != j:
                x[i] -= 1
                x[j] += 1
                losses[p, i] += 1
                gains[p, j] += 1
            t += _expo(rng, total)
        final[p] = x
    return final, gains, losses


@kernel
def gillespie_batch(x0, r, weight, cumP, t_end, npaths, rng):
    n = x0.size
    final = np.empty((npaths, n), dtype=np.int64)
    gains = np.zeros((npaths, n), dtype=np.int64)
    losses = np.zeros((npaths, n), dtype=np.int64)
    x = np.empty(n, dtype=np.int64)
    scratch = np.empty(n, dtype=np.float64)
    for p in range(npaths):
        x[:] = x0
        t = 0.0
        while True:
            dt, i, j = _gillespie_draw(x, r, weight, cumP, rng, scratch)
            t += dt
            if t > t_end:
                break
            x[i] -= 1
            x[j] += 1
            losses[p, i] += 1
            gains[p, j] += 1
        final[p] = x
    return final, gains, losses


# --- emptying of one site under construction 1 -------------------------------


@kernel
def emptying_scan(x0, times, src, dst, lev, app, r, site, h):
    """Stopping times T_0..T_{h-1} read off a recorded construction-1 path.

    Stage k ends at the first point with source ``site``, destination
    elsewhere and level u <= r(h - k).  Returns (T, stages reached, loss
    violations, height violations, first time the site is empty or inf).
    """
    x = x0.copy()
    T = np.full(h, np.inf)
    stage = 0
    loss = 0
    bad_loss = 0
    bad_height = 0
    empty_at = math.inf if x[site] > 0 else 0.0
    for e in range(times.size):
        i = src[e]
        j = dst[e]
        ends = stage < h and i == site and j != site and lev[e] <= r[h - stage]
        if app[e]:
            x[i] -= 1
            x[j] += 1
            if i == site:
                loss += 1
        if ends:
            T[stage] = times[e]
            if loss < stage + 1:
                bad_loss += 1
            stage += 1
        if stage < h and x[site] < h - stage:
            bad_height += 1
        if x[site] == 0 and empty_at == math.inf:
            empty_at = times[e]
    return T, stage, bad_loss, bad_height, empty_at


@kernel
def emptying_batch(x0, r, ucap, site, h, tcap, npaths, rng):
    """Construction-1 paths run until the site has emptied after all h stages.

    Same draw order as :func:`c1_record`, so a batch of one path reproduces
    the recorded path drawn from an identically seeded generator.
    """
    n = x0.size
    T = np.full((npaths, h), np.inf)
    empty_at = np.full(npaths, np.inf)
    bad_loss = 0
    bad_height = 0
    x = np.empty(n, dtype=np.int64)
    total = n * ucap
    for p in range(npaths):
        x[:] = x0
        stage = 0
        loss = 0
        t = 0.0
        if x[site] == 0:
            empty_at[p] = 0.0
        while stage < h or empty_at[p] == math.inf:
            t += _expo(rng, total)
            if t > tcap:
                break
            i = _site(rng, n)
            j = _site(rng, n)
            u = ucap * (1.0 - rng.random())
            ends = stage < h and i == site and j != site and u <= r[h - stage]
            if i != j and u <= r[x[i]]:
                x[i] -= 1
                x[j] += 1
                if i == site:
                    loss += 1
            if ends:
                T[p, stage] = t
                if loss < stage + 1:
                    bad_loss += 1
                stage += 1
            if stage < h and x[site] < h - stage:
                bad_height += 1
            if x[site] == 0 and empty_at[p] == math.inf:
                empty_at[p] = t
    return T, empty_at, bad_loss, bad_height


# --- exponential observable along exact paths -------------------------------


@kernel
def _phi(x, expo):
    s = 0.0
    for i in range(x.size):
        s += expo[x[i]]
    return s / x.size


@kernel
def hitting_batch(x0, r, weight, cumP, expo, level, tcap, npaths, rng):
    """First time phi(X) <= level for exact paths; (T, censored)."""
    n = x0.size
    T = np.empty(npaths)
    censored = np.zeros(npaths, dtype=np.bool_)
    x = np.empty(n, dtype=np.int64)
    scratch = np.empty(n, dtype=np.float64)
    for p in range(npaths):
        x[:] = x0
        t = 0.0
        while _phi(x, expo) > level:
            dt, i, j = _gillespie_draw(x, r, weight, cumP, rng, scratch)
            if t + dt > tcap:
                t = tcap
                censored[p] = True
                break
            t += dt
            x[i] -= 1
            x[j] += 1
        T[p] = t
    return T, censored


@kernel
def event_batch(x0, r, weight, cumP, expo, level, t_grid, npaths, rng):
    """Per grid time g: max_i X_i(g), sup_{s<=g} max_i X_i(s), and
    sup_{s in [T, g]} phi(X(s)) with T the hitting time of {phi <= level}
    (-inf when T > g)."""
    n = x0.size
    G = t_grid.size
    final_max = np.empty((npaths, G), dtype=np.int64)
    sup_max = np.empty((npaths, G), dtype=np.int64)
    phi_sup = np.empty((npaths, G))
    x = np.empty(n, dtype=np.int64)
    scratch = np.empty(n, dtype=np.float64)
    for p in range(npaths):
        x[:] = x0
        t = 0.0
        cur_max = 0
        for i in range(n):
            cur_max = max(cur_max, x[i])
        run_max = cur_max
        phi_now = _phi(x, expo)
        hit = phi_now <= level
        run_phi = phi_now if hit else -math.inf
        g = 0
        while g < G:
            dt, i, j = _gillespie_draw(x, r, weight, cumP, rng, scratch)
            t_next = t + dt
            while g < G and t_grid[g] < t_next:
                final_max[p, g] = cur_max
                sup_max[p, g] = run_max
                phi_sup[p, g] = run_phi
                g += 1
            if g == G:
                break
            t = t_next
            x[i] -= 1
            x[j] += 1
            cur_max = 0
            for s in range(n):
                cur_max = max(cur_max, x[s])
            run_max = max(run_max, cur_max)
            phi_now = _phi(x, expo)
            if not hit and phi_now <= level:
                hit = True
            if hit:
                run_phi = max(run_phi, phi_now)
    return final_max, sup_max, phi_sup


# --- generic chain on an enumerated state space -----------------------------


@kernel
def ctmc_batch(indptr, indices, rates, exit_rates, start, t_grid, f, g, h, npaths, rng):
    """Exact paths of a chain given by CSR off-diagonal rates.

    Returns, per path and grid time, f(X_t), int_0^t g(X_u) du and
    int_0^t h(X_u) du (exact sums of value times holding time).
    """
    G = t_grid.size
    F = np.empty((npaths, G))
    IG = np.empty((npaths, G))
    IH = np.empty((npaths, G))
    for p in range(npaths):
        s = start
        t = 0.0
        ig = 0.0
        ih = 0.0
        gi = 0
        while gi < G:
            q = exit_rates[s]
            t_next = t + _expo(rng, q) if q > 0 else math.inf
            while gi < G and t_grid[gi] < t_next:
                F[p, gi] = f[s]
                IG[p, gi] = ig + g[s] * (t_grid[gi] - t)
                IH[p, gi] = ih + h[s] * (t_grid[gi] - t)
                gi += 1
            if gi == G:
                break
            ig += g[s] * (t_next - t)
            ih += h[s] * (t_next - t)
            t = t_next
            u = rng.random() * q
            acc = 0.0
            nxt = indices[indptr[s + 1] - 1]
            for e in range(indptr[s], indptr[s + 1]):
                acc += rates[e]
                if u < acc:
                    nxt = indices[e]
                    break
            s = nxt
    return F, IG, IH


# --- tagged particles -------------------------------------------------------


@kernel
def _coupled_event(x, tags, phi, r, delta, ucap, dcap, expo, level, rng):
    """One candidate point of the joint stream Xi + Theta.

    Draws: stream selector, then (i, j, u) for a Xi point or (k, u) for a
    Theta point.  ``tags`` holds [I, J]; ``phi`` holds the current value of
    the exponential observable when a constraint is active.
    Returns (kind, a, b, u, code):
      kind 0 (Xi):    a = source, b = destination, code 0 rejected/self-loop,
                      1 applied, 2 suppressed by the constraint;
      kind 1 (Theta): a = destination, b unused, code bit 0 = I moved,
                      bit 1 = J moved (a move onto the current site does not count).
    """
    n = x.size
    xi_rate = n * ucap
    if rng.random() * (xi_rate + dcap) < xi_rate:
        i = _site(rng, n)
        j = _site(rng, n)
        u = ucap * (1.0 - rng.random())
        code = 0
        if i != j and u <= r[x[i]]:
            code = 1
            if level < math.inf:
                d = (expo[x[j] + 1] - expo[x[j]] + expo[x[i] - 1] - expo[x[i]]) / n
                if phi[0] + d > level:
                    code = 2
                else:
                    phi[0] += d
            if code == 1:
                x[i] -= 1
                x[j] += 1
        return 0, i, j, u, code
    k = _site(rng, n)
    u = dcap * (1.0 - rng.random())
    move_i = u <= delta[x[tags[0]]]
    move_j = u <= delta[x[tags[1]]]
    code = 0
    if move_i and tags[0] != k:
        code += 1
    if move_j and tags[1] != k:
        code += 2
    if move_i:
        tags[0] = k
    if move_j:
        tags[1] = k
    return 1, k, -1, u, code


@kernel
def coupled_record(x0, i0, j0, r, delta, ucap, dcap, expo, level, t_end, rng):
    """Recorded joint path of (X, I, J).

    Returns (final x, times, kinds, a, b, levels, codes, I after each point,
    J after each point, tau, first suppression time).
    """
    n = x0.size
    x = x0.copy()
    tags = np.array([i0, j0], dtype=np.int64)
    phi = np.array([_phi(x, expo) if level < math.inf else 0.0])
    cap = 64
    times = np.empty(cap)
    kinds = np.empty(cap, dtype=np.int64)
    aa = np.empty(cap, dtype=np.int64)
    bb = np.empty(cap, dtype=np.int64)
    lev = np.empty(cap)
    codes = np.empty(cap, dtype=np.int64)
    ipath = np.empty(cap, dtype=np.int64)
    jpath = np.empty(cap, dtype=np.int64)
    tau = 0.0 if i0 == j0 else math.inf
    supp = math.inf
    total = n * ucap + dcap
    t = 0.0
    k = 0
    while True:
        t += _expo(rng, total)
        if t > t_end:
            break
        kind, a, b, u, code = _coupled_event(x, tags, phi, r, delta, ucap, dcap, expo, level, rng)
        if kind == 0 and code == 2 and supp == math.inf:
            supp = t
        if tau == math.inf and tags[0] == tags[1]:
            tau = t
        if k == times.size:
            times = _grow(times, k)
            kinds = _grow(kinds, k)
            aa = _grow(aa, k)
            bb = _grow(bb, k)
            lev = _grow(lev, k)
            codes = _grow(codes, k)
            ipath = _grow(ipath, k)
            jpath = _grow(jpath, k)
        times[k] = t
        kinds[k] = kind
        aa[k] = a
        bb[k] = b
        lev[k] = u
        codes[k] = code
        ipath[k] = tags[0]
        jpath[k] = tags[1]
        k += 1
    return (x, times[:k].copy(), kinds[:k].copy(), aa[:k].copy(), bb[:k].copy(), lev[:k].copy(),
            codes[:k].copy(), ipath[:k].copy(), jpath[:k].copy(), tau, supp)


@kernel
def coupled_batch(x0, i0, j0, r, delta, ucap, dcap, expo, level, t_end, t_grid, c2, kmax,
                  stop_at_tau, npaths, rng):
    """Batch of joint paths.

    Per path: tau (inf if not reached by t_end), first suppression time,
    final X, final tags, background occupancies at both tags on ``t_grid``
    (-1 past the stopping point), and the schedule T_1..T_kmax with
    T_1 = c2 * (X_I(0) v X_J(0)) + 1 and T_k = T_{k-1} + c2 * (X_I v X_J)(T_{k-1}) + 1.
    With ``stop_at_tau`` a path stops at coalescence (grid and schedule are
    then only filled up to tau).
    """
    n = x0.size
    G = t_grid.size
    tau = np.full(npaths, np.inf)
    supp = np.full(npaths, np.inf)
    final = np.empty((npaths, n), dtype=np.int64)
    tags_out = np.empty((npaths, 2), dtype=np.int64)
    occ_i = np.full((npaths, G), -1, dtype=np.int64)
    occ_j = np.full((npaths, G), -1, dtype=np.int64)
    sched = np.full((npaths, kmax), np.inf)
    x = np.empty(n, dtype=np.int64)
    tags = np.empty(2, dtype=np.int64)
    phi = np.zeros(1)
    total = n * ucap + dcap
    for p in range(npaths):
        x[:] = x0
        tags[0] = i0
        tags[1] = j0
        if level < math.inf:
            phi[0] = _phi(x, expo)
        if i0 == j0:
            tau[p] = 0.0
        gi = 0
        kk = 0
        t_k = math.inf
        if kmax > 0:
            t_k = c2 * max(x[i0], x[j0]) + 1.0
        t = 0.0
        while True:
            if stop_at_tau and tau[p] <= t:
                break
            t_next = t + _expo(rng, total)
            while gi < G and t_grid[gi] < t_next and t_grid[gi] <= t_end:
                occ_i[p, gi] = x[tags[0]]
                occ_j[p, gi] = x[tags[1]]
                gi += 1
            while kk < kmax and t_k < t_next and t_k <= t_end:
                sched[p, kk] = t_k
                t_k = t_k + c2 * max(x[tags[0]], x[tags[1]]) + 1.0
                kk += 1
            if t_next > t_end:
                break
            t = t_next
            kind, a, b, u, code = _coupled_event(x, tags, phi, r, delta, ucap, dcap, expo, level, rng)
            if kind == 0 and code == 2 and supp[p] == math.inf:
                supp[p] = t
            if tau[p] == math.inf and tags[0] == tags[1]:
                tau[p] = t
        final[p] = x
        tags_out[p, 0] = tags[0]
        tags_out[p, 1] = tags[1]
    return tau, supp, final, tags_out, occ_i, occ_j, sched
