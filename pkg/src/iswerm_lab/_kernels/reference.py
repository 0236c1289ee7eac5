"""Pure-Python kernels, mirrored line-for-line by the compiled extension.

These loops are the hot paths of the library: the sequential eps-greedy
collection run (per-round greedy refits) and the adaptive empirical-process
simulator.  The compiled module ``_fast`` implements the same arithmetic in
the same order on C doubles; since Python floats are IEEE doubles, the two
backends produce bit-identical outputs, which the test suite asserts
exactly.

Keep any edit here in lockstep with ``_fast.pyx``.
"""

from __future__ import annotations

import math

import numpy as np


def _chol_solve(GM, b, jitter, p, L, w, out):
    # Factor (GM + jitter*I) = L L^T, then solve for out.  GM is a PSD Gram
    # matrix, so the jittered pivots stay positive; the fallback to jitter
    # guards against pathological cancellation only.
    for j in range(p):
        s = GM[j][j] + jitter
        Lj = L[j]
        for k in range(j):
            s -= Lj[k] * Lj[k]
        if s <= 0.0:
            s = jitter
        s = math.sqrt(s)
        Lj[j] = s
        for i in range(j + 1, p):
            t = GM[i][j]
            Li = L[i]
            for k in range(j):
                t -= Li[k] * Lj[k]
            Li[j] = t / s
    for i in range(p):
        t = b[i]
        Li = L[i]
        for k in range(i):
            t -= Li[k] * w[k]
        w[i] = t / Li[i]
    for i in range(p - 1, -1, -1):
        t = w[i]
        for k in range(i + 1, p):
            t -= L[k][i] * out[k]
        out[i] = t / L[i][i]


def collect_eps_greedy(X, mu, sd, eps, u_act, z, jitter=1e-8):
    """Run one eps-greedy collection pass with per-round linear greedy refits.

    All randomness is pre-drawn: ``u_act[t]`` is the uniform driving the
    action draw at round t and ``z[t]`` the standard normal driving the
    outcome.  Warm-start rounds (until every arm has been pulled once)
    sample uniformly, record propensity 1/K and epsilon 1.0.  After that the
    greedy arm is the argmin of per-arm least-squares fits on all earlier
    rounds, refit every round; the action draw decomposes the uniform so
    that u < eps picks an explore arm and u >= eps the greedy arm.

    Returns ``(A, Y, G, EPS_rec, GREEDY)`` where GREEDY[t] is the greedy arm
    at round t (-1 during warm-start).
    """
    T, d = X.shape
    K = mu.shape[1]
    p = d + 1
    Xl = X.tolist()
    mul = mu.tolist()
    sdl = sd.tolist()
    epsl = eps.tolist()
    ul = u_act.tolist()
    zl = z.tolist()

    gram = [[[0.0] * p for _ in range(p)] for _ in range(K)]
    bvec = [[0.0] * p for _ in range(K)]
    theta = [[0.0] * p for _ in range(K)]
    dirty = [False] * K
    pulled = [False] * K
    n_covered = 0

    L = [[0.0] * p for _ in range(p)]
    wrk = [0.0] * p
    phi = [0.0] * p

    A = np.empty(T, dtype=np.int64)
    Y = np.empty(T, dtype=np.float64)
    G = np.empty(T, dtype=np.float64)
    E = np.empty(T, dtype=np.float64)
    GR = np.empty(T, dtype=np.int64)

    for t in range(T):
        xt = Xl[t]
        phi[0] = 1.0
        for i in range(d):
            phi[i + 1] = xt[i]

        if n_covered < K:
            u = ul[t]
            a = int(u * K)
            if a >= K:
                a = K - 1
            g = 1.0 / K
            e_rec = 1.0
            grd = -1
        else:
            for arm in range(K):
                if dirty[arm]:
                    _chol_solve(gram[arm], bvec[arm], jitter, p, L, wrk, theta[arm])
                    dirty[arm] = False
            th = theta[0]
            bestv = 0.0
            for i in range(p):
                bestv += phi[i] * th[i]
            best = 0
            for arm in range(1, K):
                th = theta[arm]
                v = 0.0
                for i in range(p):
                    v += phi[i] * th[i]
                if v < bestv:
                    best = arm
                    bestv = v
            e = epsl[t]
            u = ul[t]
            if u < e:
                a = int(u / e * K)
                if a >= K:
                    a = K - 1
            else:
                a = best
            if a == best:
                g = 1.0 - e + e / K
            else:
                g = e / K
            e_rec = e
            grd = best

        y = mul[t][a] + sdl[t][a] * zl[t]

        ba = bvec[a]
        ga = gram[a]
        for i in range(p):
            fi = phi[i]
            ba[i] += fi * y
            gi = ga[i]
            for j in range(p):
                gi[j] += fi * phi[j]
        dirty[a] = True
        if not pulled[a]:
            pulled[a] = True
            n_covered += 1

        A[t] = a
        Y[t] = y
        G[t] = g
        E[t] = e_rec
        GR[t] = grd

    return A, Y, G, E, GR


def sup_process_rounds(s_idx, mu, sd, eps, u_act, z, xi, cref, gstar_arm):
    """Simulate T adaptive rounds and accumulate centered weighted processes.

    The environment is finite-support: ``s_idx[t]`` is the pre-drawn state
    of round t, ``mu``/``sd`` are (S, K) mean and noise tables.  The greedy
    model is tabular (per-cell outcome mean, falling back to the arm's
    global mean for unseen cells); exploration follows the same eps-greedy
    draw as the collector.  For each function table ``xi[f]`` (shape (S, K))
    with reference mean ``cref[f] = sum_s p_s sum_a g*(a) xi[f][s, a]``, the
    return value is

        m[f] = (1/T) sum_t [ (g*(A_t) / g_t(A_t)) xi[f][S_t, A_t] - cref[f] ],

    whose per-round summands are martingale differences because importance
    weighting makes each round's conditional mean equal cref[f].
    """
    T = len(s_idx)
    S, K = mu.shape
    F = xi.shape[0]

    sl = s_idx.tolist()
    mul = mu.tolist()
    sdl = sd.tolist()
    epsl = eps.tolist()
    ul = u_act.tolist()
    zl = z.tolist()
    xil = xi.tolist()
    crefl = cref.tolist()
    gsl = gstar_arm.tolist()

    cell_sum = [[0.0] * K for _ in range(S)]
    cell_cnt = [[0] * K for _ in range(S)]
    arm_sum = [0.0] * K
    arm_cnt = [0] * K
    n_covered = 0

    m = [0.0] * F

    for t in range(T):
        s = sl[t]

        if n_covered < K:
            u = ul[t]
            a = int(u * K)
            if a >= K:
                a = K - 1
            g = 1.0 / K
        else:
            best = 0
            if cell_cnt[s][0] > 0:
                bestv = cell_sum[s][0] / cell_cnt[s][0]
            else:
                bestv = arm_sum[0] / arm_cnt[0]
            for arm in range(1, K):
                if cell_cnt[s][arm] > 0:
                    v = cell_sum[s][arm] / cell_cnt[s][arm]
                else:
                    v = arm_sum[arm] / arm_cnt[arm]
                if v < bestv:
                    best = arm
                    bestv = v
            e = epsl[t]
            u = ul[t]
            if u < e:
                a = int(u / e * K)
                if a >= K:
                    a = K - 1
            else:
                a = best
            if a == best:
                g = 1.0 - e + e / K
            else:
                g = e / K

        y = mul[s][a] + sdl[s][a] * zl[t]
        w_is = gsl[a] / g
        for f in range(F):
            m[f] += w_is * xil[f][s][a] - crefl[f]

        cell_sum[s][a] += y
        cell_cnt[s][a] += 1
        if arm_cnt[a] == 0:
            n_covered += 1
        arm_sum[a] += y
        arm_cnt[a] += 1

    out = np.empty(F, dtype=np.float64)
    for f in range(F):
        out[f] = m[f] / T
    return out
