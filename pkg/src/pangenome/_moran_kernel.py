"""Compiled Gillespie kernel for the finite-population model.

Genomes are stored as shared, reference-counted *versions*: ``indiv[i]`` is
the version carried by individual ``i`` and row ``v`` of ``genes`` holds
its first ``glen[v]`` gene ids.  Resampling only moves a reference; a
version is copied when an individual sharing it is about to change.
At most ``N`` versions are referenced at any time, so a pool of ``N + 1``
rows never runs out.
"""
from __future__ import annotations

import numba
import numpy as np

from ._rand import uniform_index

STATUS_OK = 0
STATUS_GENOME_FULL = 1

# integer state
S_TOTAL = 0  # sum of genome sizes
S_NEXT_ID = 1
S_MAXLEN = 2  # upper bound on genome sizes
S_NFREE = 3
S_SINCE_RESCAN = 4
N_STATE = 5

EV_RESAMPLE = 0
EV_LOSS = 1
EV_GAIN = 2
EV_HGT = 3


def new_state(N: int, gene_cap: int):
    indiv = np.zeros(N, dtype=np.int64)
    genes = np.zeros((N + 1, gene_cap), dtype=np.int64)
    glen = np.zeros(N + 1, dtype=np.int64)
    gref = np.zeros(N + 1, dtype=np.int64)
    free = np.zeros(N + 1, dtype=np.int64)
    S = np.zeros(N_STATE, dtype=np.int64)
    # every individual starts on the empty version 0
    gref[0] = N
    for v in range(1, N + 1):
        free[v - 1] = N + 1 - v
    S[S_NFREE] = N
    return indiv, genes, glen, gref, free, S


@numba.njit(nogil=True, cache=True)
def _release(v, gref, free, S):
    gref[v] -= 1
    if gref[v] == 0:
        free[S[S_NFREE]] = v
        S[S_NFREE] += 1


@numba.njit(nogil=True, cache=True)
def _private(i, indiv, genes, glen, gref, free, S):
    """Version of individual ``i`` that it alone references, copying if shared."""
    v = indiv[i]
    if gref[v] == 1:
        return v
    S[S_NFREE] -= 1
    w = free[S[S_NFREE]]
    m = glen[v]
    for g in range(m):
        genes[w, g] = genes[v, g]
    glen[w] = m
    gref[w] = 1
    gref[v] -= 1
    indiv[i] = w
    return w


@numba.njit(nogil=True, cache=True)
def _pick_by_size(rng, indiv, glen, S):
    """Individual drawn with probability proportional to its genome size."""
    N = indiv.shape[0]
    bound = S[S_MAXLEN]
    while True:
        i = uniform_index(rng, N)
        if rng.random() * bound < glen[indiv[i]]:
            return i


@numba.njit(nogil=True, cache=True)
def _rescan_maxlen(indiv, glen, S):
    m = 0
    for i in range(indiv.shape[0]):
        if glen[indiv[i]] > m:
            m = glen[indiv[i]]
    S[S_MAXLEN] = m
    S[S_SINCE_RESCAN] = 0


@numba.njit(nogil=True, cache=True)
def advance(
    rng, indiv, genes, glen, gref, free, S, clock,
    theta, rho, gamma, pair_rate, t_end, max_events, counts, compensator,
):
    """Simulate events until ``clock[0]`` reaches ``t_end`` or ``max_events`` events occurred.

    ``pair_rate`` is the resampling rate per ordered pair.  ``counts``
    tallies events by type; ``compensator[0, c]`` and ``compensator[1, c]``
    accumulate ``p_c`` and ``p_c (1 - p_c)`` of each realised step, the
    expected count and its variance given the visited states.

    Returns ``(status, events)``.
    """
    N = indiv.shape[0]
    cap = genes.shape[1]
    r_res = pair_rate * N * (N - 1)
    r_gain = 0.5 * theta * N
    t = clock[0]
    events = 0
    while events < max_events:
        if S[S_MAXLEN] >= cap - 1 or S[S_SINCE_RESCAN] > 4 * N:
            _rescan_maxlen(indiv, glen, S)
            if S[S_MAXLEN] >= cap - 1:
                clock[0] = t
                return STATUS_GENOME_FULL, events
        tot = S[S_TOTAL]
        r_loss = 0.5 * rho * tot
        r_hgt = 0.5 * gamma * (N - 1) / N * tot
        rate = r_res + r_loss + r_gain + r_hgt
        dt = rng.exponential(1.0 / rate)
        if t + dt > t_end:
            t = t_end
            break
        t += dt
        events += 1
        S[S_SINCE_RESCAN] += 1
        p0 = r_res / rate
        p1 = r_loss / rate
        p2 = r_gain / rate
        p3 = r_hgt / rate
        compensator[0, 0] += p0
        compensator[0, 1] += p1
        compensator[0, 2] += p2
        compensator[0, 3] += p3
        compensator[1, 0] += p0 * (1.0 - p0)
        compensator[1, 1] += p1 * (1.0 - p1)
        compensator[1, 2] += p2 * (1.0 - p2)
        compensator[1, 3] += p3 * (1.0 - p3)
        u = rng.random() * rate
        if u < r_res:
            # u / r_res is uniform on [0, 1) and indexes the ordered pair
            pair = int(u / r_res * (N * (N - 1)))
            if pair >= N * (N - 1):
                pair = N * (N - 1) - 1
            i = pair // (N - 1)
            j = pair % (N - 1)
            if j >= i:
                j += 1
            vi = indiv[i]
            vj = indiv[j]
            if vi != vj:
                S[S_TOTAL] += glen[vi] - glen[vj]
                gref[vi] += 1
                _release(vj, gref, free, S)
                indiv[j] = vi
            counts[EV_RESAMPLE] += 1
        elif u < r_res + r_loss:
            i = _pick_by_size(rng, indiv, glen, S)
            v = _private(i, indiv, genes, glen, gref, free, S)
            g = uniform_index(rng, glen[v])
            glen[v] -= 1
            genes[v, g] = genes[v, glen[v]]
            S[S_TOTAL] -= 1
            counts[EV_LOSS] += 1
        elif u < r_res + r_loss + r_gain:
            i = uniform_index(rng, N)
            v = _private(i, indiv, genes, glen, gref, free, S)
            genes[v, glen[v]] = S[S_NEXT_ID]
            S[S_NEXT_ID] += 1
            glen[v] += 1
            if glen[v] > S[S_MAXLEN]:
                S[S_MAXLEN] = glen[v]
            S[S_TOTAL] += 1
            counts[EV_GAIN] += 1
        else:
            d = _pick_by_size(rng, indiv, glen, S)
            vd = indiv[d]
            gene = genes[vd, uniform_index(rng, glen[vd])]
            a = uniform_index(rng, N - 1)
            if a >= d:
                a += 1
            va = indiv[a]
            present = False
            for g in range(glen[va]):
                if genes[va, g] == gene:
                    present = True
                    break
            if not present:
                v = _private(a, indiv, genes, glen, gref, free, S)
                genes[v, glen[v]] = gene
                glen[v] += 1
                if glen[v] > S[S_MAXLEN]:
                    S[S_MAXLEN] = glen[v]
                S[S_TOTAL] += 1
            counts[EV_HGT] += 1
    clock[0] = t
    return STATUS_OK, events


@numba.njit(nogil=True, cache=True)
def sample_spectrum(rng, indiv, genes, glen, n, scratch_idx, scratch_genes, spectrum):
    """Spectrum of ``n`` individuals drawn without replacement; returns the first one's genome size."""
    N = indiv.shape[0]
    for i in range(N):
        scratch_idx[i] = i
    m = 0
    first = 0
    for k in range(n):
        r = k + uniform_index(rng, N - k)
        tmp = scratch_idx[k]
        scratch_idx[k] = scratch_idx[r]
        scratch_idx[r] = tmp
        v = indiv[scratch_idx[k]]
        if k == 0:
            first = glen[v]
        for g in range(glen[v]):
            scratch_genes[m] = genes[v, g]
            m += 1
    for k in range(n):
        spectrum[k] = 0
    if m == 0:
        return first
    buf = np.sort(scratch_genes[:m])
    run = 1
    for g in range(1, m):
        if buf[g] == buf[g - 1]:
            run += 1
        else:
            spectrum[run - 1] += 1
            run = 1
    spectrum[run - 1] += 1
    return first


@numba.njit(nogil=True, cache=True)
def reset_tagged(indiv, genes, glen, gref, free, S, carriers):
    """Population in which the first ``carriers`` individuals hold gene 0 and nothing else."""
    N = indiv.shape[0]
    glen[0] = 0
    glen[1] = 1
    genes[1, 0] = 0
    gref[0] = N - carriers
    gref[1] = carriers
    nfree = 0
    for v in range(N, 1, -1):
        gref[v] = 0
        free[nfree] = v
        nfree += 1
    # version 0 or 1 may be unreferenced
    for v in range(2):
        if gref[v] == 0:
            free[nfree] = v
            nfree += 1
    S[S_NFREE] = nfree
    for i in range(N):
        indiv[i] = 1 if i < carriers else 0
    S[S_TOTAL] = carriers
    S[S_NEXT_ID] = 1
    S[S_MAXLEN] = 1
    S[S_SINCE_RESCAN] = 0


@numba.njit(nogil=True, cache=True)
def drift_windows(rng, indiv, genes, glen, gref, free, S, rho, gamma, pair_rate, carriers, dt, out):
    """Change in the tagged-gene carrier count over ``out.shape[0]`` windows of length ``dt``."""
    counts = np.zeros(4, dtype=np.int64)
    comp = np.zeros((2, 4))
    clock = np.zeros(1)
    for w in range(out.shape[0]):
        reset_tagged(indiv, genes, glen, gref, free, S, carriers)
        clock[0] = 0.0
        status, _ = advance(
            rng, indiv, genes, glen, gref, free, S, clock,
            0.0, rho, gamma, pair_rate, dt, np.iinfo(np.int64).max, counts, comp,
        )
        if status != STATUS_OK:
            return status, w
        out[w] = S[S_TOTAL] - carriers
    return STATUS_OK, out.shape[0]
