"""Compiled kernels for the gene genealogy samplers.

The coupled sampler stores the union of all graphs built so far as a set of
lineage *segments*.  Segment ``s`` is the ancestry of one individual over
``[seg_birth[s], xend[s])``; at ``xend[s]`` it either merges into segment
``seg_merge[s]`` or reaches the horizon of what has been explored
(``seg_merge[s] == -1``).  Building the graph of the next gene walks this
structure: gene lines ride explored segments and follow their merges, and
once a gene line leaves the explored region it becomes a *frontier* line
whose ancestry is sampled fresh.  Frontier lines coalesce with every
explored segment alive at that time, and with each other, at rate 1 per
pair; pairs of explored segments never re-coalesce.

A gene line's identity is its *local line* id, dense within one gene
graph and assigned in birth order.  Lines are born as samples, as the
product of a coalescence, or as the incoming line of a split; they die by
loss or by being absorbed into a coalescence.

Kernels signal a full workspace by returning ``STATUS_CAPACITY`` so the
caller can enlarge the arrays and replay the block from the same random
state.
"""
from __future__ import annotations

import numba
import numpy as np

from ._rand import uniform_index

STATUS_OK = 0
STATUS_CAPACITY = 1
STATUS_INCONSISTENT = 2
STATUS_TOO_MANY_LINES = -1

KIND_SAMPLE = 0
KIND_MERGED = 1
KIND_INCOMING = 2

EV_COALESCENCE = 0
EV_LOSS = 1
EV_SPLIT = 2

# float workspace
F_SEG_BIRTH = 0
F_SEG_END = 1
F_XEND = 2
F_LBIRTH = 3
F_LDEATH = 4
N_FLOAT = 5

# integer workspace
I_SEG_MERGE = 0
I_SEG_LINE = 1
I_BIRTH_ORDER = 2
I_END_ORDER = 3
I_ACT = 4
I_ACT_POS = 5
I_TOUCHED = 6
I_LKIND = 7
I_LA = 8
I_LB = 9
I_LSEG = 10
I_ALIVE = 11
I_ALIVE_POS = 12
I_FRONT = 13
I_FRONT_POS = 14
I_STAMP = 15
I_STACK = 16
I_CARRIERS = 17
N_INT = 18
SEG_ARRAYS = (I_SEG_MERGE, I_SEG_LINE, I_BIRTH_ORDER, I_END_ORDER, I_ACT, I_ACT_POS, I_TOUCHED)

# counters
C_NSEG = 0
C_NORDER = 1
C_STAMP = 2
C_NREC = 3
C_NLINES = 4
C_NSPLIT = 5
C_NCARRIERS = 6
N_COUNTERS = 7


def new_workspace(n: int, seg_cap: int, line_cap: int):
    seg_cap = max(seg_cap, n + 1)
    line_cap = max(line_cap, 2 * n + 1)
    fl = []
    for i in range(N_FLOAT):
        fl.append(np.zeros(seg_cap if i <= F_XEND else line_cap))
    il = []
    for i in range(N_INT):
        size = seg_cap if i in SEG_ARRAYS else line_cap
        if i == I_CARRIERS:
            size = n
        il.append(np.full(size, -1, dtype=np.int64))
    il[I_STAMP][:] = 0
    return tuple(fl), tuple(il), np.zeros(N_COUNTERS, dtype=np.int64)


@numba.njit(nogil=True, cache=True)
def _insert_sorted(order, cnt, key, s):
    v = key[s]
    lo = 0
    hi = cnt
    while lo < hi:
        mid = (lo + hi) // 2
        if key[order[mid]] <= v:
            lo = mid + 1
        else:
            hi = mid
    for i in range(cnt, lo, -1):
        order[i] = order[i - 1]
    order[lo] = s


@numba.njit(nogil=True, cache=True)
def _remove_sorted(order, cnt, s):
    i = 0
    while order[i] != s:
        i += 1
    for j in range(i, cnt - 1):
        order[j] = order[j + 1]


@numba.njit(nogil=True, cache=True)
def _set_add(items, pos, count, x):
    items[count] = x
    pos[x] = count
    return count + 1


@numba.njit(nogil=True, cache=True)
def _set_remove(items, pos, count, x):
    i = pos[x]
    last = items[count - 1]
    items[i] = last
    pos[last] = i
    pos[x] = -1
    return count - 1


@numba.njit(nogil=True, cache=True)
def _record(rec_t, rec_i, C, gene, t, kind, a, b, c):
    r = C[C_NREC]
    if r >= rec_t.shape[0]:
        return False
    rec_t[r] = t
    rec_i[r, 0] = gene
    rec_i[r, 1] = kind
    rec_i[r, 2] = a
    rec_i[r, 3] = b
    rec_i[r, 4] = c
    C[C_NREC] = r + 1
    return True


@numba.njit(nogil=True, cache=True)
def _new_line(Fa, Ia, nlines, t, kind, a, b, seg):
    Fa[F_LBIRTH][nlines] = t
    Fa[F_LDEATH][nlines] = np.inf
    Ia[I_LKIND][nlines] = kind
    Ia[I_LA][nlines] = a
    Ia[I_LB][nlines] = b
    Ia[I_LSEG][nlines] = seg
    Ia[I_ALIVE_POS][nlines] = -1
    Ia[I_FRONT_POS][nlines] = -1
    Ia[I_STAMP][nlines] = 0
    return nlines + 1


@numba.njit(nogil=True, cache=True)
def run_gene(rng, Fa, Ia, C, n, rho, gamma, gene, max_alive, record, rec_t, rec_i):
    """Build one gene graph over the current union and fold it into the union.

    Returns ``(status, length)``.  Lines are left in the workspace for the
    reachability pass; ``C[C_NLINES]`` holds their count.
    """
    seg_birth = Fa[F_SEG_BIRTH]
    seg_end = Fa[F_SEG_END]
    xend = Fa[F_XEND]
    lbirth = Fa[F_LBIRTH]
    ldeath = Fa[F_LDEATH]
    seg_merge = Ia[I_SEG_MERGE]
    seg_line = Ia[I_SEG_LINE]
    birth_order = Ia[I_BIRTH_ORDER]
    end_order = Ia[I_END_ORDER]
    act = Ia[I_ACT]
    act_pos = Ia[I_ACT_POS]
    touched = Ia[I_TOUCHED]
    lkind = Ia[I_LKIND]
    la = Ia[I_LA]
    lb = Ia[I_LB]
    lseg = Ia[I_LSEG]
    alive = Ia[I_ALIVE]
    alive_pos = Ia[I_ALIVE_POS]
    front = Ia[I_FRONT]
    front_pos = Ia[I_FRONT_POS]

    seg_cap = seg_birth.shape[0]
    line_cap = lbirth.shape[0]
    nseg0 = C[C_NSEG]
    nseg = nseg0
    norder = C[C_NORDER]
    nlines = 0
    nalive = 0
    nfront = 0
    nact = 0
    ntouched = 0
    nsplit = 0
    half_loss = 0.5 * rho
    half_split = 0.5 * gamma

    for i in range(n):
        nlines = _new_line(Fa, Ia, nlines, 0.0, KIND_SAMPLE, i, -1, i)
        nalive = _set_add(alive, alive_pos, nalive, i)
        seg_line[i] = i

    t = 0.0
    bi = 0
    ei = 0
    status = STATUS_OK
    while nalive > 0:
        tb = np.inf
        if bi < norder:
            tb = seg_birth[birth_order[bi]]
        te = np.inf
        if ei < norder:
            te = xend[end_order[ei]]
        tnext = min(tb, te)
        rate = nalive * (half_loss + half_split) + nfront * nact + 0.5 * nfront * (nfront - 1)
        dt = np.inf
        if rate > 0.0:
            dt = rng.exponential(1.0 / rate)
        if t + dt >= tnext:
            # deterministic breakpoint of the explored union
            t = tnext
            if tb <= te:
                s = birth_order[bi]
                bi += 1
                nact = _set_add(act, act_pos, nact, s)
                continue
            s = end_order[ei]
            ei += 1
            if act_pos[s] >= 0:
                nact = _set_remove(act, act_pos, nact, s)
            ln = seg_line[s]
            if ln < 0:
                continue
            seg_line[s] = -1
            m = seg_merge[s]
            if m >= 0:
                if act_pos[m] < 0:
                    # a merge target must be explored at the merge time
                    status = STATUS_INCONSISTENT
                    break
                other = seg_line[m]
                if other >= 0:
                    if nlines >= line_cap:
                        status = STATUS_CAPACITY
                        break
                    c = nlines
                    nlines = _new_line(Fa, Ia, nlines, t, KIND_MERGED, ln, other, m)
                    ldeath[ln] = t
                    ldeath[other] = t
                    nalive = _set_remove(alive, alive_pos, nalive, ln)
                    nalive = _set_remove(alive, alive_pos, nalive, other)
                    nalive = _set_add(alive, alive_pos, nalive, c)
                    seg_line[m] = c
                    if record and not _record(rec_t, rec_i, C, gene, t, EV_COALESCENCE, ln, other, c):
                        status = STATUS_CAPACITY
                        break
                else:
                    seg_line[m] = ln
                    lseg[ln] = m
            else:
                # explored history ends here; continue the lineage as a frontier line
                seg_end[s] = np.inf
                touched[ntouched] = s
                ntouched += 1
                seg_line[s] = ln
                nfront = _set_add(front, front_pos, nfront, ln)
            continue

        t += dt
        u = rng.random() * rate
        if u < nalive * half_loss:
            ln = alive[uniform_index(rng, nalive)]
            s = lseg[ln]
            seg_line[s] = -1
            if front_pos[ln] >= 0:
                nfront = _set_remove(front, front_pos, nfront, ln)
                seg_end[s] = t
                seg_merge[s] = -1
            ldeath[ln] = t
            nalive = _set_remove(alive, alive_pos, nalive, ln)
            if record and not _record(rec_t, rec_i, C, gene, t, EV_LOSS, ln, -1, -1):
                status = STATUS_CAPACITY
                break
        elif u < nalive * (half_loss + half_split):
            if nseg >= seg_cap or nlines >= line_cap or ntouched >= seg_cap:
                status = STATUS_CAPACITY
                break
            ln = alive[uniform_index(rng, nalive)]
            s = nseg
            nseg += 1
            seg_birth[s] = t
            seg_end[s] = np.inf
            seg_merge[s] = -1
            act_pos[s] = -1
            touched[ntouched] = s
            ntouched += 1
            c = nlines
            nlines = _new_line(Fa, Ia, nlines, t, KIND_INCOMING, ln, -1, s)
            seg_line[s] = c
            nalive = _set_add(alive, alive_pos, nalive, c)
            nfront = _set_add(front, front_pos, nfront, c)
            nsplit += 1
            if nalive > max_alive:
                status = STATUS_TOO_MANY_LINES
                break
            if record and not _record(rec_t, rec_i, C, gene, t, EV_SPLIT, ln, c, -1):
                status = STATUS_CAPACITY
                break
        elif u < nalive * (half_loss + half_split) + nfront * nact:
            f = front[uniform_index(rng, nfront)]
            s = act[uniform_index(rng, nact)]
            sf = lseg[f]
            seg_end[sf] = t
            seg_merge[sf] = s
            seg_line[sf] = -1
            nfront = _set_remove(front, front_pos, nfront, f)
            other = seg_line[s]
            if other >= 0:
                if nlines >= line_cap:
                    status = STATUS_CAPACITY
                    break
                c = nlines
                nlines = _new_line(Fa, Ia, nlines, t, KIND_MERGED, f, other, s)
                ldeath[f] = t
                ldeath[other] = t
                nalive = _set_remove(alive, alive_pos, nalive, f)
                nalive = _set_remove(alive, alive_pos, nalive, other)
                nalive = _set_add(alive, alive_pos, nalive, c)
                seg_line[s] = c
                if record and not _record(rec_t, rec_i, C, gene, t, EV_COALESCENCE, f, other, c):
                    status = STATUS_CAPACITY
                    break
            else:
                seg_line[s] = f
                lseg[f] = s
        else:
            if nlines >= line_cap:
                status = STATUS_CAPACITY
                break
            i = uniform_index(rng, nfront)
            j = uniform_index(rng, nfront - 1)
            if j >= i:
                j += 1
            f1 = front[i]
            f2 = front[j]
            s1 = lseg[f1]
            s2 = lseg[f2]
            seg_end[s1] = t
            seg_merge[s1] = s2
            seg_line[s1] = -1
            c = nlines
            nlines = _new_line(Fa, Ia, nlines, t, KIND_MERGED, f1, f2, s2)
            ldeath[f1] = t
            ldeath[f2] = t
            nfront = _set_remove(front, front_pos, nfront, f1)
            nfront = _set_remove(front, front_pos, nfront, f2)
            nfront = _set_add(front, front_pos, nfront, c)
            nalive = _set_remove(alive, alive_pos, nalive, f1)
            nalive = _set_remove(alive, alive_pos, nalive, f2)
            nalive = _set_add(alive, alive_pos, nalive, c)
            seg_line[s2] = c
            if record and not _record(rec_t, rec_i, C, gene, t, EV_COALESCENCE, f1, f2, c):
                status = STATUS_CAPACITY
                break

    for i in range(nact):
        act_pos[act[i]] = -1
    if status != STATUS_OK:
        return status, 0.0

    # fold the new exploration into the sorted union
    for i in range(ntouched):
        s = touched[i]
        if s >= nseg0:
            xend[s] = seg_end[s]
            _insert_sorted(birth_order, norder, seg_birth, s)
            _insert_sorted(end_order, norder, xend, s)
            norder += 1
        else:
            _remove_sorted(end_order, norder, s)
            xend[s] = seg_end[s]
            _insert_sorted(end_order, norder - 1, xend, s)
    C[C_NSEG] = nseg
    C[C_NORDER] = norder
    C[C_NLINES] = nlines
    C[C_NSPLIT] = nsplit

    total = 0.0
    comp = 0.0
    for ln in range(nlines):
        y = (ldeath[ln] - lbirth[ln]) - comp
        s_ = total + y
        comp = (s_ - total) - y
        total = s_
    return STATUS_OK, total


@numba.njit(nogil=True, cache=True)
def place_gain(rng, Fa, Ia, C, length):
    """Draw the gain point uniformly on the length measure and collect its carriers.

    Returns the line holding the gain point and the gain time; carriers are
    written to ``Ia[I_CARRIERS][:C[C_NCARRIERS]]``.
    """
    lbirth = Fa[F_LBIRTH]
    ldeath = Fa[F_LDEATH]
    lkind = Ia[I_LKIND]
    la = Ia[I_LA]
    lb = Ia[I_LB]
    stamp = Ia[I_STAMP]
    stack = Ia[I_STACK]
    carriers = Ia[I_CARRIERS]
    nlines = C[C_NLINES]

    target = rng.random() * length
    acc = 0.0
    line = nlines - 1
    for ln in range(nlines):
        span = ldeath[ln] - lbirth[ln]
        if target < acc + span:
            line = ln
            break
        acc += span
    when = lbirth[line] + min(max(target - acc, 0.0), ldeath[line] - lbirth[line])

    C[C_STAMP] += 1
    mark = C[C_STAMP]
    top = 0
    stack[top] = line
    top += 1
    stamp[line] = mark
    nc = 0
    while top > 0:
        top -= 1
        ln = stack[top]
        kind = lkind[ln]
        if kind == KIND_SAMPLE:
            carriers[nc] = la[ln]
            nc += 1
        elif kind == KIND_MERGED:
            for child in (la[ln], lb[ln]):
                if stamp[child] != mark:
                    stamp[child] = mark
                    stack[top] = child
                    top += 1
        else:
            p = la[ln]
            if stamp[p] != mark:
                stamp[p] = mark
                stack[top] = p
                top += 1
    C[C_NCARRIERS] = nc
    return line, when


@numba.njit(nogil=True, cache=True)
def init_union(rng, Fa, Ia, C, n, kingman):
    """Seed the union with ``n`` sample segments.

    With ``kingman`` they coalesce as a Kingman coalescent whose root is
    explored up to the time of the most recent common ancestor; otherwise
    every sample segment has zero length, so the first gene graph is built
    from scratch.
    """
    seg_birth = Fa[F_SEG_BIRTH]
    seg_end = Fa[F_SEG_END]
    xend = Fa[F_XEND]
    seg_merge = Ia[I_SEG_MERGE]
    seg_line = Ia[I_SEG_LINE]
    act_pos = Ia[I_ACT_POS]
    live = Ia[I_ACT]  # scratch; the active set is empty between genes
    for i in range(n):
        seg_birth[i] = 0.0
        seg_end[i] = 0.0
        seg_merge[i] = -1
        seg_line[i] = -1
        act_pos[i] = -1
        live[i] = i
    if kingman:
        t = 0.0
        k = n
        while k > 1:
            t += rng.exponential(2.0 / (k * (k - 1)))
            i = uniform_index(rng, k)
            j = uniform_index(rng, k - 1)
            if j >= i:
                j += 1
            a = live[i]
            seg_end[a] = t
            seg_merge[a] = live[j]
            live[i] = live[k - 1]
            k -= 1
        # the root stays explored one ulp past the last merge, so the
        # merge into it is seen before its horizon
        seg_end[live[0]] = np.nextafter(t, np.inf)
    for i in range(n):
        live[i] = -1
        xend[i] = seg_end[i]
    birth_order = Ia[I_BIRTH_ORDER]
    end_order = Ia[I_END_ORDER]
    for i in range(n):
        _insert_sorted(birth_order, i, seg_birth, i)
        _insert_sorted(end_order, i, xend, i)
    C[C_NSEG] = n
    C[C_NORDER] = n
    C[C_NREC] = 0


@numba.njit(nogil=True, cache=True)
def pangenome_block(
    rng, Fa, Ia, C, n, theta, rho, gamma, t_stop, max_alive,
    spectrum, first_genome, graphs, splits, first_length,
):
    """Run ``spectrum.shape[0]`` coupled replicates; returns ``(status, replicates_done)``."""
    dummy_t = np.empty(0)
    dummy_i = np.empty((0, 5), dtype=np.int64)
    reps = spectrum.shape[0]
    for r in range(reps):
        init_union(rng, Fa, Ia, C, n, True)
        for k in range(n):
            spectrum[r, k] = 0
        first_genome[r] = 0
        graphs[r] = 0
        splits[r] = 0
        first_length[r] = np.nan
        if theta <= 0.0:
            continue
        gain = 0.0
        gene = 0
        while True:
            gain += rng.exponential(2.0 / theta)
            if gain > t_stop:
                break
            status, length = run_gene(rng, Fa, Ia, C, n, rho, gamma, gene, max_alive, False, dummy_t, dummy_i)
            if status != STATUS_OK:
                return status, r
            if gene == 0:
                first_length[r] = length
            gene += 1
            graphs[r] += 1
            splits[r] += C[C_NSPLIT]
            if gain <= length:
                place_gain(rng, Fa, Ia, C, length)
                nc = C[C_NCARRIERS]
                spectrum[r, nc - 1] += 1
                carriers = Ia[I_CARRIERS]
                for i in range(nc):
                    if carriers[i] == 0:
                        first_genome[r] += 1
    return STATUS_OK, reps


@numba.njit(nogil=True, cache=True)
def single_gene_block(rng, Fa, Ia, C, n, rho, gamma, max_alive, lengths, ncarriers, splits):
    dummy_t = np.empty(0)
    dummy_i = np.empty((0, 5), dtype=np.int64)
    for r in range(lengths.shape[0]):
        init_union(rng, Fa, Ia, C, n, False)
        status, length = run_gene(rng, Fa, Ia, C, n, rho, gamma, 0, max_alive, False, dummy_t, dummy_i)
        if status != STATUS_OK:
            return status, r
        lengths[r] = length
        splits[r] = C[C_NSPLIT]
        place_gain(rng, Fa, Ia, C, length)
        ncarriers[r] = C[C_NCARRIERS]
    return STATUS_OK, lengths.shape[0]


@numba.njit(nogil=True, cache=True)
def two_gene_block(rng, rho, gamma, x0, y0, z0, max_alive, out):
    """Total lengths carrying gene 1 and gene 2, one row per replicate."""
    for r in range(out.shape[0]):
        x = x0
        y = y0
        z = z0
        l1 = 0.0
        l2 = 0.0
        while x + y + z > 0:
            a = x + y + z
            r_coal = 0.5 * a * (a - 1)
            r_loss1 = 0.5 * rho * (x + y)
            r_loss2 = 0.5 * rho * (y + z)
            r_split = 0.5 * gamma * (x + z) + gamma * y
            rate = r_coal + r_loss1 + r_loss2 + r_split
            dt = rng.exponential(1.0 / rate)
            l1 += (x + y) * dt
            l2 += (y + z) * dt
            u = rng.random() * rate
            if u < r_coal:
                # unordered pair of distinct lines by type
                i = uniform_index(rng, a)
                j = uniform_index(rng, a - 1)
                if j >= i:
                    j += 1
                ti = 0 if i < x else (1 if i < x + y else 2)
                tj = 0 if j < x else (1 if j < x + y else 2)
                if ti > tj:
                    ti, tj = tj, ti
                if ti == tj:
                    if ti == 0:
                        x -= 1
                    elif ti == 1:
                        y -= 1
                    else:
                        z -= 1
                elif ti == 0 and tj == 2:
                    x -= 1
                    z -= 1
                    y += 1
                elif ti == 0:
                    x -= 1
                else:
                    z -= 1
            elif u < r_coal + r_loss1:
                if rng.random() * (x + y) < x:
                    x -= 1
                else:
                    y -= 1
                    z += 1
            elif u < r_coal + r_loss1 + r_loss2:
                if rng.random() * (y + z) < z:
                    z -= 1
                else:
                    y -= 1
                    x += 1
            else:
                v = rng.random() * r_split
                if v < 0.5 * gamma * x:
                    x += 1
                elif v < 0.5 * gamma * (x + z):
                    z += 1
                elif rng.random() < 0.5:
                    x += 1
                else:
                    z += 1
            if x + y + z > max_alive:
                return STATUS_TOO_MANY_LINES, r
        out[r, 0] = l1
        out[r, 1] = l2
    return STATUS_OK, out.shape[0]
