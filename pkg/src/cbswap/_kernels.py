"""Compiled inner loops.

Every routine works on the flat partition layout used by
:class:`cbswap.state.IndexSets`:

    members[k, :sizes[k]]   elements of set k, in arbitrary order
    label[e]                the set holding element e
    pos[e]                  position of e inside members[label[e]]

A single chain uses two sets (0 = zeros, 1 = ones).  A coupled pair uses four,
with label ``2 * x_n + xt_n``, i.e. 0 = S00, 1 = S01, 2 = S10, 3 = S11.

Randomness is never drawn here.  Callers pass pre-drawn uniforms so that the
consumption schedule is fixed at three uniforms per (coupled) step.
"""

import numba
import numpy as np

S00, S01, S10, S11 = 0, 1, 2, 3
LABEL_U, LABEL_F, LABEL_D = 1, 2, 3


@numba.njit(cache=True, nogil=True)
def move(members, sizes, label, pos, e, dst):
    src = label[e]
    if src == dst:
        return
    p = pos[e]
    last = sizes[src] - 1
    tail = members[src, last]
    members[src, p] = tail
    pos[tail] = p
    sizes[src] = last
    q = sizes[dst]
    members[dst, q] = e
    pos[e] = q
    sizes[dst] = q + 1
    label[e] = dst


@numba.njit(cache=True, nogil=True)
def fill_sets(label, members, sizes, pos):
    sizes[:] = 0
    for e in range(label.shape[0]):
        k = label[e]
        q = sizes[k]
        members[k, q] = e
        pos[e] = q
        sizes[k] = q + 1


@numba.njit(cache=True, nogil=True)
def pick(size, u):
    k = int(u * size)
    if k >= size:
        k = size - 1
    return k


@numba.njit(cache=True, nogil=True)
def swap_step(members, sizes, label, pos, w, u0, u1, u):
    i0 = members[0, pick(sizes[0], u0)]
    i1 = members[1, pick(sizes[1], u1)]
    accepted = u < min(1.0, w[i0] / w[i1])
    if accepted:
        move(members, sizes, label, pos, i0, 1)
        move(members, sizes, label, pos, i1, 0)
    return i0, i1, accepted


@numba.njit(cache=True, nogil=True)
def swap_run(members, sizes, label, pos, w, uniforms):
    n_acc = 0
    for t in range(uniforms.shape[0]):
        _, _, acc = swap_step(members, sizes, label, pos, w,
                              uniforms[t, 0], uniforms[t, 1], uniforms[t, 2])
        n_acc += acc
    return n_acc


@numba.njit(cache=True, nogil=True)
def swap_trace(members, sizes, label, pos, w, uniforms, out_i0, out_i1, out_acc):
    for t in range(uniforms.shape[0]):
        i0, i1, acc = swap_step(members, sizes, label, pos, w,
                                uniforms[t, 0], uniforms[t, 1], uniforms[t, 2])
        out_i0[t] = i0
        out_i1[t] = i1
        out_acc[t] = acc


@numba.njit(cache=True, nogil=True)
def coupled_step(members, sizes, label, pos, w, v0, v1, u):
    m = sizes[S01]  # == sizes[S10]

    # maximal coupling of uniform(S0), uniform(S0~); common part is S00
    n0 = sizes[S00] + m
    s = v0 * n0
    k = pick(n0, v0)
    if k < sizes[S00]:
        i0 = members[S00, k]
        it0 = i0
    else:
        i0 = members[S01, k - sizes[S00]]
        it0 = members[S10, pick(m, s - k)]

    # same for the ones; common part is S11
    n1 = sizes[S11] + m
    s = v1 * n1
    k = pick(n1, v1)
    if k < sizes[S11]:
        i1 = members[S11, k]
        it1 = i1
    else:
        i1 = members[S10, k - sizes[S11]]
        it1 = members[S01, pick(m, s - k)]

    acc = u < min(1.0, w[i0] / w[i1])
    acct = u < min(1.0, w[it0] / w[it1])
    if acc:
        move(members, sizes, label, pos, i0, 2 | (label[i0] & 1))
        move(members, sizes, label, pos, i1, label[i1] & 1)
    if acct:
        move(members, sizes, label, pos, it0, (label[it0] & 2) | 1)
        move(members, sizes, label, pos, it1, label[it1] & 2)
    return i0, it0, i1, it1, acc, acct


@numba.njit(cache=True, nogil=True)
def coupled_run(members, sizes, label, pos, w, uniforms):
    """Step until the pair meets or uniforms run out; return steps used."""
    for t in range(uniforms.shape[0]):
        if sizes[S01] == 0:
            return t
        coupled_step(members, sizes, label, pos, w,
                     uniforms[t, 0], uniforms[t, 1], uniforms[t, 2])
    return uniforms.shape[0]


@numba.njit(cache=True, nogil=True)
def pair_class(w, i, j, lo, hi):
    wa = min(w[i], w[j])
    wb = max(w[i], w[j])
    if wa < lo and wb > hi:
        return LABEL_U
    return LABEL_F


@numba.njit(cache=True, nogil=True)
def coupled_class(members, sizes, w, lo, hi):
    m = sizes[S01]
    if m == 0:
        return LABEL_D
    if m == 1:
        return pair_class(w, members[S01, 0], members[S10, 0], lo, hi)
    return -1


@numba.njit(cache=True, nogil=True)
def adjacent_transition_law(members, sizes, w, lo, hi):
    """Exact one-step law of the next partition label from an adjacent pair.

    Returns (P(U), P(F), P(D)).  Enumerates the O(N) distinguishable branches
    of the coupled kernel.
    """
    a = members[S01, 0]
    b = members[S10, 0]
    n_zero = sizes[S00] + 1
    n_one = sizes[S11] + 1
    base = 1.0 / (n_zero * n_one)
    probs = np.zeros(4)
    here = pair_class(w, a, b, lo, hi)
    wa = w[a]
    wb = w[b]

    # common zero index and common one index: both chains move together
    probs[here] += sizes[S00] * sizes[S11] * base

    # i0 = a, it0 = b, common one index k
    for q in range(sizes[S11]):
        k = members[S11, q]
        r1 = min(1.0, wa / w[k])
        r2 = min(1.0, wb / w[k])
        lo_r = min(r1, r2)
        hi_r = max(r1, r2)
        probs[LABEL_D] += lo_r * base
        if r1 < r2:
            probs[pair_class(w, a, k, lo, hi)] += (hi_r - lo_r) * base
        elif r1 > r2:
            probs[pair_class(w, k, b, lo, hi)] += (hi_r - lo_r) * base
        probs[here] += (1.0 - hi_r) * base

    # common zero index j, i1 = b, it1 = a
    for q in range(sizes[S00]):
        j = members[S00, q]
        r1 = min(1.0, w[j] / wb)
        r2 = min(1.0, w[j] / wa)
        lo_r = min(r1, r2)
        hi_r = max(r1, r2)
        probs[LABEL_D] += lo_r * base
        if r2 > r1:
            probs[pair_class(w, j, b, lo, hi)] += (hi_r - lo_r) * base
        elif r1 > r2:
            probs[pair_class(w, a, j, lo, hi)] += (hi_r - lo_r) * base
        probs[here] += (1.0 - hi_r) * base

    # i0 = a, i1 = b in x; it0 = b, it1 = a in xt
    r1 = min(1.0, wa / wb)
    r2 = min(1.0, wb / wa)
    lo_r = min(r1, r2)
    hi_r = max(r1, r2)
    probs[here] += (lo_r + 1.0 - hi_r) * base
    probs[LABEL_D] += (hi_r - lo_r) * base
    return probs[1], probs[2], probs[3]


@numba.njit(cache=True, nogil=True)
def class_trajectory(members, sizes, label, pos, w, lo, hi, uniforms,
                     out_labels, out_probs):
    """Run the coupled chain, recording labels and exact next-label laws.

    ``out_labels`` has length T + 1, ``out_probs`` shape (T, 3).
    Returns -1 on success, or the step at which the pair left the
    adjacent/diagonal regime.
    """
    T = uniforms.shape[0]
    out_labels[0] = coupled_class(members, sizes, w, lo, hi)
    for t in range(T):
        if out_labels[t] == LABEL_D:
            out_probs[t, 0] = 0.0
            out_probs[t, 1] = 0.0
            out_probs[t, 2] = 1.0
        elif out_labels[t] < 0:
            return t
        else:
            pu, pf, pd = adjacent_transition_law(members, sizes, w, lo, hi)
            out_probs[t, 0] = pu
            out_probs[t, 1] = pf
            out_probs[t, 2] = pd
        coupled_step(members, sizes, label, pos, w,
                     uniforms[t, 0], uniforms[t, 1], uniforms[t, 2])
        out_labels[t + 1] = coupled_class(members, sizes, w, lo, hi)
    return -1


@numba.njit(cache=True, nogil=True)
def adjacent_one_step_classes(bits, flip0, flip1, w, lo, hi, uniforms, out):
    """For each row s: pair (x, xt) with xt = x except xt[flip0]=1, xt[flip1]=0.

    Applies one coupled step and writes the origin label to out[s, 0] and the
    destination label to out[s, 1].
    """
    n = bits.shape[1]
    members = np.empty((4, n), dtype=np.int32)
    sizes = np.zeros(4, dtype=np.int64)
    pos = np.empty(n, dtype=np.int32)
    label = np.empty(n, dtype=np.int8)
    for s in range(bits.shape[0]):
        for e in range(n):
            label[e] = 3 * bits[s, e]
        label[flip0[s]] = S01
        label[flip1[s]] = S10
        fill_sets(label, members, sizes, pos)
        out[s, 0] = coupled_class(members, sizes, w, lo, hi)
        coupled_step(members, sizes, label, pos, w,
                     uniforms[s, 0], uniforms[s, 1], uniforms[s, 2])
        out[s, 1] = coupled_class(members, sizes, w, lo, hi)


@numba.njit(cache=True, nogil=True)
def swap_one_step_codes(label0, w, uniforms, out):
    """Repeat one swap step from the same start; write bitmask of each result."""
    n = label0.shape[0]
    members = np.empty((2, n), dtype=np.int32)
    sizes = np.zeros(2, dtype=np.int64)
    pos = np.empty(n, dtype=np.int32)
    label = label0.copy()
    fill_sets(label, members, sizes, pos)
    for s in range(uniforms.shape[0]):
        i0, i1, acc = swap_step(members, sizes, label, pos, w,
                                uniforms[s, 0], uniforms[s, 1], uniforms[s, 2])
        code = 0
        for e in range(n):
            if label[e] == 1:
                code |= 1 << e
        out[s] = code
        if acc:
            move(members, sizes, label, pos, i0, 0)
            move(members, sizes, label, pos, i1, 1)


@numba.njit(cache=True, nogil=True)
def coupled_one_step_codes(label0, w, uniforms, out_x, out_xt):
    """Repeat one coupled step from the same start; record both marginals."""
    n = label0.shape[0]
    members = np.empty((4, n), dtype=np.int32)
    sizes = np.zeros(4, dtype=np.int64)
    pos = np.empty(n, dtype=np.int32)
    label = label0.copy()
    for s in range(uniforms.shape[0]):
        for e in range(n):
            label[e] = label0[e]
        fill_sets(label, members, sizes, pos)
        coupled_step(members, sizes, label, pos, w,
                     uniforms[s, 0], uniforms[s, 1], uniforms[s, 2])
        cx = 0
        cxt = 0
        for e in range(n):
            if label[e] & 2:
                cx |= 1 << e
            if label[e] & 1:
                cxt |= 1 << e
        out_x[s] = cx
        out_xt[s] = cxt
