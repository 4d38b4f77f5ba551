"""Compiled inner loops.

Each kernel mutates the memory arrays in place, writes its access events
(``addr << 1 | op``) into ``tr`` when ``rec`` is set, and returns the number
of events it produced.  Data moving kernels also append their swap records
to ``sa``/``sb``/``sp`` starting at index ``s0``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

WORD_MARK = 1
POS_MARK = 2
DUMMY = 4
ATOM_MARK = 8

# vertex / edge cell flags
V_MARKED = 1
V_BLOCKED = 2
E_MATCHED = 1
E_CARRIED = 2


@njit(inline="always")
def _ev(tr, k, rec, addr, op):
    if rec:
        tr[k] = (addr << 1) | op
    return k + 1


@njit(inline="always")
def _swap(P, F, O, a, b, keep):
    t = P[a]
    P[a] = P[b]
    P[b] = t
    o = O[a]
    O[a] = O[b]
    O[b] = o
    fa = np.int64(F[a])
    fb = np.int64(F[b])
    F[a] = (fb & ~keep) | (fa & keep)
    F[b] = (fa & ~keep) | (fb & keep)


@njit(inline="always")
def _cswap(P, F, O, a, b, do, keep, tr, k, rec):
    k = _ev(tr, k, rec, a, 0)
    k = _ev(tr, k, rec, b, 0)
    if do:
        _swap(P, F, O, a, b, keep)
    k = _ev(tr, k, rec, a, 1)
    k = _ev(tr, k, rec, b, 1)
    return k


@njit(inline="always")
def _marked(f):
    return (f & ATOM_MARK) != 0 and (f & DUMMY) == 0


@njit(inline="always")
def _real_unmarked(f):
    return (f & ATOM_MARK) == 0 and (f & DUMMY) == 0


@njit(inline="always")
def _word_marked(f, rule):
    if f & DUMMY:
        return False
    if rule == 0:
        return (f & WORD_MARK) != 0
    return ((f & WORD_MARK) != 0) != ((f & POS_MARK) != 0)


@njit(cache=True)
def tag_atoms(F, base, n_atoms, W, thr_num, thr_den, rule, tr, rec):
    """Set ATOM_MARK on every word of atoms whose marked fraction exceeds thr."""
    k = 0
    for a in range(n_atoms):
        s = base + a * W
        cnt = 0
        for w in range(W):
            k = _ev(tr, k, rec, s + w, 0)
            if _word_marked(F[s + w], rule):
                cnt += 1
        hot = cnt * thr_den > thr_num * W
        for w in range(W):
            k = _ev(tr, k, rec, s + w, 1)
            if hot:
                F[s + w] = F[s + w] | ATOM_MARK
            else:
                F[s + w] = F[s + w] & ~ATOM_MARK
    return k


@njit(cache=True)
def census(P, F, O, main, N, B, W, vl, vr, tr, rec, sa, sb, sp, s0):
    """Pair block i with block i + N/2, move the lighter one down, flag vertices.

    The upper block of a pair becomes a marked left vertex when it holds more
    than B/4 marked atoms; both right vertices of the pair are blocked when
    the lower block does.
    """
    k = 0
    s = s0
    h = N // 2
    q = B // 4
    for i in range(h):
        lo = main + i * B * W
        hi = main + (i + h) * B * W
        cl = 0
        ch = 0
        for a in range(B):
            k = _ev(tr, k, rec, lo + a * W, 0)
            if _marked(F[lo + a * W]):
                cl += 1
        for a in range(B):
            k = _ev(tr, k, rec, hi + a * W, 0)
            if _marked(F[hi + a * W]):
                ch += 1
        do = cl > ch
        for a in range(B):
            for w in range(W):
                x = lo + a * W + w
                y = hi + a * W + w
                k = _cswap(P, F, O, x, y, do, 0, tr, k, rec)
                sa[s] = x
                sb[s] = y
                sp[s] = do
                s += 1
        mn = min(cl, ch)
        mx = max(cl, ch)
        k = _ev(tr, k, rec, vl + i, 1)
        F[vl + i] = 0
        k = _ev(tr, k, rec, vl + i + h, 1)
        F[vl + i + h] = V_MARKED if mx > q else 0
        k = _ev(tr, k, rec, vr + i, 1)
        F[vr + i] = V_BLOCKED if mn > q else 0
        k = _ev(tr, k, rec, vr + i + h, 1)
        F[vr + i + h] = V_BLOCKED if mn > q else 0
    return k, s


@njit(cache=True)
def phase_spread(P, F, O, main, aux, adj, N, B, W, ec, tr, rec, sa, sb, sp, s0):
    """Each matched edge of a marked upper block carries one marked atom to a dummy slot."""
    k = 0
    s = s0
    d = adj.shape[1]
    for u in range(N // 2, N):
        for e in range(d):
            c = ec + u * d + e
            k = _ev(tr, k, rec, c, 0)
            matched = (F[c] & E_MATCHED) != 0
            v = adj[u, e]
            done = False
            for a in range(B):
                x0 = main + (u * B + a) * W
                for b in range(B):
                    y0 = aux + (v * B + b) * W
                    do = False
                    for w in range(W):
                        if w == 0:
                            do = matched and (not done) and _marked(F[x0]) and (F[y0] & DUMMY) != 0
                        k = _cswap(P, F, O, x0 + w, y0 + w, do, 0, tr, k, rec)
                        sa[s] = x0 + w
                        sb[s] = y0 + w
                        sp[s] = do
                        s += 1
                    if do:
                        done = True
            k = _ev(tr, k, rec, c, 1)
            F[c] = (F[c] | E_CARRIED) if done else (F[c] & ~E_CARRIED)
    return k, s


@njit(cache=True)
def phase_gather(P, F, O, main, aux, N, B, W, tr, rec, sa, sb, sp, s0):
    """Move marked atoms of L(i+N/2), R(i), R(i+N/2) onto real unmarked atoms of L(i)."""
    k = 0
    s = s0
    h = N // 2
    for i in range(h):
        tgt = main + i * B * W
        for src_blk in range(3):
            if src_blk == 0:
                sbase = main + (i + h) * B * W
            elif src_blk == 1:
                sbase = aux + i * B * W
            else:
                sbase = aux + (i + h) * B * W
            for a in range(B):
                x0 = sbase + a * W
                for t in range(B):
                    y0 = tgt + t * W
                    do = False
                    for w in range(W):
                        if w == 0:
                            do = _marked(F[x0]) and _real_unmarked(F[y0])
                        k = _cswap(P, F, O, x0 + w, y0 + w, do, 0, tr, k, rec)
                        sa[s] = x0 + w
                        sb[s] = y0 + w
                        sp[s] = do
                        s += 1
    return k, s


@njit(cache=True)
def phase_settle(P, F, O, main, aux, adj, N, B, W, ec, tr, rec, sa, sb, sp, s0):
    """Every edge that carried an atom returns one dummy to the aux side."""
    k = 0
    s = s0
    d = adj.shape[1]
    for u in range(N - 1, N // 2 - 1, -1):
        for e in range(d - 1, -1, -1):
            c = ec + u * d + e
            k = _ev(tr, k, rec, c, 0)
            carried = (F[c] & E_CARRIED) != 0
            v = adj[u, e]
            done = False
            for a in range(B - 1, -1, -1):
                x0 = main + (u * B + a) * W
                for b in range(B - 1, -1, -1):
                    y0 = aux + (v * B + b) * W
                    do = False
                    for w in range(W):
                        if w == 0:
                            do = carried and (not done) and (F[x0] & DUMMY) != 0 and (F[y0] & DUMMY) == 0
                        k = _cswap(P, F, O, x0 + w, y0 + w, do, 0, tr, k, rec)
                        sa[s] = x0 + w
                        sb[s] = y0 + w
                        sp[s] = do
                        s += 1
                    if do:
                        done = True
    return k, s


@njit(cache=True)
def replay_reverse(P, F, O, sa, sb, sp, lo, hi, keep, tr, rec):
    """Undo records ``lo..hi-1`` last to first: R b, R a, W b, W a each."""
    k = 0
    for r in range(hi - 1, lo - 1, -1):
        a = sa[r]
        b = sb[r]
        k = _ev(tr, k, rec, b, 0)
        k = _ev(tr, k, rec, a, 0)
        if sp[r]:
            _swap(P, F, O, a, b, keep)
        k = _ev(tr, k, rec, b, 1)
        k = _ev(tr, k, rec, a, 1)
    return k


# distribution ----------------------------------------------------------------

@njit(inline="always")
def _colour(f):
    wm = (f & WORD_MARK) != 0
    pm = (f & POS_MARK) != 0
    if wm and not pm:
        return 1
    if pm and not wm:
        return 2
    return 0


@njit(inline="always")
def _swap_word_part(P, F, O, a, b):
    # payload, origin and the word mark travel; every other flag stays put
    _swap(P, F, O, a, b, ~np.int64(WORD_MARK))


@njit(cache=True)
def swap_gather(P, F, O, base, rev, tr, rec):
    """Swap routine realised per right vertex in registers.

    For right vertex v the d neighbour cells are read, the pair scan over
    slot pairs (k, k') in lexicographic order is evaluated (swap iff one is
    red and the other blue and neither has been swapped), and the d cells
    are written back.  The scan's outcome equals first-in-first-out pairing
    over distinct cells in first-occurrence order: each coloured cell is
    paired with the oldest pending cell of the other colour, if any.
    """
    n, d = rev.shape
    k = 0
    queue = np.empty(d, np.int64)
    lut = np.zeros(8, np.int8)
    for f in range(8):
        lut[f] = _colour(f)
    # stamp[x] == v + 1 means position x was already seen at this vertex
    stamp = np.zeros(n, np.int64)
    for v in range(n):
        if rec:
            for j in range(d):
                tr[k + j] = (base + rev[v, j]) << 1
                tr[k + d + j] = ((base + rev[v, j]) << 1) | 1
        head = 0
        tail = 0
        qcol = 0
        for j in range(d):
            x = rev[v, j]
            a = base + x
            c = lut[F[a] & 7]
            if c == 0 or stamp[x] == v + 1:
                continue
            stamp[x] = v + 1
            if head < tail and qcol != c:
                _swap_word_part(P, F, O, queue[head], a)
                head += 1
            else:
                if head == tail:
                    head = 0
                    tail = 0
                    qcol = c
                queue[tail] = a
                tail += 1
        k += 2 * d
    return k


@njit(cache=True)
def swap_pairwise(P, F, O, base, rev, tr, rec):
    """Literal pair scan: one conditional swap per neighbour pair of each right vertex."""
    n, d = rev.shape
    k = 0
    for v in range(n):
        for i in range(d):
            a = base + rev[v, i]
            for j in range(i + 1, d):
                b = base + rev[v, j]
                ca = _colour(F[a])
                cb = _colour(F[b])
                do = a != b and ca > 0 and cb > 0 and ca != cb
                k = _ev(tr, k, rec, a, 0)
                k = _ev(tr, k, rec, b, 0)
                if do:
                    _swap_word_part(P, F, O, a, b)
                k = _ev(tr, k, rec, a, 1)
                k = _ev(tr, k, rec, b, 1)
    return k


@njit(cache=True)
def base_case(P, F, O, base, n, tr, rec):
    """Quadratic pass over all pairs of a small instance."""
    k = 0
    for i in range(n):
        a = base + i
        for j in range(i + 1, n):
            b = base + j
            ca = _colour(F[a])
            cb = _colour(F[b])
            do = ca > 0 and cb > 0 and ca != cb
            k = _ev(tr, k, rec, a, 0)
            k = _ev(tr, k, rec, b, 0)
            if do:
                _swap_word_part(P, F, O, a, b)
            k = _ev(tr, k, rec, a, 1)
            k = _ev(tr, k, rec, b, 1)
    return k


# baseline --------------------------------------------------------------------

@njit(inline="always")
def _key_gt(F, O, a, b):
    # marked words first, then by origin
    ma = (F[a] & WORD_MARK) != 0 and (F[a] & DUMMY) == 0
    mb = (F[b] & WORD_MARK) != 0 and (F[b] & DUMMY) == 0
    if ma != mb:
        return mb
    return O[a] > O[b]


@njit(cache=True)
def bitonic(P, F, O, base, n, tr, rec):
    """Bitonic sorting network; n must be a power of two."""
    k = 0
    size = 2
    while size <= n:
        stride = size // 2
        while stride >= 1:
            for i in range(n):
                j = i ^ stride
                if j > i:
                    a = base + i
                    b = base + j
                    up = (i & size) == 0
                    do = _key_gt(F, O, a, b) if up else _key_gt(F, O, b, a)
                    k = _cswap(P, F, O, a, b, do, 0, tr, k, rec)
            stride //= 2
        size *= 2
    return k


@njit(cache=True)
def apply_swaps(P, F, O, sa, sb, sp, lo, hi, tr, rec):
    """Replay records ``lo..hi-1`` forwards: R a, R b, W a, W b each."""
    k = 0
    for r in range(lo, hi):
        k = _cswap(P, F, O, sa[r], sb[r], sp[r], 0, tr, k, rec)
    return k
