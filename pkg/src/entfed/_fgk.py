"""FGK adaptive Huffman kernels (numba).

Nodes are addressed by their implicit number; the root is ``m - 1`` and the
0-node (NYT) always holds the lowest live number. Swaps exchange the contents
of two positions, so ``parent`` stays positional.
"""

import numpy as np
from numba import njit

NYT = -2
INTERNAL = -1
LITERAL_BITS = 16
ALPHABET = 1 << LITERAL_BITS

ERR_NONE = 0
ERR_TRUNCATED = 1
ERR_CORRUPT = 2


@njit(cache=True)
def _new_tree(m):
    weight = np.zeros(m, np.int64)
    parent = np.full(m, -1, np.int64)
    left = np.full(m, -1, np.int64)
    right = np.full(m, -1, np.int64)
    sym = np.full(m, INTERNAL, np.int64)
    leaf_of = np.full(ALPHABET, -1, np.int64)
    sym[m - 1] = NYT
    return weight, parent, left, right, sym, leaf_of


@njit(cache=True)
def _split_nyt(nyt, s, parent, left, right, sym, leaf_of):
    left[nyt] = nyt - 2
    right[nyt] = nyt - 1
    sym[nyt] = INTERNAL
    parent[nyt - 1] = nyt
    parent[nyt - 2] = nyt
    sym[nyt - 1] = s
    sym[nyt - 2] = NYT
    leaf_of[s] = nyt - 1
    return nyt - 1, nyt - 2


@njit(cache=True)
def _swap(a, b, weight, parent, left, right, sym, leaf_of, nyt):
    weight[a], weight[b] = weight[b], weight[a]
    sym[a], sym[b] = sym[b], sym[a]
    left[a], left[b] = left[b], left[a]
    right[a], right[b] = right[b], right[a]
    for x in (a, b):
        if left[x] != -1:
            parent[left[x]] = x
            parent[right[x]] = x
        if sym[x] >= 0:
            leaf_of[sym[x]] = x
        elif sym[x] == NYT:
            nyt = x
    return nyt


@njit(cache=True)
def _update(q, m, weight, parent, left, right, sym, leaf_of, nyt):
    while q != -1:
        # weights are non-decreasing by node number: binary-search the block leader
        w = weight[q]
        lo, hi = q, m - 1
        while lo < hi:
            mid = (lo + hi + 1) >> 1
            if weight[mid] == w:
                lo = mid
            else:
                hi = mid - 1
        j = lo
        if j != q and j != parent[q]:
            nyt = _swap(q, j, weight, parent, left, right, sym, leaf_of, nyt)
            q = j
        weight[q] += 1
        q = parent[q]
    return nyt


@njit(cache=True)
def _grow(buf):
    out = np.zeros(buf.shape[0] * 2, np.uint8)
    out[: buf.shape[0]] = buf
    return out


@njit(cache=True)
def encode(symbols):
    """Return ``(payload_bytes, payload_bits)`` for a 1-D int64 symbol array."""
    n = symbols.shape[0]
    distinct_cap = min(n, ALPHABET)
    m = 2 * distinct_cap + 1
    weight, parent, left, right, sym, leaf_of = _new_tree(m)
    nyt = m - 1
    buf = np.zeros(max(16, n * 3), np.uint8)
    nbits = 0
    path = np.zeros(m + 1, np.uint8)
    for t in range(n):
        s = symbols[t]
        q = leaf_of[s]
        node = nyt if q == -1 else q
        depth = 0
        while parent[node] != -1:
            p = parent[node]
            path[depth] = 1 if right[p] == node else 0
            depth += 1
            node = p
        need = depth + (LITERAL_BITS if q == -1 else 0)
        while (nbits + need + 7) // 8 >= buf.shape[0]:
            buf = _grow(buf)
        for i in range(depth - 1, -1, -1):
            if path[i]:
                buf[nbits >> 3] |= np.uint8(0x80 >> (nbits & 7))
            nbits += 1
        if q == -1:
            for i in range(LITERAL_BITS - 1, -1, -1):
                if (s >> i) & 1:
                    buf[nbits >> 3] |= np.uint8(0x80 >> (nbits & 7))
                nbits += 1
            q, nyt = _split_nyt(nyt, s, parent, left, right, sym, leaf_of)
        nyt = _update(q, m, weight, parent, left, right, sym, leaf_of, nyt)
    return buf[: (nbits + 7) // 8].copy(), nbits


@njit(cache=True)
def decode(payload, count):
    """Return ``(symbols, error_code, bits_consumed)``."""
    out = np.zeros(count, np.int64)
    total = payload.shape[0] * 8
    distinct_cap = min(count, ALPHABET)
    m = 2 * distinct_cap + 1
    if count == 0:
        return out, ERR_NONE, 0
    weight, parent, left, right, sym, leaf_of = _new_tree(m)
    nyt = m - 1
    pos = 0
    for t in range(count):
        q = m - 1
        while left[q] != -1:
            if pos >= total:
                return out, ERR_TRUNCATED, pos
            bit = (payload[pos >> 3] >> (7 - (pos & 7))) & 1
            pos += 1
            q = right[q] if bit else left[q]
        if q == nyt:
            if pos + LITERAL_BITS > total:
                return out, ERR_TRUNCATED, pos
            s = 0
            for i in range(LITERAL_BITS):
                s = (s << 1) | ((payload[pos >> 3] >> (7 - (pos & 7))) & 1)
                pos += 1
            if leaf_of[s] != -1 or nyt < 2:
                return out, ERR_CORRUPT, pos
            q, nyt = _split_nyt(nyt, s, parent, left, right, sym, leaf_of)
        else:
            s = sym[q]
        out[t] = s
        nyt = _update(q, m, weight, parent, left, right, sym, leaf_of, nyt)
    return out, ERR_NONE, pos
