"""Compiled tree-growing and tree-walking loops.

All features are small non-negative integers by the time they reach
``grow_tree`` (numeric columns are shifted by their training minimum), so
every split search is a histogram pass over the node's rows followed by a
scan over the present values.

Node arrays: ``feature`` (-1 marks a leaf), ``threshold`` (numeric splits,
original units, ``x <= threshold`` goes left), ``left``/``right`` child
indices, leaf class weights, and for categorical splits an ``(offset,
length)`` slice into ``cat_codes`` holding the sorted codes that go left.
"""

import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True)
def _grow(arr, n):
    out = np.empty(max(2 * arr.shape[0], n), arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True, nogil=True)
def grow_tree(X, y, class_w, mult, is_cat, n_levels, offsets, k_feat, max_depth, min_leaf, seed):
    np.random.seed(seed)
    n, p = X.shape
    m = 0
    for i in range(n):
        if mult[i] > 0:
            m += 1
    idx = np.empty(m, np.int64)
    m = 0
    for i in range(n):
        if mult[i] > 0:
            idx[m] = i
            m += 1

    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    wfast = np.zeros(cap, np.float64)
    wslow = np.zeros(cap, np.float64)
    depth_of = np.zeros(cap, np.int32)
    cat_off = np.zeros(cap, np.int32)
    cat_len = np.zeros(cap, np.int32)
    cat_codes = np.empty(64, np.int32)
    n_cat = 0

    max_lv = 1
    for j in range(p):
        if n_levels[j] > max_lv:
            max_lv = n_levels[j]
    hf = np.zeros(max_lv, np.float64)
    hs = np.zeros(max_lv, np.float64)
    hc = np.zeros(max_lv, np.int64)
    present = np.empty(max_lv, np.int64)
    best_order = np.empty(max_lv, np.int64)
    go_left = np.zeros(max_lv, np.bool_)
    key = np.empty(max_lv, np.float64)
    perm = np.arange(p)

    # stack of (node, start, end)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        d = depth_of[node]

        wf = 0.0
        ws = 0.0
        cnt = 0
        for t in range(lo, hi):
            i = idx[t]
            if y[i] == 1:
                ws += mult[i] * class_w[1]
            else:
                wf += mult[i] * class_w[0]
            cnt += mult[i]
        wfast[node] = wf
        wslow[node] = ws
        if d >= max_depth or wf == 0.0 or ws == 0.0 or cnt < 2 * min_leaf:
            continue

        W = wf + ws
        parent = W - (wf * wf + ws * ws) / W
        best = parent - _EPS * W
        best_j = -1
        best_cut = 0
        best_thr = 0.0

        # partial Fisher-Yates: features are tried in random order; keep
        # going past k_feat only while no valid split has been found
        for a in range(p):
            b = a + int(np.random.random() * (p - a))
            tmp = perm[a]
            perm[a] = perm[b]
            perm[b] = tmp
            if a >= k_feat and best_j >= 0:
                break
            j = perm[a]

            npres = 0
            for t in range(lo, hi):
                i = idx[t]
                v = X[i, j]
                if hc[v] == 0:
                    present[npres] = v
                    npres += 1
                hc[v] += mult[i]
                if y[i] == 1:
                    hs[v] += mult[i] * class_w[1]
                else:
                    hf[v] += mult[i] * class_w[0]
            if npres > 1:
                vals = np.sort(present[:npres])
                if is_cat[j]:
                    for q in range(npres):
                        v = vals[q]
                        key[q] = hs[v] / (hf[v] + hs[v])
                    order = np.argsort(key[:npres], kind="mergesort")
                    vals = vals[order]
                lf = 0.0
                ls = 0.0
                lc = 0
                for q in range(npres - 1):
                    v = vals[q]
                    lf += hf[v]
                    ls += hs[v]
                    lc += hc[v]
                    rc = cnt - lc
                    if lc < min_leaf or rc < min_leaf:
                        continue
                    rf = wf - lf
                    rs = ws - ls
                    wl = lf + ls
                    wr = rf + rs
                    if wl <= 0.0 or wr <= 0.0:
                        continue
                    score = wl - (lf * lf + ls * ls) / wl + wr - (rf * rf + rs * rs) / wr
                    if score < best:
                        best = score
                        best_j = j
                        best_cut = q
                        best_thr = 0.5 * (vals[q] + vals[q + 1])
                        for r in range(npres):
                            best_order[r] = vals[r]
            for q in range(npres):
                v = present[q]
                hc[v] = 0
                hf[v] = 0.0
                hs[v] = 0.0

        if best_j < 0:
            continue

        # partition rows in place: left block first
        if is_cat[best_j]:
            for r in range(best_cut + 1):
                go_left[best_order[r]] = True
        a = lo
        b = hi - 1
        while a <= b:
            v = X[idx[a], best_j]
            gl = go_left[v] if is_cat[best_j] else v <= best_thr
            if gl:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        mid = a

        feature[node] = best_j
        if is_cat[best_j]:
            k = best_cut + 1
            if n_cat + k > cat_codes.shape[0]:
                cat_codes = _grow(cat_codes, n_cat + k)
            codes = np.sort(best_order[:k])
            for r in range(k):
                cat_codes[n_cat + r] = codes[r]
                go_left[best_order[r]] = False
            cat_off[node] = n_cat
            cat_len[node] = k
            n_cat += k
        else:
            threshold[node] = best_thr + offsets[best_j]

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        depth_of[lnode] = d + 1
        depth_of[rnode] = d + 1
        # right pushed first so the left subtree is expanded first
        st_node[top] = rnode
        st_lo[top] = mid
        st_hi[top] = hi
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = mid
        top += 1

    k = n_nodes
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            wfast[:k].copy(), wslow[:k].copy(), depth_of[:k].copy(),
            cat_off[:k].copy(), cat_len[:k].copy(), cat_codes[:n_cat].copy())


@njit(cache=True, nogil=True)
def _walk(x, node, feature, threshold, left, right, cat_off, cat_len, cat_codes):
    while feature[node] >= 0:
        j = feature[node]
        if cat_len[node] > 0:
            v = x[j]
            lo = cat_off[node]
            hi = lo + cat_len[node]
            while lo < hi:
                mid = (lo + hi) >> 1
                if cat_codes[mid] < v:
                    lo = mid + 1
                else:
                    hi = mid
            node = left[node] if lo < cat_off[node] + cat_len[node] and cat_codes[lo] == v else right[node]
        else:
            node = left[node] if x[j] <= threshold[node] else right[node]
    return node


@njit(cache=True, nogil=True)
def slow_votes(X, roots, feature, threshold, left, right, vote, cat_off, cat_len, cat_codes):
    """Number of trees voting SLOW for every row of ``X``."""
    n = X.shape[0]
    out = np.zeros(n, np.int64)
    # tree-major order keeps one tree's nodes hot in cache
    for r in range(roots.shape[0]):
        for i in range(n):
            leaf = _walk(X[i], roots[r], feature, threshold, left, right, cat_off, cat_len, cat_codes)
            out[i] += vote[leaf]
    return out
