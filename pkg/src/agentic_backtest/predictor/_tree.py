"""Numba kernels for histogram tree growth and traversal.

Split search runs on the row-subsampled gradients (``gs``/``hs``, zero for
unsampled rows); leaf values are then fitted on the full gradients of every
training row routed to the leaf, which keeps full-batch squared loss
non-increasing round over round.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _thresh(g, l1):
    if g > l1:
        return g - l1
    if g < -l1:
        return g + l1
    return 0.0


@njit(cache=True)
def _score(g, h, l1, l2):
    t = _thresh(g, l1)
    return t * t / (h + l2)


@njit(cache=True)
def grow_tree(binned, gs, hs, g, h, cols, n_bins, max_depth, l1, l2, min_child_weight, gamma, lr):
    n = binned.shape[0]
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, np.int32)
    bin_thr = np.zeros(max_nodes, np.int32)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes)
    gain = np.zeros(max_nodes)
    cover = np.zeros(max_nodes)
    start = np.zeros(max_nodes, np.int64)
    stop = np.zeros(max_nodes, np.int64)
    depth = np.zeros(max_nodes, np.int32)

    idx = np.arange(n)
    tmp = np.empty(n, np.int64)
    start[0] = 0
    stop[0] = n
    n_nodes = 1
    max_bin = 0
    for c in range(cols.shape[0]):
        if n_bins[cols[c]] > max_bin:
            max_bin = n_bins[cols[c]]
    hist_g = np.zeros((cols.shape[0], max_bin))
    hist_h = np.zeros((cols.shape[0], max_bin))

    node = 0
    while node < n_nodes:
        s = start[node]
        e = stop[node]
        G = 0.0
        H = 0.0
        for k in range(s, e):
            r = idx[k]
            G += gs[r]
            H += hs[r]
        cover[node] = H
        best_gain = 0.0
        best_c = -1
        best_b = -1
        if depth[node] < max_depth and H >= 2.0 * min_child_weight:
            hist_g[:, :] = 0.0
            hist_h[:, :] = 0.0
            for k in range(s, e):
                r = idx[k]
                hr = hs[r]
                if hr == 0.0:
                    continue
                gr = gs[r]
                for c in range(cols.shape[0]):
                    b = binned[r, cols[c]]
                    hist_g[c, b] += gr
                    hist_h[c, b] += hr
            parent = _score(G, H, l1, l2)
            for c in range(cols.shape[0]):
                gl = 0.0
                hl = 0.0
                nb = n_bins[cols[c]]
                for b in range(nb - 1):
                    gl += hist_g[c, b]
                    hl += hist_h[c, b]
                    hr_ = H - hl
                    if hl < min_child_weight:
                        continue
                    if hr_ < min_child_weight:
                        break
                    gr_ = G - gl
                    gn = 0.5 * (_score(gl, hl, l1, l2) + _score(gr_, hr_, l1, l2) - parent) - gamma
                    if gn > best_gain:
                        best_gain = gn
                        best_c = cols[c]
                        best_b = b
        if best_c >= 0:
            # stable partition of idx[s:e]
            nl = 0
            for k in range(s, e):
                r = idx[k]
                if binned[r, best_c] <= best_b:
                    tmp[s + nl] = r
                    nl += 1
            j = s + nl
            for k in range(s, e):
                r = idx[k]
                if binned[r, best_c] > best_b:
                    tmp[j] = r
                    j += 1
            for k in range(s, e):
                idx[k] = tmp[k]
            feature[node] = best_c
            bin_thr[node] = best_b
            gain[node] = best_gain
            left[node] = n_nodes
            right[node] = n_nodes + 1
            start[n_nodes] = s
            stop[n_nodes] = s + nl
            start[n_nodes + 1] = s + nl
            stop[n_nodes + 1] = e
            depth[n_nodes] = depth[node] + 1
            depth[n_nodes + 1] = depth[node] + 1
            n_nodes += 2
        else:
            Gf = 0.0
            Hf = 0.0
            for k in range(s, e):
                r = idx[k]
                Gf += g[r]
                Hf += h[r]
            value[node] = -lr * _thresh(Gf, l1) / (Hf + l2)
        node += 1

    leaf_of = np.empty(n, np.int32)
    for node in range(n_nodes):
        if feature[node] < 0:
            for k in range(start[node], stop[node]):
                leaf_of[idx[k]] = node
    return (feature[:n_nodes], bin_thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes], cover[:n_nodes], leaf_of)


@njit(cache=True)
def predict_binned(binned, feature, bin_thr, left, right, value):
    n = binned.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if binned[i, feature[node]] <= bin_thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def predict_raw(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
