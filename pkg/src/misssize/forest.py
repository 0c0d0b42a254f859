"""Bagged regression forest, grown breadth-first across all trees at once.

Features are discretized into quantile bins so every candidate split at a
level reduces to weighted bincounts over the active rows of all trees
simultaneously.  Bootstrap resampling is stored as one entry per distinct
(tree, row) pair with a multiplicity weight, node statistics are carried
down from the parent's winning split instead of being recounted, and trees
live in fixed heap layout (node i has children 2i+1, 2i+2), which keeps
both growth and prediction free of Python-level per-node loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Forest:
    feature: np.ndarray    # (trees, nodes) int16, -1 marks a leaf
    threshold: np.ndarray  # (trees, nodes) float, raw-scale cut (<= goes left)
    value: np.ndarray      # (trees, nodes) float, node mean
    n_features: int

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]


def _bin_codes(X: np.ndarray, n_bins: int):
    """Quantile-bin each column; returns (codes, inner_edges)."""
    n, p = X.shape
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    codes = np.empty((n, p), dtype=np.int64)
    # padded edge table: unused tail entries +inf so they never win a split
    edges = np.full((p, n_bins - 1), np.inf)
    for j in range(p):
        cuts = np.unique(np.quantile(X[:, j], qs))
        edges[j, :cuts.size] = cuts
        codes[:, j] = np.searchsorted(cuts, X[:, j], side="left")
    return codes, edges


def _bootstrap_entries(n: int, n_trees: int, rng: np.random.Generator):
    """Draw n-with-replacement per tree; collapse to weighted unique pairs."""
    draws = np.sort(rng.integers(0, n, size=(n_trees, n)), axis=1)
    flat = (np.arange(n_trees)[:, None] * n + draws).ravel()
    first = np.empty(flat.size, dtype=bool)
    first[0] = True
    np.not_equal(flat[1:], flat[:-1], out=first[1:])
    starts = np.flatnonzero(first)
    w = np.diff(np.append(starts, flat.size)).astype(float)
    rows = draws.ravel()[starts]
    trees = starts // n
    return rows, trees, w


def fit_bagged_forest(X: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                      n_trees: int = 100, max_depth: int = 8, min_leaf: int = 5,
                      n_bins: int = 32, mtry: int | None = None) -> Forest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if mtry is None:
        mtry = max(1, p // 3)
    mtry = min(mtry, p)

    codes, edges = _bin_codes(X, n_bins)
    codes_flat = np.ascontiguousarray(codes).ravel()

    n_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full((n_trees, n_nodes), -1, dtype=np.int16)
    threshold = np.zeros((n_trees, n_nodes))
    value = np.zeros((n_trees, n_nodes))

    rows, trees, w = _bootstrap_entries(n, n_trees, rng)
    wy = w * y[rows]
    pos = np.zeros(rows.size, dtype=np.int64)

    # per-slot totals for the current level, carried down through splits
    cnt_node = np.bincount(trees, weights=w, minlength=n_trees)
    sum_node = np.bincount(trees, weights=wy, minlength=n_trees)
    value[:, 0] = sum_node / np.maximum(cnt_node, 1.0)

    for depth in range(max_depth):
        lvl_off = 2 ** depth - 1
        width = 2 ** depth
        n_slots = n_trees * width
        slot = trees * width + (pos - lvl_off)

        # drop entries whose node is too small to ever split
        can = cnt_node >= 2 * min_leaf
        act = np.flatnonzero(can)
        if act.size == 0:
            break
        keep = can[slot]
        if not keep.all():
            rows, trees, pos, w, wy, slot = (a[keep] for a in
                                             (rows, trees, pos, w, wy, slot))
            if rows.size == 0:
                break
        na = act.size
        rank = np.empty(n_slots, dtype=np.int64)
        rank[act] = np.arange(na)
        rslot = rank[slot]

        # candidate features, resampled per tree at each level
        feats = np.argsort(rng.random((n_trees, p)), axis=1)[:, :mtry]

        hist_cnt = np.empty((na, mtry, n_bins))
        hist_sum = np.empty((na, mtry, n_bins))
        row_off = rows * p
        base = rslot * n_bins
        m = na * n_bins
        for q in range(mtry):
            iq = base + codes_flat[row_off + feats[trees, q]]
            hist_cnt[:, q] = np.bincount(iq, weights=w,
                                         minlength=m).reshape(na, n_bins)
            hist_sum[:, q] = np.bincount(iq, weights=wy,
                                         minlength=m).reshape(na, n_bins)

        cl = np.cumsum(hist_cnt, axis=2)[:, :, :-1]  # left count per cut
        sl = np.cumsum(hist_sum, axis=2)[:, :, :-1]
        cr = cnt_node[act, None, None] - cl
        sr = sum_node[act, None, None] - sl

        # padding cuts never qualify: the right child is empty out there
        ok = (cl >= min_leaf) & (cr >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = sl * sl / cl + sr * sr / cr
        score[~ok] = -np.inf

        flat = score.reshape(na, -1)
        best = np.argmax(flat, axis=1)
        ar = np.arange(na)
        best_score = flat[ar, best]
        parent = sum_node[act] ** 2 / cnt_node[act]
        do_split = best_score > parent + 1e-12
        dsp = np.flatnonzero(do_split)
        if dsp.size == 0:
            break

        sid = act[dsp]                      # global slot ids that split
        q_best = best[dsp] // (n_bins - 1)
        b_best = best[dsp] % (n_bins - 1)
        t_of = sid // width
        node_of = lvl_off + (sid % width)
        f_best = feats[t_of, q_best].astype(np.int16)
        feature[t_of, node_of] = f_best
        threshold[t_of, node_of] = edges[f_best, b_best]

        # children inherit their stats from the winning cut
        cl_b = cl[dsp, q_best, b_best]
        sl_b = sl[dsp, q_best, b_best]
        cr_b = cnt_node[sid] - cl_b
        sr_b = sum_node[sid] - sl_b
        left_node = 2 * node_of + 1
        value[t_of, left_node] = sl_b / cl_b
        value[t_of, left_node + 1] = sr_b / cr_b

        width2 = 2 * width
        lvl_off2 = 2 ** (depth + 1) - 1
        left_slot = t_of * width2 + (left_node - lvl_off2)
        cnt_node = np.zeros(n_trees * width2)
        sum_node = np.zeros(n_trees * width2)
        cnt_node[left_slot] = cl_b
        sum_node[left_slot] = sl_b
        cnt_node[left_slot + 1] = cr_b
        sum_node[left_slot + 1] = sr_b

        # advance entries: split rows descend, the rest are finished leaves
        fmap = np.zeros(na, dtype=np.int64)
        bmap = np.zeros(na, dtype=np.int64)
        fmap[dsp] = f_best
        bmap[dsp] = b_best
        esel = do_split[rslot]
        rows, trees, pos, w, wy, rslot = (a[esel] for a in
                                          (rows, trees, pos, w, wy, rslot))
        if rows.size == 0:
            break
        go_left = codes_flat[rows * p + fmap[rslot]] <= bmap[rslot]
        pos = np.where(go_left, 2 * pos + 1, 2 * pos + 2)

    return Forest(feature=feature, threshold=threshold, value=value, n_features=p)


def predict_forest(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Mean over trees of the leaf value each row lands in."""
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    if m == 0:
        return np.zeros(0)
    T, n_nodes = forest.feature.shape
    depth = int(np.log2(n_nodes + 1)) - 1
    X_flat = np.ascontiguousarray(X).ravel()
    feat_flat = forest.feature.ravel().astype(np.int64)
    thr_flat = forest.threshold.ravel()
    base = (np.arange(T) * n_nodes).repeat(m)
    r_off = np.tile(np.arange(m) * p, T)
    pos = np.zeros(T * m, dtype=np.int64)
    for _ in range(depth):
        cur = base + pos
        f = feat_flat[cur]
        leaf = f < 0
        xv = X_flat[r_off + np.maximum(f, 0)]
        nxt = np.where(xv <= thr_flat[cur], 2 * pos + 1, 2 * pos + 2)
        pos = np.where(leaf, pos, nxt)
    vals = forest.value.ravel()[base + pos].reshape(T, m)
    return vals.mean(axis=0)
