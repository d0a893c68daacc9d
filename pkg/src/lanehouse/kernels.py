"""Hot inner loops: split search, tree growing, lasso coordinate descent, traversal.

Every kernel exists twice, a numba-compiled loop (``*_jit``) and a numpy
version (``*_np``). The module-level dispatchers pick one according to
:func:`lanehouse._accel.get_backend`. The split scan and tree traversal are
bit-identical across backends; the lasso sweep agrees to rounding only
because the numpy path delegates dot products to BLAS.
"""

from __future__ import annotations

import numpy as np

from ._accel import get_backend, njit


# ---------------------------------------------------------------- split scan
#
# Gains that differ only by rounding count as ties: the winner is the
# earliest candidate whose gain is at least ``(1 - TIE_REL)`` times the
# best one. Two features inducing the same partition accumulate their
# prefix sums in different row orders, so exact comparison would let the
# last bit decide.

TIE_REL = 1e-12


@njit(cache=True, nogil=True)
def split_scan_jit(xs, ys, min_leaf):
    n = xs.shape[0]
    total = 0.0
    for i in range(n):
        total += ys[i]
    parent = total * total / n
    gains = np.full(max(n - 1, 0), -np.inf)
    best_gain = 0.0
    left = 0.0
    for i in range(n - 1):
        left += ys[i]
        n_left = i + 1
        n_right = n - n_left
        if n_left < min_leaf:
            continue
        if n_right < min_leaf:
            break
        if not xs[i] < xs[i + 1]:
            continue
        right = total - left
        gains[i] = left * left / n_left + right * right / n_right - parent
        if gains[i] > best_gain:
            best_gain = gains[i]
    if not best_gain > 0.0:
        return 0.0, -1
    cutoff = best_gain * (1.0 - TIE_REL)
    for i in range(n - 1):
        if gains[i] >= cutoff:
            return gains[i], i
    return 0.0, -1


def split_scan_np(xs, ys, min_leaf):
    n = xs.shape[0]
    csum = np.cumsum(ys)
    total = csum[-1]
    parent = total * total / n
    left = csum[:-1]
    right = total - left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    gain = left * left / n_left + right * right / n_right - parent
    ok = (n_left >= min_leaf) & (n_right >= min_leaf) & (xs[:-1] < xs[1:])
    if not ok.any():
        return 0.0, -1
    gain = np.where(ok, gain, -np.inf)
    best = gain.max()
    if not best > 0.0:
        return 0.0, -1
    pos = int(np.argmax(gain >= best * (1.0 - TIE_REL)))
    return float(gain[pos]), pos


def split_scan(xs: np.ndarray, ys: np.ndarray, min_leaf: int) -> tuple[float, int]:
    """Best boundary in pre-sorted ``xs`` by squared-error reduction.

    Returns ``(gain, pos)`` where the split puts ``xs[:pos + 1]`` on the left;
    ``pos == -1`` when no admissible boundary has positive gain. Only
    boundaries between distinct values with both sides holding at least
    ``min_leaf`` rows are considered; the earliest boundary wins ties
    (see ``TIE_REL``).
    """
    if get_backend() == "numba":
        gain, pos = split_scan_jit(xs, ys, min_leaf)
        return float(gain), int(pos)
    return split_scan_np(xs, ys, min_leaf)


@njit(cache=True, nogil=True)
def node_split_jit(x, yc, candidates, min_leaf):
    by_target = np.argsort(yc, kind="mergesort")
    k = candidates.shape[0]
    gains = np.zeros(k)
    pos_f = np.full(k, -1)
    lo_f = np.zeros(k)
    hi_f = np.zeros(k)
    best_gain = 0.0
    for c in range(k):
        col = x[:, candidates[c]]
        order = by_target[np.argsort(col[by_target], kind="mergesort")]
        xs = col[order]
        gain, pos = split_scan_jit(xs, yc[order], min_leaf)
        if pos >= 0:
            gains[c] = gain
            pos_f[c] = pos
            lo_f[c] = xs[pos]
            hi_f[c] = xs[pos + 1]
            if gain > best_gain:
                best_gain = gain
    if best_gain > 0.0:
        cutoff = best_gain * (1.0 - TIE_REL)
        for c in range(k):
            if pos_f[c] >= 0 and gains[c] >= cutoff:
                return gains[c], candidates[c], pos_f[c], lo_f[c], hi_f[c]
    return 0.0, -1, -1, 0.0, 0.0


def node_split_np(x, yc, candidates, min_leaf):
    found = []
    for f in candidates:
        col = x[:, f]
        order = np.lexsort((yc, col))
        xs = col[order]
        gain, pos = split_scan_np(xs, yc[order], min_leaf)
        if pos >= 0:
            found.append((gain, int(f), pos, float(xs[pos]), float(xs[pos + 1])))
    if not found:
        return (0.0, -1, -1, 0.0, 0.0)
    cutoff = max(r[0] for r in found) * (1.0 - TIE_REL)
    return next(r for r in found if r[0] >= cutoff)


def node_split(x: np.ndarray, yc: np.ndarray, candidates: np.ndarray, min_leaf: int):
    """Best split over several features of one node.

    Rows are ordered by (feature value, centred target) per feature, then
    scanned with :func:`split_scan`. Returns ``(gain, feature, pos, lo, hi)``
    with ``lo``/``hi`` the values straddling the boundary; ``feature == -1``
    means no split. Earlier entries of ``candidates`` win ties.
    """
    if get_backend() == "numba":
        gain, f, pos, lo, hi = node_split_jit(x, yc, candidates, min_leaf)
        return float(gain), int(f), int(pos), float(lo), float(hi)
    return node_split_np(x, yc, candidates, min_leaf)


# ------------------------------------------------------------------ SplitMix64
#
# Counter-based SplitMix64. A stream is a 64-bit state derived from integer
# keys by ``derive(h, k) = mix64((h ^ k) + GAMMA)`` starting from h = 0; its
# i-th draw (i = 0, 1, ...) is ``mix64(state + (i + 1) * GAMMA)``. Integers
# below a bound are ``draw % bound``. Arithmetic is modulo 2**64.

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive(*keys: int) -> int:
    return derive_from(0, *keys)


def derive_from(state: int, *keys: int) -> int:
    h = state
    for k in keys:
        h = mix64(((h ^ (k & MASK64)) + GAMMA) & MASK64)
    return h


def draws_np(state: int, count: int) -> np.ndarray:
    z = np.uint64(state) + np.arange(1, count + 1, dtype=np.uint64) * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _mix64_jit(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _derive_jit(h, k):
    return _mix64_jit((h ^ np.uint64(k)) + np.uint64(GAMMA))


def sample_features_np(p: int, m: int, state: int) -> np.ndarray:
    """``m`` distinct features out of ``p`` by partial Fisher-Yates, sorted."""
    pool = np.arange(p, dtype=np.int64)
    d = draws_np(state, m)
    for i in range(m):
        j = i + int(d[i] % np.uint64(p - i))
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:m])


@njit(cache=True, nogil=True)
def _sample_features_jit(p, m, state):
    pool = np.arange(p)
    for i in range(m):
        z = _mix64_jit(state + np.uint64(i + 1) * np.uint64(GAMMA))
        j = i + np.int64(z % np.uint64(p - i))
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return np.sort(pool[:m])


def bootstrap_np(n: int, state: int) -> np.ndarray:
    return (draws_np(state, n) % np.uint64(n)).astype(np.int64)


# ------------------------------------------------------------- tree building


def _sorted_sum(y):
    s = 0.0
    for v in np.sort(y):
        s += v
    return s


@njit(cache=True, nogil=True)
def _sorted_sum_jit(y):
    s = 0.0
    for v in np.sort(y):
        s += v
    return s


def midpoint(lo: float, hi: float) -> float:
    t = lo + (hi - lo) / 2
    return t if lo <= t < hi else lo


@njit(cache=True, nogil=True)
def _midpoint_jit(lo, hi):
    t = lo + (hi - lo) / 2
    if lo <= t and t < hi:
        return t
    return lo


@njit(cache=True, nogil=True)
def grow_tree_jit(x, y, rows, max_depth, min_leaf, min_split, fixed, m, tree_state):
    """Pre-order tree arrays; ``m > 0`` samples ``m`` features per node, else uses ``fixed``."""
    p = x.shape[1]
    cap = 2 * rows.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    gain = np.zeros(cap)
    work = rows.copy()
    buf = np.empty_like(work)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_parent = np.empty(cap, dtype=np.int64)
    st_side = np.empty(cap, dtype=np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = work.shape[0]
    st_depth[0] = 0
    st_parent[0] = -1
    st_side[0] = 0
    top = 1
    n_nodes = 0
    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = n_nodes
        n_nodes += 1
        parent = st_parent[top]
        if parent >= 0:
            if st_side[top] == 0:
                left[parent] = node
            else:
                right[parent] = node
        idx = work[start:end]
        n = end - start
        yn = y[idx]
        mean = _sorted_sum_jit(yn) / n
        value[node] = mean
        count[node] = n
        if depth >= max_depth or n < min_split or n < 2:
            continue
        if m > 0:
            cands = _sample_features_jit(p, m, _derive_jit(tree_state, node))
        else:
            cands = fixed
        xn = x[idx]
        g, f, pos, lo, hi = node_split_jit(xn, yn - mean, cands, min_leaf)
        if f < 0:
            continue
        thr = _midpoint_jit(lo, hi)
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        n_left = 0
        for i in range(n):
            if xn[i, f] <= thr:
                buf[n_left] = idx[i]
                n_left += 1
        k = n_left
        for i in range(n):
            if not xn[i, f] <= thr:
                buf[k] = idx[i]
                k += 1
        work[start:end] = buf[:n]
        mid = start + n_left
        # right child pushed first so the left subtree is numbered first
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_side[top] = 1
        top += 1
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_side[top] = 0
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], gain[:n_nodes])


# ------------------------------------------------------ lasso coordinate descent


@njit(cache=True, nogil=True)
def lasso_cd_jit(gram, c, yy, beta, lam, tol, max_iter, history):
    p = gram.shape[0]
    g = np.empty(p)
    converged = False
    sweeps = 0
    for it in range(max_iter + 1):
        # gradient and objective recomputed from scratch each sweep (no drift)
        quad = 0.0
        lin = 0.0
        l1 = 0.0
        for j in range(p):
            acc = 0.0
            for k in range(p):
                acc += gram[j, k] * beta[k]
            g[j] = c[j] - acc
            quad += beta[j] * acc
            lin += c[j] * beta[j]
            l1 += abs(beta[j])
        history[it] = 0.5 * (yy - 2.0 * lin + quad) + lam * l1
        if converged or it == max_iter:
            break
        max_delta = 0.0
        for j in range(p):
            cj = gram[j, j]
            old = beta[j]
            if cj == 0.0:
                beta[j] = 0.0
                continue
            rho = g[j] + cj * old
            if rho > lam:
                new = (rho - lam) / cj
            elif rho < -lam:
                new = (rho + lam) / cj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for k in range(p):
                    g[k] -= gram[k, j] * delta
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        sweeps = it + 1
        if max_delta < tol:
            converged = True
    return sweeps, converged


def lasso_cd_np(gram, c, yy, beta, lam, tol, max_iter, history):
    p = gram.shape[0]
    converged = False
    sweeps = 0
    for it in range(max_iter + 1):
        gb = gram @ beta
        g = c - gb
        history[it] = 0.5 * (yy - 2.0 * float(c @ beta) + float(beta @ gb)) + lam * float(np.abs(beta).sum())
        if converged or it == max_iter:
            break
        max_delta = 0.0
        for j in range(p):
            cj = gram[j, j]
            if cj == 0.0:
                beta[j] = 0.0
                continue
            rho = g[j] + cj * beta[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / cj
            delta = new - beta[j]
            if delta != 0.0:
                g -= gram[:, j] * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        sweeps = it + 1
        if max_delta < tol:
            converged = True
    return sweeps, converged


def lasso_cd(z, y, beta, lam, tol, max_iter):
    """Cyclic coordinate descent on ``0.5*||y - z b||^2 + lam*||b||_1``.

    Works on the Gram matrix ``z'z`` and ``z'y`` so a sweep costs O(p^2)
    whatever the row count; columns with zero norm stay at zero.

    ``beta`` is updated in place. Returns ``(sweeps, converged, history)``
    where ``history[t]`` is the objective after ``t`` full sweeps.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gram = np.ascontiguousarray(z.T @ z)
    c = z.T @ y
    yy = float(y @ y)
    history = np.empty(max_iter + 1)
    args = (gram, c, yy, beta, float(lam), float(tol), int(max_iter), history)
    if get_backend() == "numba":
        sweeps, converged = lasso_cd_jit(*args)
    else:
        sweeps, converged = lasso_cd_np(*args)
    return int(sweeps), bool(converged), history[: sweeps + 1].copy()


# ------------------------------------------------------------ tree traversal


@njit(cache=True, nogil=True)
def tree_predict_jit(feature, threshold, left, right, value, x):
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def tree_predict_np(feature, threshold, left, right, value, x):
    n = x.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        cur = node[idx]
        go_left = x[idx, feature[cur]] <= threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active = feature[node] >= 0
    return value[node].astype(np.float64)


def tree_predict(feature, threshold, left, right, value, x):
    """Route each row of ``x`` through a flattened tree (``feature < 0`` marks leaves)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if get_backend() == "numba":
        return tree_predict_jit(feature, threshold, left, right, value, x)
    return tree_predict_np(feature, threshold, left, right, value, x)
