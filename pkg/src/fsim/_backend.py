"""Hot numeric kernels: leave-one-out CV over (tuning x direction) grids.

Two interchangeable implementations live here: numba @njit loops (parallel
over directions) and a pure-numpy fallback.  Selection is by the
FSIM_BACKEND environment variable: "numba", "numpy", or "auto" (default:
numba when importable).  Both produce the same numbers up to summation
order (<= 1e-12 relative); each is bit-deterministic on its own.

Conventions shared by every kernel
----------------------------------
* kernel codes: 0 = Epanechnikov 0.75*(1-u^2) on [0,1), 1 = indicator of [0,1).
* bandwidth CV cell: LOO Nadaraya-Watson at each training point; a zero
  denominator falls back to the response of the nearest remaining point
  (smallest index on ties) and flags the cell degenerate.
* kNN CV cell with k neighbours: the local bandwidth is the (k+1)-th
  smallest LOO distance, so exactly k points get strictly positive weight
  (the boundary point sits at u = 1, outside the support).  A zero local
  bandwidth averages the responses at distance exactly zero; an empty
  weight sum falls back to the nearest point.  Both flag the cell.
"""

from __future__ import annotations

import os

import numpy as np

EPANECHNIKOV = 0
INDICATOR = 1

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def backend_name() -> str:
    """Active backend, re-read from the environment on every call."""
    choice = os.environ.get("FSIM_BACKEND", "auto").lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("FSIM_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if HAS_NUMBA else "numpy"


def _kernel_weights(u: np.ndarray, kernel_code: int) -> np.ndarray:
    inside = u < 1.0
    if kernel_code == EPANECHNIKOV:
        return np.where(inside, 0.75 * (1.0 - u * u), 0.0)
    return inside.astype(float)


def _quantile_sorted(sorted_vals: np.ndarray, q: float) -> float:
    # np.quantile 'linear' on an already sorted array
    pos = q * (sorted_vals.size - 1)
    lo = int(np.floor(pos))
    if lo + 1 >= sorted_vals.size:
        return float(sorted_vals[-1])
    frac = pos - lo
    return float(sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo]))


# --------------------------------------------------------------------------
# numpy implementations (single direction, distance-matrix form)
# --------------------------------------------------------------------------


def cv_bandwidth_distances(
    Dm: np.ndarray, y: np.ndarray, h_grid: np.ndarray, kernel_code: int
) -> tuple[np.ndarray, np.ndarray]:
    """LOO CV criterion per bandwidth for one distance matrix."""
    n = y.size
    off = ~np.eye(n, dtype=bool)
    masked = np.where(off, Dm, np.inf)
    nearest = masked.argmin(axis=1)
    crit = np.empty(h_grid.size)
    degen = np.zeros(h_grid.size, dtype=bool)
    for g, h in enumerate(h_grid):
        W = np.where(off, _kernel_weights(Dm / h, kernel_code), 0.0)
        den = W.sum(axis=1)
        num = W @ y
        bad = den == 0.0
        pred = np.where(bad, y[nearest], num / np.where(bad, 1.0, den))
        crit[g] = np.mean((y - pred) ** 2)
        degen[g] = bool(bad.any())
    return crit, degen


def cv_knn_distances(
    Dm: np.ndarray, y: np.ndarray, ks: np.ndarray, kernel_code: int
) -> tuple[np.ndarray, np.ndarray]:
    """LOO CV criterion per neighbour count for one distance matrix."""
    n = y.size
    off = ~np.eye(n, dtype=bool)
    loo = Dm[off].reshape(n, n - 1)  # row j: distances to the other points, index order
    sorted_loo = np.sort(loo, axis=1)
    masked = np.where(off, Dm, np.inf)
    nearest = masked.argmin(axis=1)
    zero_mask = (Dm == 0.0) & off
    zero_counts = zero_mask.sum(axis=1)
    crit = np.empty(ks.size)
    degen = np.zeros(ks.size, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for t, k in enumerate(ks):
            H = sorted_loo[:, k]  # (k+1)-th smallest LOO distance
            hzero = H == 0.0
            U = Dm / np.where(hzero, 1.0, H)[:, None]
            W = np.where(off, _kernel_weights(U, kernel_code), 0.0)
            den = W.sum(axis=1)
            num = W @ y
            bad = ~hzero & (den == 0.0)
            pred = num / np.where(den == 0.0, 1.0, den)
            pred = np.where(bad, y[nearest], pred)
            if hzero.any():
                pred = np.where(hzero, (zero_mask @ y) / np.maximum(zero_counts, 1), pred)
            crit[t] = np.mean((y - pred) ** 2)
            degen[t] = bool(bad.any() or hzero.any())
    return crit, degen


def _np_h_grid_from_distances(Dm: np.ndarray, G: int) -> tuple[np.ndarray, bool]:
    n = Dm.shape[0]
    iu = np.triu_indices(n, k=1)
    vals = np.sort(Dm[iu])
    if vals.size == 0 or vals[-1] <= 0.0:
        return np.zeros(G), False
    positive_min = float(vals[vals > 0.0][0])
    q_lo = _quantile_sorted(vals, 0.05)
    if q_lo <= 0.0:
        q_lo = positive_min * 0.5
    q_hi = _quantile_sorted(vals, 0.95)
    if q_hi <= q_lo:
        q_hi = q_lo
    grid = np.exp(np.linspace(np.log(q_lo), np.log(q_hi), G))
    grid[0], grid[-1] = q_lo, q_hi
    return grid, True


def _np_h_grids_from_projections(Pt: np.ndarray, G: int) -> tuple[np.ndarray, np.ndarray]:
    D = Pt.shape[0]
    H = np.zeros((G, D))
    ok = np.zeros(D, dtype=bool)
    for m in range(D):
        Dm = np.abs(Pt[m][:, None] - Pt[m][None, :])
        H[:, m], ok[m] = _np_h_grid_from_distances(Dm, G)
    return H, ok


def _np_cv_bandwidth_projections(Pt, y, H, kernel_code):
    D = Pt.shape[0]
    G = H.shape[0]
    crit = np.full((G, D), np.inf)
    degen = np.zeros((G, D), dtype=bool)
    for m in range(D):
        Dm = np.abs(Pt[m][:, None] - Pt[m][None, :])
        crit[:, m], degen[:, m] = cv_bandwidth_distances(Dm, y, H[:, m], kernel_code)
    return crit, degen


def _np_cv_knn_projections(Pt, y, ks, kernel_code):
    D = Pt.shape[0]
    crit = np.full((ks.size, D), np.inf)
    degen = np.zeros((ks.size, D), dtype=bool)
    for m in range(D):
        Dm = np.abs(Pt[m][:, None] - Pt[m][None, :])
        crit[:, m], degen[:, m] = cv_knn_distances(Dm, y, ks, kernel_code)
    return crit, degen


# --------------------------------------------------------------------------
# numba implementations (vectorized over directions, projections form)
# --------------------------------------------------------------------------

if HAS_NUMBA:
    from numba import njit, prange

    @njit(cache=True, inline="always")
    def _nb_weight(u, kernel_code):
        if u < 1.0:
            if kernel_code == 0:
                return 0.75 * (1.0 - u * u)
            return 1.0
        return 0.0

    @njit(cache=True, parallel=True)
    def _nb_cv_bandwidth_projections(Pt, y, H, kernel_code):
        D, n = Pt.shape
        G = H.shape[0]
        crit = np.zeros((G, D))
        degen = np.zeros((G, D), dtype=np.bool_)
        for m in prange(D):
            p = Pt[m]
            dv = np.empty(n)
            for j in range(n):
                dmin = np.inf
                imin = -1
                for i in range(n):
                    if i == j:
                        dv[i] = np.inf
                        continue
                    d = abs(p[i] - p[j])
                    dv[i] = d
                    if d < dmin:
                        dmin = d
                        imin = i
                for g in range(G):
                    h = H[g, m]
                    num = 0.0
                    den = 0.0
                    for i in range(n):
                        if i == j:
                            continue
                        w = _nb_weight(dv[i] / h, kernel_code)
                        num += w * y[i]
                        den += w
                    if den > 0.0:
                        pred = num / den
                    else:
                        pred = y[imin]
                        degen[g, m] = True
                    r = y[j] - pred
                    crit[g, m] += r * r
            for g in range(G):
                crit[g, m] /= n
        return crit, degen

    @njit(cache=True, parallel=True)
    def _nb_cv_knn_projections(Pt, y, ks, kernel_code):
        D, n = Pt.shape
        K = ks.size
        crit = np.zeros((K, D))
        degen = np.zeros((K, D), dtype=np.bool_)
        for m in prange(D):
            p = Pt[m]
            dv = np.empty(n)
            ds = np.empty(n - 1)
            for j in range(n):
                dmin = np.inf
                imin = -1
                pos = 0
                for i in range(n):
                    if i == j:
                        dv[i] = np.inf
                        continue
                    d = abs(p[i] - p[j])
                    dv[i] = d
                    ds[pos] = d
                    pos += 1
                    if d < dmin:
                        dmin = d
                        imin = i
                ds_sorted = np.sort(ds)
                for t in range(K):
                    Hk = ds_sorted[ks[t]]
                    if Hk == 0.0:
                        s = 0.0
                        c = 0
                        for i in range(n):
                            if i != j and dv[i] == 0.0:
                                s += y[i]
                                c += 1
                        pred = s / c
                        degen[t, m] = True
                    else:
                        num = 0.0
                        den = 0.0
                        for i in range(n):
                            if i == j:
                                continue
                            w = _nb_weight(dv[i] / Hk, kernel_code)
                            num += w * y[i]
                            den += w
                        if den > 0.0:
                            pred = num / den
                        else:
                            pred = y[imin]
                            degen[t, m] = True
                    r = y[j] - pred
                    crit[t, m] += r * r
            for t in range(K):
                crit[t, m] /= n
        return crit, degen

    @njit(cache=True, inline="always")
    def _nb_quantile_sorted(vals_sorted, q):
        npairs = vals_sorted.size
        qpos = q * (npairs - 1)
        lo_idx = int(np.floor(qpos))
        if lo_idx + 1 >= npairs:
            return vals_sorted[-1]
        frac = qpos - lo_idx
        return vals_sorted[lo_idx] + frac * (vals_sorted[lo_idx + 1] - vals_sorted[lo_idx])

    @njit(cache=True, parallel=True)
    def _nb_h_grids_from_projections(Pt, G):
        D, n = Pt.shape
        H = np.zeros((G, D))
        ok = np.zeros(D, dtype=np.bool_)
        for m in prange(D):
            p = Pt[m]
            npairs = n * (n - 1) // 2
            vals = np.empty(npairs)
            pos = 0
            for i in range(n):
                for j in range(i + 1, n):
                    vals[pos] = abs(p[i] - p[j])
                    pos += 1
            vals_sorted = np.sort(vals)
            if vals_sorted[-1] <= 0.0:
                continue
            smallest_pos = np.inf
            for v in vals_sorted:
                if v > 0.0:
                    smallest_pos = v
                    break
            q_lo = _nb_quantile_sorted(vals_sorted, 0.05)
            if q_lo <= 0.0:
                q_lo = smallest_pos * 0.5
            q_hi = _nb_quantile_sorted(vals_sorted, 0.95)
            if q_hi <= q_lo:
                q_hi = q_lo
            grid = np.exp(np.linspace(np.log(q_lo), np.log(q_hi), G))
            grid[0] = q_lo
            grid[-1] = q_hi
            for g in range(G):
                H[g, m] = grid[g]
            ok[m] = True
        return H, ok


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def h_grids_from_projections(Pt: np.ndarray, G: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-direction geometric bandwidth grids from projected distances.

    Returns (H, ok): H is (G, D) with column m the grid for direction m;
    ok[m] is False when every projected distance vanishes for direction m.
    """
    Pt = np.ascontiguousarray(Pt, dtype=float)
    if backend_name() == "numba":
        return _nb_h_grids_from_projections(Pt, G)
    return _np_h_grids_from_projections(Pt, G)


def cv_bandwidth_projections(Pt, y, H, kernel_code) -> tuple[np.ndarray, np.ndarray]:
    """LOO CV criterion matrix (bandwidth grid x directions) from projections (D, n)."""
    Pt = np.ascontiguousarray(Pt, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    H = np.ascontiguousarray(H, dtype=float)
    if backend_name() == "numba":
        return _nb_cv_bandwidth_projections(Pt, y, H, kernel_code)
    return _np_cv_bandwidth_projections(Pt, y, H, kernel_code)


def cv_knn_projections(Pt, y, ks, kernel_code) -> tuple[np.ndarray, np.ndarray]:
    """LOO CV criterion matrix (k grid x directions) from projections (D, n)."""
    Pt = np.ascontiguousarray(Pt, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    if backend_name() == "numba":
        return _nb_cv_knn_projections(Pt, y, ks, kernel_code)
    return _np_cv_knn_projections(Pt, y, ks, kernel_code)
