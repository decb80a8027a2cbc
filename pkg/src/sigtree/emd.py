"""Earth Mover's Distance as an exact transportation problem.

``solve_transport`` ships ``min(sum(supply), sum(demand))`` units from
suppliers to consumers at minimum total cost. The smaller side is always
routed as the consumer side, so every consumer is filled exactly and the
larger side may keep a surplus. The solver is successive shortest paths
on the bipartite residual network (Bellman-Ford, since backward arcs carry
negative cost); instances are at most palette-sized, 16 x 16 by default.

``oracle_transport`` is an independent brute-force check for tiny integer
instances and is only meant for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InstanceTooLarge, ZeroMass
from .palette import Palette
from .signature import Signature, _check_dims

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True, eq=False)
class FlowPlan:
    flows: np.ndarray
    total_cost: float
    total_flow: float

    @property
    def emd(self) -> float:
        return self.total_cost / self.total_flow


def cost_matrix(palette: Palette) -> np.ndarray:
    """Pairwise Euclidean RGB distances between palette colors."""
    rgb = palette.rgb.astype(np.float64)
    diff = rgb[:, None, :] - rgb[None, :, :]
    return np.ascontiguousarray(np.sqrt((diff**2).sum(axis=2)))


@njit(cache=True)
def _ssp_kernel(supply, demand, cost, tol):
    # requires sum(supply) >= sum(demand) and strictly positive entries
    ns = supply.shape[0]
    nd = demand.shape[0]
    flow = np.zeros((ns, nd))
    rs = supply.copy()
    rd = demand.copy()
    dist_s = np.empty(ns)
    dist_d = np.empty(nd)
    pred_s = np.empty(ns, dtype=np.int64)
    pred_d = np.empty(nd, dtype=np.int64)
    remaining = demand.sum()
    inf = np.inf

    while remaining > tol:
        for i in range(ns):
            pred_s[i] = -1
            dist_s[i] = 0.0 if rs[i] > tol else inf
        for j in range(nd):
            dist_d[j] = inf
            pred_d[j] = -1

        # alternating Bellman-Ford: forward arcs i->j (cost c), backward j->i (cost -c) when flow > 0
        for _ in range(ns + nd + 1):
            changed = False
            for i in range(ns):
                di = dist_s[i]
                if di == inf:
                    continue
                for j in range(nd):
                    cand = di + cost[i, j]
                    if cand < dist_d[j] - 1e-12:
                        dist_d[j] = cand
                        pred_d[j] = i
                        changed = True
            for j in range(nd):
                dj = dist_d[j]
                if dj == inf:
                    continue
                for i in range(ns):
                    if flow[i, j] > tol:
                        cand = dj - cost[i, j]
                        if cand < dist_s[i] - 1e-12:
                            dist_s[i] = cand
                            pred_s[i] = j
                            changed = True
            if not changed:
                break

        target = -1
        best = inf
        for j in range(nd):
            if rd[j] > tol and dist_d[j] < best:
                best = dist_d[j]
                target = j
        if target < 0:
            break

        # bottleneck along the path back to a supplier with spare capacity
        delta = rd[target]
        j = target
        while True:
            i = pred_d[j]
            pj = pred_s[i]
            if pj < 0:
                if rs[i] < delta:
                    delta = rs[i]
                break
            if flow[i, pj] < delta:
                delta = flow[i, pj]
            j = pj

        j = target
        while True:
            i = pred_d[j]
            flow[i, j] += delta
            pj = pred_s[i]
            if pj < 0:
                rs[i] -= delta
                break
            flow[i, pj] -= delta
            j = pj
        rd[target] -= delta
        remaining -= delta

    return flow


@njit(cache=True)
def _transport_core(x, y, cost):
    # drops empty bins, routes the smaller side as consumers, returns (flows, cost, flow)
    tx = x.sum()
    ty = y.sum()
    flows = np.zeros((x.shape[0], y.shape[0]))
    if tx == 0.0 or ty == 0.0:
        return flows, 0.0, 0.0
    rows = np.flatnonzero(x)
    cols = np.flatnonzero(y)
    sub = np.empty((rows.shape[0], cols.shape[0]))
    for a in range(rows.shape[0]):
        for b in range(cols.shape[0]):
            sub[a, b] = cost[rows[a], cols[b]]
    tol = 1e-12 * max(tx, ty)
    if tx >= ty:
        f = _ssp_kernel(x[rows], y[cols], sub, tol)
    else:
        f = _ssp_kernel(y[cols], x[rows], np.ascontiguousarray(sub.T), tol).T
    total = 0.0
    for a in range(rows.shape[0]):
        for b in range(cols.shape[0]):
            flows[rows[a], cols[b]] = f[a, b]
            total += f[a, b] * sub[a, b]
    return flows, total, min(tx, ty)


@njit(cache=True)
def _emd_kernel(x, y, cost):
    flows, total, flow = _transport_core(x, y, cost)
    if flow == 0.0:
        return np.nan
    return total / flow


def _as_mass(values, name):
    arr = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} masses must be finite and non-negative")
    return arr


def _as_cost(cost, shape):
    c = np.ascontiguousarray(cost, dtype=np.float64)
    if c.shape != shape:
        raise DimensionMismatch(f"cost is {c.shape}, expected {shape}")
    return c


def solve_transport(supply, demand, cost) -> FlowPlan:
    """Minimum-cost flow plan shipping ``min(sum(supply), sum(demand))`` units.

    Row sums of the returned flows never exceed ``supply``, column sums never
    exceed ``demand``. Zero rows and columns are dropped before solving and
    come back as zeros.
    """
    x = _as_mass(supply, "supply")
    y = _as_mass(demand, "demand")
    c = _as_cost(cost, (x.size, y.size))
    if x.sum() == 0.0 and y.sum() == 0.0:
        raise ZeroMass("both supply and demand are empty")
    flows, total, flow = _transport_core(x, y, c)
    return FlowPlan(flows, float(total), float(flow))


def _no_mass(x, y):
    if x.sum() == 0.0 and y.sum() == 0.0:
        return ZeroMass("both weight vectors are empty")
    # one side empty: nothing to normalize by
    return ZeroMass("one weight vector is empty; EMD needs mass on both sides")


def emd(supply, demand, cost) -> float:
    """Optimal transport cost divided by the total flow ``min(sum(a), sum(b))``."""
    x = _as_mass(supply, "supply")
    y = _as_mass(demand, "demand")
    c = _as_cost(cost, (x.size, y.size))
    d = _emd_kernel(x, y, c)
    if d != d:
        raise _no_mass(x, y)
    return float(d)


def emd_signatures(a: Signature, b: Signature, cost: np.ndarray) -> float:
    """EMD between the weight vectors of two signatures.

    Works on raw block masses (set bit positions) because the normalized
    distance is scale invariant and the masses are small exact integers.
    Blocks of union signatures contribute the sum of all their set bits.
    ``cost`` must be a C-contiguous float64 ``n x n`` array.
    """
    if a.n != b.n or a.m != b.m:
        _check_dims(a, b)
    if cost.shape != (a.n, a.n):
        raise DimensionMismatch(f"cost is {cost.shape}, signatures have {a.n} blocks")
    d = _emd_kernel(a.masses, b.masses, cost)
    if d != d:
        raise _no_mass(a.masses, b.masses)
    return float(d)


MAX_ORACLE_BINS = 4
MAX_ORACLE_UNITS = 20


def oracle_transport(supply, demand, cost, granularity=1) -> float:
    """Brute-force minimum transport cost over integer flow matrices.

    Masses must be multiples of ``granularity`` with at most 20 units per
    bin and at most 4 bins per side. Every flow matrix whose cells are
    multiples of ``granularity``, whose row/column sums respect the
    capacities, and whose total is the smaller side's total is a candidate;
    the search is a depth-first enumeration that only skips subtrees which
    provably cannot beat the best plan found so far (costs are
    non-negative). Intended for tests only.
    """
    x = np.asarray(supply, dtype=np.float64).ravel()
    y = np.asarray(demand, dtype=np.float64).ravel()
    c = np.asarray(cost, dtype=np.float64)
    if x.size > MAX_ORACLE_BINS or y.size > MAX_ORACLE_BINS:
        raise InstanceTooLarge(f"oracle handles at most {MAX_ORACLE_BINS} bins per side")
    if c.shape != (x.size, y.size):
        raise DimensionMismatch(f"cost is {c.shape}, expected {(x.size, y.size)}")
    if np.any(c < 0):
        raise ValueError("oracle needs non-negative costs")

    def units(v):
        u = v / granularity
        r = np.rint(u)
        if np.any(np.abs(u - r) > 1e-9) or np.any(r < 0):
            raise ValueError("masses must be non-negative multiples of granularity")
        if np.any(r > MAX_ORACLE_UNITS):
            raise InstanceTooLarge(f"oracle handles at most {MAX_ORACLE_UNITS} units per bin")
        return [int(t) for t in r]

    xs, ys = units(x), units(y)
    if sum(xs) == 0 and sum(ys) == 0:
        raise ZeroMass("both supply and demand are empty")
    # orient so the column side is the smaller one and must be filled exactly
    cc = c.tolist()
    if sum(xs) < sum(ys):
        xs, ys = ys, xs
        cc = [list(col) for col in zip(*cc)]
    ns, nd = len(xs), len(ys)

    # rows >= i ordered by cost, per column, for the pruning bound
    by_cost = [
        [sorted(range(i, ns), key=lambda r: cc[r][j]) for j in range(nd)]
        for i in range(ns + 1)
    ]

    # least-cost-cell greedy plan: a feasible starting upper bound
    row_left = list(xs)
    col_left = list(ys)
    best = 0.0
    for _, i, j in sorted((cc[i][j], i, j) for i in range(ns) for j in range(nd)):
        v = min(row_left[i], col_left[j])
        row_left[i] -= v
        col_left[j] -= v
        best += v * cc[i][j]
    row_left = list(xs)
    col_left = list(ys)
    # the enumeration below must find a plan no worse than the greedy one
    best = math.nextafter(best, math.inf)

    def bound(i, j):
        # relax column competition: each open column fills alone from its
        # cheapest usable rows (columns < j can no longer use row i)
        total = 0.0
        for jj in range(nd):
            need = col_left[jj]
            if not need:
                continue
            for r in by_cost[i if jj >= j else i + 1][jj]:
                take = min(need, row_left[r])
                total += take * cc[r][jj]
                need -= take
                if not need:
                    break
            if need:
                return math.inf
        return total

    def visit(cell, acc):
        nonlocal best
        if cell == ns * nd:
            if not any(col_left) and acc < best:
                best = acc
            return
        i, j = divmod(cell, nd)
        if j == 0 and sum(col_left) > sum(row_left[i:]):
            return
        if acc + bound(i, j) >= best:
            return
        top = min(row_left[i], col_left[j])
        # the last row has to fill whatever each column still needs
        low = col_left[j] if i == ns - 1 else 0
        for v in range(top, low - 1, -1):
            row_left[i] -= v
            col_left[j] -= v
            visit(cell + 1, acc + v * cc[i][j])
            row_left[i] += v
            col_left[j] += v

    visit(0, 0.0)
    return best * granularity
