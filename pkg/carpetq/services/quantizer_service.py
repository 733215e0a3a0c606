"""Empirical quantization of discretized self-affine measures.

Distances are Euclidean throughout. For r > 0 the objective is
sum w d^r (the error is its r-th root); for r = 0 it is sum w log max(d, 1e-300),
so a centre sitting on an atom contributes w log 1e-300. Lloyd scales its
centre steps with distances floored at half of the smallest atom height;
that floor never enters a reported value.
"""
import heapq
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.stats import linregress

from ..config import get_settings
from ..errors import (
    BudgetExceeded,
    GridTooCoarse,
    InvalidK,
    InvalidParam,
    InvalidR,
    NonDecreaseDetected,
    SeparationRequired,
)
from ..models.carpet import DerivedQuantities
from ..models.reports import BoundRow, CurveRow, ErrorCurve, LloydResult, WeightedCloud
from ..models.symbolic import Antichain, AntichainKind
from .antichain_service import build_antichain, level_arrays, refined_members
from .dims_service import s0, solve_sr

logger = logging.getLogger(__name__)

MAX_ORACLE_ATOMS = 10_000
MAX_ORACLE_GRID = 64
MAX_ORACLE_TUPLES = 50_000_000
DESCENT_SLACK = 1e-12
MONOTONE_SLACK = 1e-9
INNER_STEPS = 50
LOG_FLOOR = 1e-300


# --- clouds --------------------------------------------------------------------------


def _cloud_from_squares(
    carpet: DerivedQuantities,
    log_w: np.ndarray,
    depths: np.ndarray,
    x_lo: np.ndarray,
    y_lo: np.ndarray,
    provenance: dict,
) -> WeightedCloud:
    ells = np.array([carpet.ell(k) for k in range(int(depths.max()) + 1)], dtype=np.float64)
    width = float(carpet.n) ** (-ells[depths])
    height = float(carpet.m) ** (-depths.astype(np.float64))
    points = np.column_stack([x_lo + 0.5 * width, y_lo + 0.5 * height])
    weights = np.exp(log_w - log_w.max())
    weights = weights / weights.sum()
    return WeightedCloud(
        points=points,
        weights=weights,
        cell=np.column_stack([width, height]),
        provenance=provenance,
        separated=carpet.separated,
        bias=carpet.delta * float(height.max()),
    )


def discretize(carpet: DerivedQuantities, depth: int, budget: Optional[int] = None) -> WeightedCloud:
    """One atom per word of Omega_depth, at its square's centre, with weight mu."""
    log_w, x_lo, y_lo = level_arrays(carpet, depth, budget)
    depths = np.full(log_w.size, depth, dtype=np.int64)
    cloud = _cloud_from_squares(carpet, log_w, depths, x_lo, y_lo, {"source": "omega", "depth": depth})
    logger.info("discretized depth %d: %d atoms, bias %.3g", depth, len(cloud), cloud.bias)
    return cloud


def sample_cloud(points: np.ndarray, seed: int) -> WeightedCloud:
    """Equal-weight cloud over chaos-game samples (cross-checks only)."""
    count = points.shape[0]
    return WeightedCloud(
        points=np.asarray(points, dtype=np.float64),
        weights=np.full(count, 1.0 / count),
        cell=np.zeros((count, 2)),
        provenance={"source": "sample", "seed": seed, "count": count},
        separated=False,
        bias=0.0,
    )


def antichain_cloud(carpet: DerivedQuantities, antichain: Antichain) -> WeightedCloud:
    """One atom per antichain member, at its square's centre."""
    if antichain.x_lo is None:
        raise InvalidParam("antichain was built without geometry", {"kind": antichain.kind.value})
    provenance = {"source": "antichain", "kind": antichain.kind.value, "param": antichain.param, "r": antichain.r}
    return _cloud_from_squares(
        carpet, antichain.log_weights, antichain.depths, antichain.x_lo, antichain.y_lo, provenance
    )


def refine_cloud(
    carpet: DerivedQuantities,
    kind,
    param: float,
    r: float = 0.0,
    levels: int = 1,
    budget: Optional[int] = None,
) -> WeightedCloud:
    """Atoms at the centres of the descendants ``levels`` below each antichain member."""
    log_w, depths, x_lo, y_lo, _ = refined_members(carpet, kind, param, r, levels, budget)
    provenance = {"source": "refined", "kind": AntichainKind(kind).value, "param": param, "r": r, "levels": levels}
    return _cloud_from_squares(carpet, log_w, depths, x_lo, y_lo, provenance)


# --- objective -----------------------------------------------------------------------


def _step_floor(cloud: WeightedCloud) -> float:
    height = cloud.min_height if len(cloud) and cloud.min_height > 0 else 0.0
    return max(LOG_FLOOR, 0.5 * height)


def _cost(weights: np.ndarray, dist: np.ndarray, r: float, floor: float) -> np.ndarray:
    """Per-atom cost from a distance array (..., A)."""
    if r == 0:
        return weights * np.log(np.maximum(dist, floor))
    return weights * dist ** r


def objective(cloud: WeightedCloud, codebook: np.ndarray, r: float, workers: int = 1) -> float:
    """sum w d^r (r > 0) or sum w log d (r = 0) under nearest-centre assignment."""
    dist, _ = cKDTree(codebook).query(cloud.points, workers=workers)
    return float(_cost(cloud.weights, dist, r, LOG_FLOOR).sum())


def to_error(value: float, r: float) -> float:
    """Objective to error: r-th root for r > 0, exp for r = 0."""
    if r == 0:
        return math.exp(value)
    return max(value, 0.0) ** (1.0 / r)


def _check_r(cloud: WeightedCloud, r: float) -> None:
    if r < 0 or not math.isfinite(r):
        raise InvalidR("r must be non-negative", {"r": r})
    if r == 0 and not cloud.separated:
        raise SeparationRequired("r = 0 needs a carpet satisfying the separation hypothesis", {})


# --- grid oracle ---------------------------------------------------------------------


def _box_dist(points: np.ndarray, boxes: np.ndarray, g: int) -> np.ndarray:
    """(B, A) distances from each point to the nearest candidate of each box.

    A box (x0, x1, y0, y1) holds candidates (a/g, b/g), x0 <= a < x1, y0 <= b < y1.
    """
    lo = boxes[:, [0, 2]].astype(np.float64) / g
    hi = (boxes[:, [1, 3]].astype(np.float64) - 1.0) / g
    nx = np.clip(points[None, :, 0], lo[:, None, 0], hi[:, None, 0])
    ny = np.clip(points[None, :, 1], lo[:, None, 1], hi[:, None, 1])
    return np.hypot(points[None, :, 0] - nx, points[None, :, 1] - ny)


def _split(boxes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrant children of each box, grouped by parent; returns (children, parent)."""
    x0, x1, y0, y1 = boxes.T
    xm = (x0 + x1 + 1) // 2
    ym = (y0 + y1 + 1) // 2
    parts = [
        np.column_stack([xa, xb, ya, yb])
        for xa, xb in ((x0, xm), (xm, x1))
        for ya, yb in ((y0, ym), (ym, y1))
    ]
    children = np.stack(parts, axis=1).reshape(-1, 4)
    parent = np.repeat(np.arange(boxes.shape[0]), 4)
    ok = (children[:, 0] < children[:, 1]) & (children[:, 2] < children[:, 3])
    return children[ok], parent[ok]


def _refine_tuples(tuples: np.ndarray, boxes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split every box a live tuple uses and expand tuples over the children.

    Tuples hold non-decreasing box indices; children are numbered in parent
    order, so keeping non-decreasing child indices enumerates each multiset once.
    """
    used, local = np.unique(tuples, return_inverse=True)
    local = local.reshape(tuples.shape)
    children, parent = _split(boxes[used])
    start = np.searchsorted(parent, np.arange(used.size))
    count = np.bincount(parent, minlength=used.size)

    out = np.empty((tuples.shape[0], 0), dtype=np.int64)
    rows = np.arange(tuples.shape[0])
    for pos in range(tuples.shape[1]):
        box = local[rows, pos]
        cnt = count[box]
        rep = np.repeat(np.arange(rows.size), cnt)
        offset = np.arange(rep.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        out = np.column_stack([out[rep], start[box][rep] + offset])
        rows = rows[rep]
    if tuples.shape[1] > 1:
        out = out[np.all(np.diff(out, axis=1) >= 0, axis=1)]
    return out, children


def _nudge_off_grid(cloud: WeightedCloud, g: int) -> np.ndarray:
    """Move atoms sitting on a candidate by half of their own cell."""
    pts = cloud.points.copy()
    on_grid = np.all(np.abs(pts * g - np.rint(pts * g)) < 1e-9, axis=1)
    pts[on_grid] += 0.5 * cloud.cell[on_grid]
    return pts


def brute_force_error(
    cloud: WeightedCloud,
    k: int,
    r: float,
    grid_res: Optional[int] = None,
) -> float:
    """Best k centres among the grid_res x grid_res candidates {(a/g, b/g)}.

    Exact over the grid. The search is a branch-and-bound over k-tuples of
    candidate boxes: a tuple's lower bound uses point-to-box distances, its
    upper bound the box centres, and live tuples are split by quadrants down
    to single candidates.
    """
    g = int(grid_res if grid_res is not None else get_settings().grid_res)
    if not 1 <= k <= 3:
        raise InvalidK("the grid oracle handles k <= 3", {"k": k})
    if not 1 <= g <= MAX_ORACLE_GRID:
        raise InvalidParam("grid_res must be in [1, 64]", {"grid_res": g})
    if len(cloud) > MAX_ORACLE_ATOMS:
        raise BudgetExceeded("cloud too large for the grid oracle", {"atoms": len(cloud)})
    if k > g * g:
        raise GridTooCoarse("fewer candidates than centres", {"k": k, "candidates": g * g})
    _check_r(cloud, r)

    points, weights = cloud.points, cloud.weights
    floor = 0.0
    if r == 0:
        points = _nudge_off_grid(cloud, g)
        floor = LOG_FLOOR

    block = max(1, math.ceil(g / 8))
    edges = [(lo, min(lo + block, g)) for lo in range(0, g, block)]
    boxes = np.array([[xa, xb, ya, yb] for xa, xb in edges for ya, yb in edges], dtype=np.int64)
    mesh = np.meshgrid(*([np.arange(boxes.shape[0])] * k), indexing="ij")
    tuples = np.stack([axis.ravel() for axis in mesh], axis=1)
    if k > 1:
        tuples = tuples[np.all(np.diff(tuples, axis=1) >= 0, axis=1)]

    chunk = max(1, (1 << 22) // (k * max(1, len(cloud))))
    best = math.inf
    rounds = 0
    while tuples.shape[0]:
        rounds += 1
        near = _box_dist(points, boxes, g)
        mid = np.column_stack([(boxes[:, 0] + boxes[:, 1] - 1) // 2, (boxes[:, 2] + boxes[:, 3] - 1) // 2])
        at_mid = cdist(mid.astype(np.float64) / g, points)
        lower = np.empty(tuples.shape[0])
        for s in range(0, tuples.shape[0], chunk):
            t = tuples[s : s + chunk]
            lower[s : s + chunk] = _cost(weights, near[t].min(axis=1), r, floor).sum(axis=1)
            upper = _cost(weights, at_mid[t].min(axis=1), r, floor).sum(axis=1)
            best = min(best, float(upper.min()))
        leaf = (boxes[:, 1] - boxes[:, 0] == 1) & (boxes[:, 3] - boxes[:, 2] == 1)
        tuples = tuples[(lower < best) & ~np.all(leaf[tuples], axis=1)]
        if tuples.shape[0]:
            tuples, boxes = _refine_tuples(tuples, boxes)
        logger.debug("grid oracle round %d: %d live tuples, best %.17g", rounds, tuples.shape[0], best)
        if tuples.shape[0] > MAX_ORACLE_TUPLES:
            raise BudgetExceeded("grid oracle search space too large", {"tuples": int(tuples.shape[0])})

    return to_error(best, r)


# --- Lloyd ---------------------------------------------------------------------------


def _seed_plus_plus(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    rng: np.random.Generator,
    centres: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Weighted k-means++ with greedy local trials, extending ``centres`` up to k."""
    trials = 2 + int(math.log(k))
    if centres is None or len(centres) == 0:
        first = int(rng.choice(points.shape[0], p=weights))
        chosen = [points[first]]
    else:
        chosen = list(np.asarray(centres, dtype=np.float64))
        if len(chosen) >= k:
            return np.asarray(chosen[:k], dtype=np.float64)
    closest = cKDTree(np.asarray(chosen)).query(points)[0] ** 2

    while len(chosen) < k:
        pot = weights * closest
        total = float(pot.sum())
        if total <= 0:
            # every atom already carries a centre; remaining ones are duplicates
            chosen.append(chosen[-1])
            continue
        ids = np.searchsorted(np.cumsum(pot), rng.random(trials) * total)
        ids = np.minimum(ids, points.shape[0] - 1)
        cand = cdist(points[ids], points, "sqeuclidean")
        merged = np.minimum(closest[None, :], cand)
        pick = int(np.argmin((merged * weights[None, :]).sum(axis=1)))
        chosen.append(points[ids[pick]])
        closest = merged[pick]
    return np.asarray(chosen[:k], dtype=np.float64)


def _cell_costs(
    points: np.ndarray,
    weights: np.ndarray,
    labels: np.ndarray,
    at: np.ndarray,
    r: float,
    floor: float,
    k: int,
) -> np.ndarray:
    """Objective of each cell with its atoms measured from ``at[label]``."""
    diff = at[labels] - points
    d = np.hypot(diff[:, 0], diff[:, 1])
    return np.bincount(labels, weights=_cost(weights, d, r, floor), minlength=k)


def _cell_descent(
    cloud: WeightedCloud,
    centres: np.ndarray,
    labels: np.ndarray,
    r: float,
    floor: float,
    step_floor: float,
    tol: float,
) -> np.ndarray:
    """Minimize c -> sum w d^r (or sum w log max(d, floor)) in every cell at once.

    Gradient steps are scaled by r sum w d^{r-2} (Weiszfeld at r = 1), with d
    floored at ``step_floor``, and halved per cell until that cell's objective
    does not increase. A cell stops once its gradient norm or its move drops
    below ``tol``, or after INNER_STEPS steps.
    """
    points, weights = cloud.points, cloud.weights
    k = centres.shape[0]
    c = centres.copy()
    current = _cell_costs(points, weights, labels, c, r, floor, k)
    active = np.bincount(labels, minlength=k) > 0
    for _ in range(INNER_STEPS):
        if not active.any():
            break
        diff = c[labels] - points
        d = np.hypot(diff[:, 0], diff[:, 1])
        dd = np.maximum(d, step_floor)
        if r == 0:
            per = weights / dd ** 2
            coef = np.where(d > step_floor, per, 0.0)
        else:
            per = r * weights * dd ** (r - 2.0)
            coef = np.where(d > 0, per, 0.0)
        grad = np.column_stack([np.bincount(labels, weights=coef * diff[:, a], minlength=k) for a in (0, 1)])
        scale = np.bincount(labels, weights=per, minlength=k)
        active &= (np.hypot(grad[:, 0], grad[:, 1]) >= tol) & (scale > 0)
        step = np.zeros_like(c)
        step[active] = grad[active] / scale[active, None]

        tau = np.ones(k)
        searching = active.copy()
        accepted = np.zeros(k, dtype=bool)
        cand = c.copy()
        value = current.copy()
        while searching.any():
            sub = searching[labels]
            trial = c - tau[:, None] * step
            cost = _cell_costs(points[sub], weights[sub], labels[sub], trial, r, floor, k)
            ok = searching & (cost <= current)
            cand[ok] = trial[ok]
            value[ok] = cost[ok]
            accepted |= ok
            searching &= ~ok
            tau[searching] *= 0.5
            searching &= tau > 1e-12
        moved = np.hypot(*(cand - c).T)
        c, current = cand, value
        active &= accepted & (moved >= tol)
    else:
        if active.any():
            logger.debug("cell descent stopped at %d steps with %d cells still moving", INNER_STEPS, int(active.sum()))
    return c


def _update_centres(
    cloud: WeightedCloud,
    centres: np.ndarray,
    labels: np.ndarray,
    r: float,
    floor: float,
    step_floor: float,
    tol: float,
) -> np.ndarray:
    if r != 2:
        return _cell_descent(cloud, centres, labels, r, floor, step_floor, tol)
    k = centres.shape[0]
    mass = np.bincount(labels, weights=cloud.weights, minlength=k)
    out = centres.copy()
    filled = mass > 0
    for axis in (0, 1):
        sums = np.bincount(labels, weights=cloud.weights * cloud.points[:, axis], minlength=k)
        out[filled, axis] = sums[filled] / mass[filled]
    return out


def _repair_empty(
    cloud: WeightedCloud,
    centres: np.ndarray,
    labels: np.ndarray,
    dist: np.ndarray,
) -> np.ndarray:
    """Send each empty centre to the farthest atom of the heaviest cell.

    Cells are drawn from a lazy max-heap on (mass, -index); only cells that
    still hold an atom off their centre are eligible.
    """
    k = centres.shape[0]
    mass = np.bincount(labels, weights=cloud.weights, minlength=k)
    empty = np.flatnonzero(mass == 0)
    if not empty.size:
        return centres
    out = centres.copy()
    dist = dist.copy()
    movable = np.bincount(labels[dist > 0], minlength=k)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(k + 1))
    heap = [(-float(mass[cell]), int(cell)) for cell in np.flatnonzero(movable)]
    heapq.heapify(heap)
    for c in empty:
        while heap and (movable[heap[0][1]] == 0 or -heap[0][0] != mass[heap[0][1]]):
            heapq.heappop(heap)
        if not heap:
            break
        cell = heap[0][1]
        members = order[bounds[cell] : bounds[cell + 1]]
        members = members[dist[members] > 0]
        far = members[int(np.argmax(dist[members]))]
        out[c] = cloud.points[far]
        mass[cell] -= cloud.weights[far]
        mass[c] = cloud.weights[far]
        movable[cell] -= 1
        dist[far] = 0.0
        heapq.heappush(heap, (-float(mass[cell]), cell))
    logger.debug("repaired %d empty cells", empty.size)
    return out


def _lloyd_single(
    cloud: WeightedCloud,
    k: int,
    r: float,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
    init: Optional[np.ndarray],
) -> Tuple[np.ndarray, float, int, List[float]]:
    floor = LOG_FLOOR
    step_floor = _step_floor(cloud)
    centres = _seed_plus_plus(cloud.points, cloud.weights, k, rng, init)
    tree = cKDTree(centres)
    dist, labels = tree.query(cloud.points)
    current = float(_cost(cloud.weights, dist, r, floor).sum())
    history = [current]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centres = _repair_empty(cloud, centres, labels, dist)
        centres = _update_centres(cloud, centres, labels, r, floor, step_floor, tol)
        dist, labels = cKDTree(centres).query(cloud.points)
        value = float(_cost(cloud.weights, dist, r, floor).sum())
        if value > current + DESCENT_SLACK * max(1.0, abs(current)):
            raise NonDecreaseDetected(
                "Lloyd objective increased", {"iteration": iterations, "before": current, "after": value}
            )
        history.append(value)
        done = current - value <= tol * max(1.0, abs(current))
        current = value
        if done:
            break
    return centres, current, iterations, history


def lloyd(
    cloud: WeightedCloud,
    k: int,
    r: float,
    seed: Optional[int] = None,
    restarts: Optional[int] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    init: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> LloydResult:
    """Best of ``restarts`` Lloyd runs; restart 0 starts from ``init`` when given.

    Restart i draws from default_rng([seed, k, i]); the winner is the least
    (objective, restart index), so worker scheduling never changes the result.
    """
    settings = get_settings()
    seed = settings.seed if seed is None else seed
    restarts = settings.restarts if restarts is None else restarts
    tol = settings.lloyd_tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter
    workers = settings.workers if workers is None else workers

    _check_r(cloud, r)
    if k < 1 or k > len(cloud):
        raise InvalidK("k must be between 1 and the number of atoms", {"k": k, "atoms": len(cloud)})
    if restarts < 1:
        raise InvalidParam("restarts must be positive", {"restarts": restarts})
    if init is not None:
        init = np.asarray(init, dtype=np.float64)[:k]

    def run(idx: int):
        rng = np.random.default_rng([seed, k, idx])
        return _lloyd_single(cloud, k, r, rng, tol, max_iter, init if idx == 0 else None)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, range(restarts)))

    best = min(range(restarts), key=lambda idx: (results[idx][1], idx))
    centres, value, iterations, history = results[best]
    logger.debug("lloyd k=%d r=%s: best restart %d, objective %.17g", k, r, best, value)
    return LloydResult(
        codebook=centres,
        error=to_error(value, r),
        objective=value,
        iterations=iterations,
        restart=best,
        restarts=restarts,
        history=history,
    )


# --- curves --------------------------------------------------------------------------


def _slope(ks: Sequence[int], errors: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of log k against -log e over the largest half of k."""
    if len(ks) < 2:
        return float("nan"), float("nan")
    start = min(len(ks) // 2, len(ks) - 2)
    x = -np.log(np.asarray(errors[start:], dtype=np.float64))
    y = np.log(np.asarray(ks[start:], dtype=np.float64))
    fit = linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    return float(fit.slope), residual


def error_curve(
    carpet: DerivedQuantities,
    r: float,
    k_list: Sequence[int],
    depth: int,
    seed: Optional[int] = None,
    restarts: Optional[int] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    s: Optional[float] = None,
    workers: Optional[int] = None,
    budget: Optional[int] = None,
) -> ErrorCurve:
    """Lloyd errors for each k on the depth-``depth`` discretization.

    Restart 0 for each k starts from the previous codebook, so errors only
    grow through optimizer failure; such rows are flagged, not hidden.
    """
    ks = [int(k) for k in k_list]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidParam("k_list must be strictly ascending", {"k_list": ks})
    cloud = discretize(carpet, depth, budget)
    if s is None:
        s = s0(carpet) if r == 0 else solve_sr(carpet, r)

    rows: List[CurveRow] = []
    previous: Optional[np.ndarray] = None
    last_e = math.inf
    for k in ks:
        result = lloyd(cloud, k, r, seed, restarts, tol, max_iter, init=previous, workers=workers)
        tail = result.history[-2:]
        residual = abs(tail[0] - tail[-1]) if len(tail) == 2 else 0.0
        monotone = result.error <= last_e + MONOTONE_SLACK
        if not monotone:
            logger.warning("e_k increased at k=%d: %.17g > %.17g", k, result.error, last_e)
        if r == 0:
            coefficient = math.log(k) / s + result.objective
        else:
            coefficient = k ** (1.0 / s) * result.error
        rows.append(
            CurveRow(
                k=k,
                e=result.error,
                residual=residual,
                restarts=result.restarts,
                coefficient=coefficient,
                monotone=monotone,
            )
        )
        previous = result.codebook
        last_e = min(last_e, result.error)

    slope, slope_residual = _slope([row.k for row in rows], [row.e for row in rows])
    logger.info("error curve r=%s depth=%d: slope %.6g (target %.6g)", r, depth, slope, s)
    return ErrorCurve(
        r=r,
        s=s,
        depth=depth,
        bias=cloud.bias,
        rows=tuple(rows),
        slope=slope,
        slope_residual=slope_residual,
    )


# --- antichain bounds ----------------------------------------------------------------


def antichain_upper_bound(
    carpet: DerivedQuantities, r: float, j: float, budget: Optional[int] = None
) -> Tuple[int, float, float]:
    """(N_{j,r}, (sum mu (delta m^{-|sigma|})^r)^{1/r}, N^{r/s_r} bound^r).

    One centre per square of Gamma_{j,r} gives the bound.
    """
    if not r > 0:
        raise InvalidR("the antichain bound needs r > 0", {"r": r})
    antichain = build_antichain(carpet, AntichainKind.GAMMA_JR, j, r, budget, retain_words=False)
    log_terms = antichain.log_weights + r * (math.log(carpet.delta) - antichain.depths * carpet.log_m)
    shift = float(log_terms.max())
    bound_r = math.exp(shift) * float(np.sum(np.exp(log_terms - shift)))
    count = len(antichain)
    xi = count ** (r / solve_sr(carpet, r)) * bound_r
    return count, bound_r ** (1.0 / r), xi


def geometric_bound(
    carpet: DerivedQuantities, j: float, budget: Optional[int] = None
) -> Tuple[int, float, float]:
    """(psi_j, sum mu log(delta m^{-|sigma|}), s0^{-1} log psi_j + upper) over Lambda_j."""
    if not carpet.separated:
        raise SeparationRequired("geometric bound needs the separation hypothesis", {"j": j})
    antichain = build_antichain(carpet, AntichainKind.LAMBDA_0J, j, 0.0, budget, retain_words=False)
    mu = np.exp(antichain.log_weights)
    upper = float(np.sum(mu * (math.log(carpet.delta) - antichain.depths * carpet.log_m)))
    psi = len(antichain)
    return psi, upper, math.log(psi) / s0(carpet) + upper


def bound_rows(
    carpet: DerivedQuantities, r: float, j_list: Sequence[float], budget: Optional[int] = None
) -> List[BoundRow]:
    """Antichain bounds for r > 0, geometric bounds (log scale) for r = 0."""
    rows = []
    for j in j_list:
        if r == 0:
            count, bound, proxy = geometric_bound(carpet, j, budget)
        else:
            count, bound, proxy = antichain_upper_bound(carpet, r, j, budget)
        rows.append(BoundRow(j=j, count=count, bound=bound, proxy=proxy))
    return rows


def bound_check(
    carpet: DerivedQuantities,
    r: float,
    j: float,
    levels: int = 1,
    budget: Optional[int] = None,
) -> Tuple[float, float]:
    """(Lloyd objective at k = N_{j,r} or psi_j, matching bound in objective units).

    Lloyd runs once on the members' children, starting from the member
    centres: the start already meets the bound and Lloyd never ascends, and
    k-means++ seeding at k = psi_j is out of reach. For r > 0 both numbers
    are errors, for r = 0 log-errors.
    """
    kind = AntichainKind.LAMBDA_0J if r == 0 else AntichainKind.GAMMA_JR
    members = build_antichain(carpet, kind, j, r, budget, retain_words=False, geometry=True)
    init = antichain_cloud(carpet, members).points
    cloud = refine_cloud(carpet, kind, j, r, levels, budget)
    result = lloyd(cloud, len(members), r, restarts=1, init=init)
    if r == 0:
        _, upper, _ = geometric_bound(carpet, j, budget)
        return result.objective, upper
    _, bound, _ = antichain_upper_bound(carpet, r, j, budget)
    return result.error, bound
