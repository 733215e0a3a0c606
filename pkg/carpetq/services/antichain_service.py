"""Breadth-first refinement of approximate squares and finite maximal antichains.

The tree is walked one level at a time with numpy arrays. Each level keeps,
per node, the index of its parent in the previous level, the G_y index of
the vertical digit it appended and the digit appended to ``pairs`` (-1 when
the level is not an ell-step). The head of a tail is recovered by walking
parent links back to depth ell(k)+1, so no per-node tail storage is needed.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import get_settings
from ..errors import BudgetExceeded, InvalidParam, NoBracket, SeparationRequired
from ..models.carpet import DerivedQuantities
from ..models.symbolic import (
    Antichain,
    AntichainKind,
    AntichainStats,
    ShellCounts,
    ShellRow,
    Word,
)
from .dims_service import mean_exponent_sk0
from .root_finding import bisect_decreasing
from .symbolic_service import parent_flat, word_log_weight

logger = logging.getLogger(__name__)

# log-domain comparisons closer than this (relative) count as equality
TIE_RTOL = 1e-12


@dataclass
class _Level:
    depth: int
    logw: np.ndarray
    x_lo: Optional[np.ndarray] = None
    y_lo: Optional[np.ndarray] = None
    pending: Optional[np.ndarray] = None


class TreeWalker:
    """Level-synchronous generator of Omega_k restricted to refined nodes."""

    def __init__(
        self,
        carpet: DerivedQuantities,
        budget: Optional[int] = None,
        retain_words: bool = False,
        geometry: bool = False,
    ):
        self.carpet = carpet
        self.budget = int(budget if budget is not None else get_settings().budget)
        self.retain_words = retain_words
        self.geometry = geometry
        self.nodes = 0
        # depth -> (parent, vert, pair)
        self._links: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

        self.n_rows = len(carpet.Gy)
        self.log_p = np.log(carpet.p)
        self.log_q = np.log(carpet.q)
        self.fiber_size = np.array([len(f) for f in carpet.fibers], dtype=np.int64)
        self.fiber_table = np.full((self.n_rows, int(self.fiber_size.max())), -1, dtype=np.int64)
        for b, fiber in enumerate(carpet.fibers):
            self.fiber_table[b, : len(fiber)] = fiber
        self.gy = np.array(carpet.Gy, dtype=np.float64)
        self.digit_i = np.array([i for i, _ in carpet.digits], dtype=np.float64)

    # -- construction -------------------------------------------------------------
    def _charge(self, count: int, depth: int) -> None:
        if self.nodes + count > self.budget:
            raise BudgetExceeded(
                "tree enumeration exceeds the node budget",
                {"budget": self.budget, "visited": self.nodes, "requested": count, "depth": depth},
            )
        self.nodes += count

    def root_level(self) -> _Level:
        b = self.n_rows
        self._charge(b, 1)
        vert = np.arange(b, dtype=np.int64)
        self._links[1] = (np.full(b, -1, dtype=np.int64), vert, np.full(b, -1, dtype=np.int64))
        level = _Level(depth=1, logw=self.log_q.copy())
        if self.geometry:
            level.x_lo = np.zeros(b)
            level.y_lo = self.gy / self.carpet.m
        return level

    def _heads(self, depth: int, idx: np.ndarray) -> np.ndarray:
        """G_y index of j_{ell(k)+1} for the nodes ``idx`` of level ``depth``."""
        h = self.carpet.ell(depth) + 1
        anc = idx
        for lev in range(depth, h, -1):
            anc = self._links[lev][0][anc]
        return self._links[h][1][anc]

    def expand(self, level: _Level, idx: np.ndarray) -> _Level:
        """Children of the nodes ``idx`` of ``level``, in parent order."""
        carpet = self.carpet
        k = level.depth
        b = self.n_rows
        l_k = carpet.ell(k)
        if idx.size == 0:
            return _Level(depth=k + 1, logw=np.empty(0))

        if carpet.ell(k + 1) == l_k:
            total = idx.size * b
            self._charge(total, k + 1)
            parent = np.repeat(idx, b)
            vert = np.tile(np.arange(b, dtype=np.int64), idx.size)
            pair = np.full(total, -1, dtype=np.int64)
            logw = level.logw[parent] + self.log_q[vert]
        else:
            head = self._heads(k, idx)
            counts = self.fiber_size[head] * b
            total = int(counts.sum())
            self._charge(total, k + 1)
            parent = np.repeat(idx, counts)
            start = np.repeat(np.cumsum(counts) - counts, counts)
            pos = np.arange(total, dtype=np.int64) - start
            head_rep = np.repeat(head, counts)
            vert = pos % b
            pair = self.fiber_table[head_rep, pos // b]
            logw = level.logw[parent] + self.log_p[pair] - self.log_q[head_rep] + self.log_q[vert]

        self._links[k + 1] = (parent, vert, pair)
        child = _Level(depth=k + 1, logw=logw)
        if self.geometry:
            child.y_lo = level.y_lo[parent] + self.gy[vert] * float(carpet.m) ** (-(k + 1))
            child.x_lo = level.x_lo[parent]
            if carpet.ell(k + 1) != l_k:
                child.x_lo = child.x_lo + self.digit_i[pair] * float(carpet.n) ** (-(l_k + 1))
        if level.pending is not None:
            inherited = level.pending[parent]
            child.pending = np.where(inherited >= 0, inherited - 1, -1)
        if not self.retain_words:
            self.release(carpet.ell(k + 1) + 1)
        return child

    def release(self, keep_from: int) -> None:
        for depth in [d for d in self._links if d < keep_from]:
            del self._links[depth]

    # -- word reconstruction --------------------------------------------------------
    def reconstruct(self, depth: int, idx: np.ndarray, log_weights: np.ndarray) -> List[Word]:
        verts = np.empty((idx.size, depth), dtype=np.int64)
        pairs = np.empty((idx.size, depth), dtype=np.int64)
        anc = idx
        for lev in range(depth, 0, -1):
            parent, vert, pair = self._links[lev]
            verts[:, lev - 1] = vert[anc]
            pairs[:, lev - 1] = pair[anc]
            anc = parent[anc]
        l = self.carpet.ell(depth)
        words = []
        for row_v, row_p, lw in zip(verts.tolist(), pairs.tolist(), log_weights.tolist()):
            words.append(Word(tuple(d for d in row_p if d >= 0), tuple(row_v[l:]), lw))
        return words


# --- antichains ----------------------------------------------------------------------


def _threshold(carpet: DerivedQuantities, kind: AntichainKind, param: float, r: float) -> float:
    """log of the emission threshold applied to log(mu m^{-|sigma| r})."""
    if kind is AntichainKind.GAMMA_JR:
        return math.log(carpet.eta_lower(r)) - math.log(param)
    if kind is AntichainKind.LAMBDA_0J:
        return math.log(carpet.eta0) - math.log(param)
    return -param * carpet.lambda1(r)


def _check_params(carpet: DerivedQuantities, kind: AntichainKind, param: float, r: float) -> None:
    if r < 0 or not math.isfinite(r):
        raise InvalidParam("r must be non-negative", {"r": r})
    if not (param >= 1) or not math.isfinite(param):
        raise InvalidParam("antichain parameter must be at least 1", {"kind": kind.value, "param": param})
    if kind is AntichainKind.LAMBDA_0J:
        if not carpet.separated:
            raise SeparationRequired("Lambda_j needs the separation hypothesis", {"kind": kind.value})
    elif r <= 0:
        raise InvalidParam("GammaJR and LambdaTildeKR need r > 0", {"kind": kind.value, "r": r})
    if kind is AntichainKind.LAMBDA_TILDE_KR and int(param) != param:
        raise InvalidParam("LambdaTildeKR needs an integer k", {"k": param})


def _emit_rule(carpet: DerivedQuantities, kind: AntichainKind, param: float, r: float) -> Callable[[np.ndarray, int], np.ndarray]:
    log_thr = _threshold(carpet, kind, param, r)
    # equality keeps refining
    cut = log_thr - TIE_RTOL * max(1.0, abs(log_thr))
    scale = 0.0 if kind is AntichainKind.LAMBDA_0J else r * carpet.log_m

    def emit(logw: np.ndarray, depth: int) -> np.ndarray:
        return (logw - depth * scale) < cut

    return emit


def build_antichain(
    carpet: DerivedQuantities,
    kind,
    param: float,
    r: float = 0.0,
    budget: Optional[int] = None,
    retain_words: bool = True,
    geometry: bool = False,
) -> Antichain:
    """Refine breadth-first from Omega_1 and emit words whose predicate fires.

    ``param`` is j for GammaJR/Lambda0J and k for LambdaTildeKR. Statistics
    are accumulated level by level; member arrays are always kept, words
    only when ``retain_words``.
    """
    kind = AntichainKind(kind)
    if kind is AntichainKind.LAMBDA_0J:
        r = 0.0
    _check_params(carpet, kind, param, r)
    emit = _emit_rule(carpet, kind, param, r)
    walker = TreeWalker(carpet, budget, retain_words=retain_words, geometry=geometry)

    log_weights: List[np.ndarray] = []
    depths: List[np.ndarray] = []
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    refs: List[Tuple[int, np.ndarray]] = []

    level = walker.root_level()
    while level.logw.size:
        k = level.depth
        mask = emit(level.logw, k)
        hit = np.flatnonzero(mask)
        if hit.size:
            log_weights.append(level.logw[hit])
            depths.append(np.full(hit.size, k, dtype=np.int64))
            if geometry:
                xs.append(level.x_lo[hit])
                ys.append(level.y_lo[hit])
            if retain_words:
                refs.append((k, hit))
        logger.debug("depth %d: %d nodes, %d emitted", k, level.logw.size, hit.size)
        level = walker.expand(level, np.flatnonzero(~mask))

    lw = np.concatenate(log_weights)
    dp = np.concatenate(depths)
    stats = _stats(carpet, lw, dp, r, walker.nodes)
    logger.info(
        "%s(param=%s, r=%s): %d words, depth %d..%d, %d nodes visited",
        kind.value, param, r, stats.cardinality, stats.min_depth, stats.max_depth, walker.nodes,
    )

    factory = None
    if retain_words:
        offsets = np.cumsum([0] + [hit.size for _, hit in refs])

        def factory() -> List[Word]:
            out: List[Word] = []
            for (depth, hit), start in zip(refs, offsets):
                out.extend(walker.reconstruct(depth, hit, lw[start : start + hit.size]))
            return out

    return Antichain(
        kind=kind,
        param=float(param),
        r=float(r),
        log_m=carpet.log_m,
        log_weights=lw,
        depths=dp,
        stats=stats,
        x_lo=np.concatenate(xs) if geometry else None,
        y_lo=np.concatenate(ys) if geometry else None,
        _word_factory=factory,
    )


def _stats(carpet: DerivedQuantities, lw: np.ndarray, dp: np.ndarray, r: float, visited: int) -> AntichainStats:
    mu = np.exp(lw)
    log_scale = -dp * carpet.log_m
    return AntichainStats(
        cardinality=int(lw.size),
        min_depth=int(dp.min()),
        max_depth=int(dp.max()),
        mass=float(np.sum(mu)),
        value_mass=float(np.sum(np.exp(lw + r * log_scale))),
        entropy=float(np.sum(mu * lw)),
        log_scale=float(np.sum(mu * log_scale)),
        nodes_visited=int(visited),
    )


def refined_members(
    carpet: DerivedQuantities,
    kind,
    param: float,
    r: float = 0.0,
    levels: int = 1,
    budget: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Descendants ``levels`` below every antichain member, with geometry.

    Returns (log_weights, depths, x_lo, y_lo, member_depths).
    """
    kind = AntichainKind(kind)
    if kind is AntichainKind.LAMBDA_0J:
        r = 0.0
    _check_params(carpet, kind, param, r)
    if levels < 0:
        raise InvalidParam("levels must be non-negative", {"levels": levels})
    emit = _emit_rule(carpet, kind, param, r)
    walker = TreeWalker(carpet, budget, geometry=True)

    out_lw, out_dp, out_x, out_y, out_md = [], [], [], [], []
    level = walker.root_level()
    level.pending = np.full(level.logw.size, -1, dtype=np.int64)
    member_depth = np.zeros(level.logw.size, dtype=np.int64)
    while level.logw.size:
        k = level.depth
        fresh = (level.pending < 0) & emit(level.logw, k)
        level.pending = np.where(fresh, levels, level.pending)
        member_depth = np.where(fresh, k, member_depth)
        done = level.pending == 0
        hit = np.flatnonzero(done)
        if hit.size:
            out_lw.append(level.logw[hit])
            out_dp.append(np.full(hit.size, k, dtype=np.int64))
            out_x.append(level.x_lo[hit])
            out_y.append(level.y_lo[hit])
            out_md.append(member_depth[hit])
        keep = np.flatnonzero(~done)
        parent_md = member_depth
        level = walker.expand(level, keep)
        if level.logw.size:
            member_depth = parent_md[walker._links[level.depth][0]]
    return (
        np.concatenate(out_lw),
        np.concatenate(out_dp),
        np.concatenate(out_x),
        np.concatenate(out_y),
        np.concatenate(out_md),
    )


def level_arrays(
    carpet: DerivedQuantities, depth: int, budget: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(log_weights, x_lo, y_lo) for every word of Omega_depth."""
    if depth < 1:
        raise InvalidParam("depth must be at least 1", {"depth": depth})
    walker = TreeWalker(carpet, budget, geometry=True)
    level = walker.root_level()
    while level.depth < depth:
        level = walker.expand(level, np.arange(level.logw.size))
    return level.logw, level.x_lo, level.y_lo


def omega_words(carpet: DerivedQuantities, depth: int, budget: Optional[int] = None) -> List[Word]:
    """All words of Omega_depth in tree order."""
    walker = TreeWalker(carpet, budget, retain_words=True)
    level = walker.root_level()
    while level.depth < depth:
        level = walker.expand(level, np.arange(level.logw.size))
    return walker.reconstruct(depth, np.arange(level.logw.size), level.logw)


# --- per-antichain statistics --------------------------------------------------------


def _power_sum_root(log_values: np.ndarray, tol: float, name: str) -> float:
    """u in (0, 1) with sum exp(u * log_values) = 1."""
    def f(u: float) -> float:
        return float(np.sum(np.exp(u * log_values))) - 1.0

    return bisect_decreasing(f, 0.0, 1.0, tol, name=name)


def antichain_exponent(antichain: Antichain, r: Optional[float] = None, tol: float = 1e-12) -> float:
    """t_{j,r}: the t with sum (mu m^{-|sigma| r})^{t/(t+r)} = 1."""
    r = antichain.r if r is None else r
    if antichain.kind is AntichainKind.LAMBDA_0J:
        raise InvalidParam("exponent needs a GammaJR or LambdaTildeKR antichain", {"kind": antichain.kind.value})
    if not r > 0:
        raise InvalidParam("exponent needs r > 0", {"r": r})
    if len(antichain) == 0:
        raise InvalidParam("empty antichain", {})
    log_values = antichain.log_weights - antichain.depths * (r * antichain.log_m)
    u = _power_sum_root(log_values, tol, name="antichain sum")
    return r * u / (1.0 - u)


def antichain_entropy_ratio(antichain: Antichain) -> float:
    """t_j = sum mu log mu / sum mu log m^{-|sigma|}."""
    if antichain.kind is not AntichainKind.LAMBDA_0J:
        raise InvalidParam("entropy ratio needs a Lambda0J antichain", {"kind": antichain.kind.value})
    return antichain.stats.entropy / antichain.stats.log_scale


def entropy_bracket(carpet: DerivedQuantities, antichain: Antichain) -> Tuple[float, float]:
    values = [mean_exponent_sk0(carpet, k) for k in range(antichain.stats.min_depth, antichain.stats.max_depth + 1)]
    return min(values), max(values)


def depth_window(carpet: DerivedQuantities, r: float, j: float) -> Dict[str, Tuple[float, float]]:
    """Depth bounds for Gamma_{j,r}.

    ``asymptotic`` is the large-j form; ``exact`` holds for every j because
    values shrink by a factor in [e^{-lambda1}, e^{-lambda2}] per level.
    """
    lam1, lam2 = carpet.lambda1(r), carpet.lambda2(r)
    log_j = math.log(j)
    return {
        "asymptotic": (log_j / lam1 - 1.0, 2.0 * log_j / lam2 + 2.0),
        "exact": (1.0 + log_j / lam1, 1.0 + (log_j + lam1) / lam2),
    }


def cardinality_sandwich(carpet: DerivedQuantities, antichain: Antichain, t: Optional[float] = None) -> Tuple[float, int, float]:
    """((j/eta)^u, N, (j/eta^2)^u) for Gamma_{j,r}, u = t/(t+r)."""
    r, j = antichain.r, antichain.param
    t = antichain_exponent(antichain) if t is None else t
    u = t / (t + r)
    eta = carpet.eta_lower(r)
    return (j / eta) ** u, antichain.stats.cardinality, (j / eta ** 2) ** u


def psi_sandwich(carpet: DerivedQuantities, antichain: Antichain) -> Tuple[int, int, int]:
    """([j/eta0], psi_j, [j/eta0^2])."""
    j, eta0 = antichain.param, carpet.eta0
    return math.floor(j / eta0), antichain.stats.cardinality, math.floor(j / eta0 ** 2)


def membership_violations(carpet: DerivedQuantities, antichain: Antichain, words: Optional[Sequence[Word]] = None) -> List[Word]:
    """Members whose two-sided predicate fails, checked from recomputed weights."""
    words = antichain.words() if words is None else words
    log_thr = _threshold(carpet, antichain.kind, antichain.param, antichain.r)
    slack = TIE_RTOL * max(1.0, abs(log_thr)) * 4
    scale = 0.0 if antichain.kind is AntichainKind.LAMBDA_0J else antichain.r * carpet.log_m
    bad = []
    for w in words:
        own = word_log_weight(carpet, w) - w.depth * scale
        parent = parent_flat(carpet, w)
        up = parent.log_weight - parent.depth * scale
        if not (up >= log_thr - slack and own < log_thr + slack):
            bad.append(w)
    return bad


def comparable_pairs(carpet: DerivedQuantities, words: Sequence[Word], sample: Optional[Sequence[Word]] = None) -> List[Tuple[Word, Word]]:
    """Pairs (ancestor, word) inside the set; empty for an antichain.

    Walks each (sampled) word's parent chain against the full member set.
    """
    members = set(words)
    found = []
    for w in (words if sample is None else sample):
        anc = w
        while anc.depth >= 2:
            anc = parent_flat(carpet, anc)
            if anc in members:
                found.append((anc, w))
                break
    return found


# --- shells ----------------------------------------------------------------------------


def _snap(x: np.ndarray) -> np.ndarray:
    nearest = np.rint(x)
    return np.where(np.abs(x - nearest) < TIE_RTOL * np.maximum(1.0, np.abs(x)), nearest, x)


def shell_counts(carpet: DerivedQuantities, r: float, k_max: int, budget: Optional[int] = None) -> ShellCounts:
    """Counts of Lambda_{k,r} and ~Lambda_{k,r} for k <= k_max by pruned traversal.

    Nodes are refined while their value is at least e^{-(k_max+1) lambda1};
    nothing below that can belong to a shell or a ~Lambda with k <= k_max.
    """
    if not r > 0:
        raise InvalidParam("shell counts need r > 0", {"r": r})
    if k_max < 1:
        raise InvalidParam("k_max must be at least 1", {"k_max": k_max})
    lam = carpet.lambda1(r)
    scale = r * carpet.log_m
    walker = TreeWalker(carpet, budget)

    phi = np.zeros(k_max + 2, dtype=np.int64)
    tilde = np.zeros(k_max + 2, dtype=np.int64)
    tilde_values: List[List[np.ndarray]] = [[] for _ in range(k_max + 1)]

    level = walker.root_level()
    parent_x = np.zeros(level.logw.size)
    while level.logw.size:
        k = level.depth
        logv = level.logw - k * scale
        x = _snap(-logv / lam)
        shell = np.ceil(x).astype(np.int64) - 1
        np.add.at(phi, np.clip(shell, 0, k_max + 1), 1)

        lo = np.maximum(np.ceil(parent_x).astype(np.int64), 1)
        hi = np.minimum(np.ceil(x).astype(np.int64) - 1, k_max)
        live = lo <= hi
        for kk in range(1, k_max + 1):
            sel = live & (lo <= kk) & (kk <= hi)
            if sel.any():
                tilde[kk] += int(sel.sum())
                tilde_values[kk].append(logv[sel])

        refine = np.flatnonzero(x <= k_max + 1)
        x_of_level = x
        level = walker.expand(level, refine)
        if level.logw.size:
            parent_x = x_of_level[walker._links[level.depth][0]]

    rows = []
    for kk in range(0, k_max + 1):
        f, ft = int(phi[kk]), int(tilde[kk])
        shell_exp = math.log(f) / (kk * lam) if f > 0 and kk > 0 else float("nan")
        tilde_exp = math.log(ft) / (kk * lam) if ft > 0 and kk > 0 else float("nan")
        delta = float("nan")
        if ft >= 2:
            try:
                u = _power_sum_root(np.concatenate(tilde_values[kk]), 1e-12, name="shell sum")
                delta = r * u / (1.0 - u)
            except NoBracket:
                logger.warning("no bracket for delta_{%d,r}", kk)
        rows.append(
            ShellRow(
                k=kk,
                phi=f,
                phi_tilde=ft,
                shell_exponent=shell_exp,
                tilde_exponent=tilde_exp,
                delta_kr=delta,
                bracket_lo=math.log(ft) / ((kk + 1) * lam) if ft > 0 else float("nan"),
                bracket_hi=tilde_exp,
            )
        )
    return ShellCounts(r=r, lambda1=lam, rows=tuple(rows), nodes_visited=walker.nodes)


def antichain_rows(carpet: DerivedQuantities, words: Sequence[Word], r: float) -> List[Dict[str, object]]:
    """Rows of the antichain dump: depth, pairs, tail, weight, weighted value."""
    rows = []
    for w in words:
        pairs = ";".join(f"{carpet.digits[d][0]}:{carpet.digits[d][1]}" for d in w.pairs)
        tail = ";".join(str(carpet.Gy[b]) for b in w.tail)
        weight = math.exp(w.log_weight)
        rows.append(
            {
                "depth": w.depth,
                "pairs": pairs,
                "tail": tail,
                "weight": weight,
                "value": math.exp(w.log_weight - w.depth * r * carpet.log_m),
            }
        )
    return rows
