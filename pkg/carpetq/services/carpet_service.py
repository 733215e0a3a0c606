import logging
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from ..config import get_settings
from ..errors import (
    BadProbabilities,
    DegenerateCarpet,
    DuplicateDigit,
    InvalidCount,
    OutOfRangeDigit,
)
from ..models.carpet import CarpetSpec, DerivedQuantities, PlanePoint

logger = logging.getLogger(__name__)

SUM_TOLERANCE = Fraction(1, 10 ** 12)


def parse_probability(text: str) -> Fraction:
    """Decimal string (or "a/b") to an exact Fraction."""
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise BadProbabilities("probability is not a decimal number", {"p": text}) from e
    return value


def _is_separated(values: Tuple[int, ...], gap: int) -> bool:
    return all(b - a >= gap for a, b in zip(values, values[1:]))


def validate_spec(raw: CarpetSpec, separation_gap: Optional[int] = None) -> DerivedQuantities:
    """Check the carpet hypotheses and compute every derived scalar.

    Probabilities are renormalized exactly by their Fraction sum once that
    sum is within 1e-12 of one.
    """
    gap = separation_gap if separation_gap is not None else get_settings().separation_gap
    n, m = raw.n, raw.m
    if m < 2 or n < 2:
        raise DegenerateCarpet("grid bases must be at least 2", {"n": n, "m": m})
    if m >= n:
        raise DegenerateCarpet("carpet needs m < n", {"n": n, "m": m})

    digits: List[Tuple[int, int]] = []
    probs: List[Fraction] = []
    seen = set()
    for idx, entry in enumerate(raw.digits):
        if not (0 <= entry.i < n and 0 <= entry.j < m):
            raise OutOfRangeDigit(
                "digit outside the grid", {"index": idx, "i": entry.i, "j": entry.j, "n": n, "m": m}
            )
        if (entry.i, entry.j) in seen:
            raise DuplicateDigit("digit listed twice", {"i": entry.i, "j": entry.j})
        seen.add((entry.i, entry.j))
        p = parse_probability(entry.p)
        if p <= 0:
            raise BadProbabilities("probabilities must be positive", {"i": entry.i, "j": entry.j, "p": entry.p})
        digits.append((entry.i, entry.j))
        probs.append(p)

    if len(digits) < 2:
        raise DegenerateCarpet("need at least two digits", {"N": len(digits)})
    total = sum(probs, Fraction(0))
    if abs(total - 1) > SUM_TOLERANCE:
        raise BadProbabilities("probabilities must sum to 1", {"sum": float(total)})
    if total != 1:
        logger.debug("renormalizing probabilities by exact sum %s", float(total))
        probs = [p / total for p in probs]

    Gx = tuple(sorted({i for i, _ in digits}))
    Gy = tuple(sorted({j for _, j in digits}))
    if len(Gx) < 2 or len(Gy) < 2:
        raise DegenerateCarpet(
            "both projections need at least two digits", {"card_Gx": len(Gx), "card_Gy": len(Gy)}
        )

    row_of = {j: b for b, j in enumerate(Gy)}
    fibers = []
    q_exact = []
    for j in Gy:
        members = sorted((d for d, (_, dj) in enumerate(digits) if dj == j), key=lambda d: digits[d][0])
        fibers.append(tuple(members))
        q_exact.append(sum((probs[d] for d in members), Fraction(0)))

    p = np.array([float(x) for x in probs], dtype=np.float64)
    q = np.array([float(x) for x in q_exact], dtype=np.float64)
    row = np.array([row_of[j] for _, j in digits], dtype=np.int64)
    for arr in (p, q, row):
        arr.setflags(write=False)

    carpet = DerivedQuantities(
        n=n,
        m=m,
        digits=tuple(digits),
        p_exact=tuple(probs),
        q_exact=tuple(q_exact),
        Gx=Gx,
        Gy=Gy,
        fibers=tuple(fibers),
        separated=_is_separated(Gx, gap) and _is_separated(Gy, gap),
        p=p,
        q=q,
        row=row,
    )
    logger.debug(
        "validated carpet n=%d m=%d N=%d theta=%.6f separated=%s",
        n, m, carpet.N, carpet.theta, carpet.separated,
    )
    return carpet


def apply_map(carpet: DerivedQuantities, digit: Tuple[int, int], pt: PlanePoint) -> PlanePoint:
    return carpet.apply_map(digit, pt)


def chaos_sample(
    carpet: DerivedQuantities, seed: int, count: int, burn_in: int = 100
) -> np.ndarray:
    """Random iteration of the carpet maps; returns a (count, 2) array.

    Digits are drawn i.i.d. proportional to p from a private generator, so
    the stream depends only on ``seed``.
    """
    if count < 1:
        raise InvalidCount("count must be at least 1", {"count": count})
    if burn_in < 0:
        raise InvalidCount("burn_in must be non-negative", {"burn_in": burn_in})
    rng = np.random.default_rng(seed)
    total = count + burn_in
    choice = rng.choice(carpet.N, size=total, p=carpet.p / carpet.p.sum())
    shift = np.array(carpet.digits, dtype=np.float64)[choice]
    scale = np.array([carpet.n, carpet.m], dtype=np.float64)

    out = np.empty((total, 2), dtype=np.float64)
    pt = rng.random(2)
    for idx in range(total):
        pt = (pt + shift[idx]) / scale
        out[idx] = pt
    return out[burn_in:]


def chaos_points(carpet: DerivedQuantities, seed: int, count: int, burn_in: int = 100) -> List[PlanePoint]:
    return [PlanePoint(float(x), float(y)) for x, y in chaos_sample(carpet, seed, count, burn_in)]


def empirical_moments(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and per-axis standard error of a sample."""
    mean = points.mean(axis=0)
    stderr = points.std(axis=0, ddof=1) / np.sqrt(points.shape[0])
    return mean, stderr
