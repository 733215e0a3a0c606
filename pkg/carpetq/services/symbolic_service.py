import math
from typing import Iterable, List, Optional, Tuple

import numpy as np

from ..errors import InvalidParam, RootHasNoParent
from ..models.carpet import DerivedQuantities
from ..models.symbolic import SquareGeometry, Word
from .dims_service import entropy_Ik, mean_exponent_sk0

__all__ = [
    "roots",
    "children",
    "parent_flat",
    "square_geometry",
    "word_log_weight",
    "word_weight",
    "random_word",
    "uniform_random_word",
    "is_prefix",
    "check_word",
    "telescoped_weight",
    "entropy_Ik",
    "mean_exponent_sk0",
]


def roots(carpet: DerivedQuantities) -> List[Word]:
    """Omega_1: ell(1) = 0, so the depth-1 words are the rows of G_y."""
    return [Word(pairs=(), tail=(b,), log_weight=math.log(carpet.q[b])) for b in range(len(carpet.Gy))]


def children(carpet: DerivedQuantities, word: Word) -> List[Tuple[Word, float]]:
    """Refinements of ``word`` one level down with their measure ratios."""
    k = word.depth
    q = carpet.q
    out: List[Tuple[Word, float]] = []
    if carpet.ell(k + 1) == carpet.ell(k):
        for b in range(len(carpet.Gy)):
            ratio = float(q[b])
            out.append((Word(word.pairs, word.tail + (b,), word.log_weight + math.log(ratio)), ratio))
        return out

    head, rest = word.tail[0], word.tail[1:]
    for d in carpet.fibers[head]:
        for b in range(len(carpet.Gy)):
            ratio = float(carpet.p[d] * q[b] / q[head])
            child = Word(word.pairs + (d,), rest + (b,), word.log_weight + math.log(ratio))
            out.append((child, ratio))
    return out


def parent_flat(carpet: DerivedQuantities, word: Word) -> Word:
    """sigma^flat: the word one level coarser that ``word`` refines."""
    k = word.depth
    if k < 2:
        raise RootHasNoParent("depth-1 words have no parent", {"depth": k})
    if carpet.ell(k) == carpet.ell(k - 1):
        pairs, tail = word.pairs, word.tail[:-1]
    else:
        last = word.pairs[-1]
        pairs = word.pairs[:-1]
        tail = (int(carpet.row[last]),) + word.tail[:-1]
    parent = Word(pairs, tail)
    return Word(pairs, tail, word_log_weight(carpet, parent))


def word_log_weight(carpet: DerivedQuantities, word: Word) -> float:
    """log mu_sigma recomputed from scratch."""
    return float(
        sum(math.log(carpet.p[d]) for d in word.pairs) + sum(math.log(carpet.q[b]) for b in word.tail)
    )


def word_weight(carpet: DerivedQuantities, word: Word) -> float:
    """mu_sigma as a plain product of p's and q's."""
    return math.prod(float(carpet.p[d]) for d in word.pairs) * math.prod(float(carpet.q[b]) for b in word.tail)


def check_word(carpet: DerivedQuantities, word: Word) -> None:
    k = word.depth
    if k < 1:
        raise InvalidParam("empty word", {})
    if len(word.pairs) != carpet.ell(k):
        raise InvalidParam("pairs length must equal ell(k)", {"k": k, "pairs": len(word.pairs)})


def square_geometry(carpet: DerivedQuantities, word: Word) -> SquareGeometry:
    """Integer corner codes of F_sigma (exact, arbitrary depth)."""
    k = word.depth
    l = len(word.pairs)
    p_code = 0
    for d in word.pairs:
        p_code = p_code * carpet.n + carpet.digits[d][0]
    vertical = [carpet.digits[d][1] for d in word.pairs] + [carpet.Gy[b] for b in word.tail]
    q_code = 0
    for j in vertical:
        q_code = q_code * carpet.m + j
    return SquareGeometry(n=carpet.n, m=carpet.m, ell=l, depth=k, p=p_code, q=q_code)


def is_prefix(carpet: DerivedQuantities, ancestor: Word, word: Word) -> bool:
    """True when ``word`` refines ``ancestor`` (ancestor is reached by parent_flat)."""
    while word.depth > ancestor.depth:
        word = parent_flat(carpet, word)
    return word == ancestor


def random_word(carpet: DerivedQuantities, depth: int, rng: np.random.Generator) -> Word:
    """Word of the given depth drawn by descending with measure ratios."""
    word = roots(carpet)[int(rng.choice(len(carpet.Gy), p=carpet.q / carpet.q.sum()))]
    while word.depth < depth:
        options = children(carpet, word)
        probs = np.array([ratio for _, ratio in options])
        word = options[int(rng.choice(len(options), p=probs / probs.sum()))][0]
    return word


def uniform_random_word(carpet: DerivedQuantities, depth: int, rng: np.random.Generator) -> Word:
    """Word of the given depth with symbols drawn uniformly (reaches rare digits)."""
    word = roots(carpet)[int(rng.integers(len(carpet.Gy)))]
    while word.depth < depth:
        options = children(carpet, word)
        word = options[int(rng.integers(len(options)))][0]
    return word


def telescoped_weight(carpet: DerivedQuantities, path: Iterable[Word]) -> Optional[float]:
    """Product of child ratios along a root-to-leaf path of words."""
    path = list(path)
    if not path:
        return None
    weight = float(carpet.q[path[0].tail[0]])
    for parent, child in zip(path, path[1:]):
        ratios = {w: ratio for w, ratio in children(carpet, parent)}
        weight *= ratios[child]
    return weight
