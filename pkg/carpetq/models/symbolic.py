import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Word:
    """Symbolic address of an approximate square of order ``depth``.

    ``pairs`` holds indices into the carpet's digit tuple (length ell(k));
    ``tail`` holds indices into ``Gy`` (length k - ell(k)). The cached
    log-weight does not take part in equality or hashing.
    """

    pairs: Tuple[int, ...]
    tail: Tuple[int, ...]
    log_weight: float = field(default=0.0, compare=False)

    @property
    def depth(self) -> int:
        return len(self.pairs) + len(self.tail)

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True)
class SquareGeometry:
    """Rectangle F_sigma = [p/n^l, (p+1)/n^l] x [q/m^k, (q+1)/m^k]."""

    n: int
    m: int
    ell: int
    depth: int
    p: int
    q: int

    @property
    def width(self) -> float:
        return float(self.n) ** (-self.ell)

    @property
    def height(self) -> float:
        return float(self.m) ** (-self.depth)

    @property
    def x_interval(self) -> Tuple[float, float]:
        return self.p * self.width, (self.p + 1) * self.width

    @property
    def y_interval(self) -> Tuple[float, float]:
        return self.q * self.height, (self.q + 1) * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.p + 0.5) * self.width, (self.q + 0.5) * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, other: "SquareGeometry") -> bool:
        ox, oy = other.x_interval, other.y_interval
        sx, sy = self.x_interval, self.y_interval
        eps = 1e-15
        return (
            sx[0] - eps <= ox[0] and ox[1] <= sx[1] + eps
            and sy[0] - eps <= oy[0] and oy[1] <= sy[1] + eps
        )


class AntichainKind(str, Enum):
    GAMMA_JR = "GammaJR"
    LAMBDA_0J = "Lambda0J"
    LAMBDA_TILDE_KR = "LambdaTildeKR"


@dataclass(frozen=True)
class AntichainStats:
    cardinality: int
    min_depth: int
    max_depth: int
    mass: float
    value_mass: float
    entropy: float
    log_scale: float
    nodes_visited: int


@dataclass
class Antichain:
    """A finite maximal antichain and its member arrays.

    Member arrays are kept in emission order (depth, then tree order).
    ``x_lo``/``y_lo`` are present when the antichain was built with
    geometry; ``words()`` is available when it was built with
    ``retain_words=True``.
    """

    kind: AntichainKind
    param: float
    r: float
    log_m: float
    log_weights: np.ndarray
    depths: np.ndarray
    stats: AntichainStats
    x_lo: Optional[np.ndarray] = None
    y_lo: Optional[np.ndarray] = None
    _word_factory: Optional[Callable[[], List[Word]]] = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.log_weights.size)

    @property
    def log_values(self) -> np.ndarray:
        """log(mu_sigma m^{-|sigma| r}) per member."""
        if self.r == 0:
            return self.log_weights
        return self.log_weights - self.depths * (self.r * self.log_m)

    @property
    def has_words(self) -> bool:
        return self._word_factory is not None

    def words(self) -> List[Word]:
        if self._word_factory is None:
            raise ValueError("antichain was built without retained words")
        return self._word_factory()


@dataclass(frozen=True)
class ShellRow:
    k: int
    phi: int
    phi_tilde: int
    shell_exponent: float
    tilde_exponent: float
    delta_kr: float
    bracket_lo: float
    bracket_hi: float


@dataclass(frozen=True)
class ShellCounts:
    r: float
    lambda1: float
    rows: Tuple[ShellRow, ...]
    nodes_visited: int
