import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, StrictInt, StrictStr

from ..errors import UnknownDigit


# Pydantic Schemas
class DigitEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    i: StrictInt
    j: StrictInt
    p: StrictStr


class CarpetSpec(BaseModel):
    """Raw carpet config: grid bases and weighted digit set, as read from JSON."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: StrictInt
    m: StrictInt
    digits: List[DigitEntry]


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float


@dataclass(frozen=True)
class DerivedQuantities:
    """A validated carpet with every scalar the downstream services need.

    Digits keep config order; ``row[d]`` is the index of digit d's row in
    ``Gy`` and ``fibers[b]`` lists the digit indices of row ``Gy[b]`` in
    increasing i. Exact probabilities are kept as Fractions so that row sums
    are exact; the float arrays are their double roundings.
    """

    n: int
    m: int
    digits: Tuple[Tuple[int, int], ...]
    p_exact: Tuple[Fraction, ...]
    q_exact: Tuple[Fraction, ...]
    Gx: Tuple[int, ...]
    Gy: Tuple[int, ...]
    fibers: Tuple[Tuple[int, ...], ...]
    separated: bool
    p: np.ndarray = field(compare=False, repr=False)
    q: np.ndarray = field(compare=False, repr=False)
    row: np.ndarray = field(compare=False, repr=False)

    # --- scalar derived quantities -------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.digits)

    @property
    def theta(self) -> float:
        return math.log(self.m) / math.log(self.n)

    @property
    def log_m(self) -> float:
        return math.log(self.m)

    @property
    def Gxj(self) -> Dict[int, Tuple[int, ...]]:
        """Fiber sets G_{x,j}: the i values present in row j."""
        return {
            self.Gy[b]: tuple(self.digits[d][0] for d in fiber)
            for b, fiber in enumerate(self.fibers)
        }

    @property
    def pmin(self) -> float:
        return float(self.p.min())

    @property
    def qmin(self) -> float:
        return float(self.q.min())

    @property
    def qmax(self) -> float:
        return float(self.q.max())

    @property
    def delta(self) -> float:
        return math.sqrt(self.n ** 2 + 1)

    @property
    def eta0(self) -> float:
        return min(self.pmin * self.qmin, self.qmin)

    @property
    def max_ratio(self) -> float:
        """max p_ij / q_j over the digit set."""
        return float((self.p / self.q[self.row]).max())

    def eta_lower(self, r: float) -> float:
        scale = self.m ** (-r)
        return min(self.pmin * self.qmin * scale, self.qmin * scale)

    def eta_upper(self, r: float) -> float:
        scale = self.m ** (-r)
        return max(self.qmax * scale, self.max_ratio * scale)

    def lambda1(self, r: float) -> float:
        return -math.log(self.eta_lower(r))

    def lambda2(self, r: float) -> float:
        return -math.log(self.eta_upper(r))

    def ell(self, k: int) -> int:
        return _ell(self.n, self.m, k)

    def digit_index(self, i: int, j: int) -> int:
        try:
            return self.digits.index((i, j))
        except ValueError:
            raise UnknownDigit("digit is not in G", {"i": i, "j": j}) from None

    def apply_map(self, digit: Tuple[int, int], pt: PlanePoint) -> PlanePoint:
        i, j = digit
        self.digit_index(i, j)
        return PlanePoint(x=(pt.x + i) / self.n, y=(pt.y + j) / self.m)


@lru_cache(maxsize=4096)
def _ell(n: int, m: int, k: int) -> int:
    # largest l with n**l <= m**k, in exact integer arithmetic
    target = m ** k
    l = int(k * math.log(m) / math.log(n))
    while n ** (l + 1) <= target:
        l += 1
    while l > 0 and n ** l > target:
        l -= 1
    return l
