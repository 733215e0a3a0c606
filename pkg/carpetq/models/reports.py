from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ConditionRow:
    j: int
    q: float
    c_jr: Optional[float]
    c_j: float


@dataclass(frozen=True)
class DimReport:
    r: float
    s0: float
    sr: float
    tr: float
    kappa: float
    rows: Tuple[ConditionRow, ...]
    condition_a: Optional[bool]
    condition_b: bool
    condition_c: bool
    pi_r: Optional[float]
    tol: float

    @property
    def c_values(self) -> List[float]:
        return [row.c_jr for row in self.rows if row.c_jr is not None]


@dataclass(frozen=True)
class SpectrumRow:
    t: float
    T: float
    alpha: float
    f: float


@dataclass(frozen=True)
class ThetaRow:
    r: float
    theta_r: Optional[float]
    identity: Optional[float]
    error: Optional[str] = None


@dataclass(frozen=True)
class SpectrumTable:
    rows: Tuple[SpectrumRow, ...]
    theta_rows: Tuple[ThetaRow, ...] = ()


@dataclass
class WeightedCloud:
    """Discrete stand-in for the self-affine measure.

    ``cell`` gives each atom's (width, height) so that geometric tweaks
    (r = 0 floors, off-grid nudges) stay inside the atom's own square.
    """

    points: np.ndarray
    weights: np.ndarray
    cell: np.ndarray
    provenance: Dict[str, Any]
    separated: bool
    bias: float

    def __len__(self) -> int:
        return int(self.weights.size)

    @property
    def min_height(self) -> float:
        return float(self.cell[:, 1].min())


@dataclass
class LloydResult:
    codebook: np.ndarray
    error: float
    objective: float
    iterations: int
    restart: int
    restarts: int
    history: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class CurveRow:
    k: int
    e: float
    residual: float
    restarts: int
    coefficient: float
    monotone: bool


@dataclass(frozen=True)
class ErrorCurve:
    r: float
    s: float
    depth: int
    bias: float
    rows: Tuple[CurveRow, ...]
    slope: float
    slope_residual: float

    @property
    def coefficient_ratio(self) -> float:
        coeffs = [row.coefficient for row in self.rows]
        if self.r == 0:
            return max(coeffs) - min(coeffs)
        return max(coeffs) / min(coeffs)


@dataclass(frozen=True)
class BoundRow:
    j: float
    count: int
    bound: float
    proxy: float


@dataclass
class RunManifest:
    config_path: str
    config_hash: str
    command: str
    flags: Dict[str, Any]
    seed: int
    version: str
    timestamp: str
    outputs: List[str] = field(default_factory=list)
