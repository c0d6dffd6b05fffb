from dataclasses import dataclass, field
from typing import Optional

CASE_NONDECREASING = "nondecreasing-unstable"
CASE_NONINCREASING = "nonincreasing-stable"
CASE_THRESHOLD = "threshold"
# Sources that satisfy none of the three monotonicity hypotheses.
CASE_OUTSIDE = "outside-theorem"


@dataclass(frozen=True)
class ModeParts:
    linearized: float
    curvature: float
    source: float
    nonlocal_boundary: float

    def total(self) -> float:
        return self.linearized + self.curvature + self.source + self.nonlocal_boundary


@dataclass(frozen=True)
class ModeForm:
    """Second variation of the energy for a unit-L2 boundary harmonic of order s."""

    s: int
    q_value: float
    parts: ModeParts


@dataclass(frozen=True)
class StabilityVerdict:
    m: float
    case_label: str
    criterion_value: float
    stable: bool
    marginal: bool = False
    m1: Optional[float] = None

    @property
    def status(self) -> str:
        if self.marginal:
            return "marginally stable"
        return "stable" if self.stable else "unstable"


@dataclass(frozen=True)
class EigenModeForm:
    s: int
    f_s: float
    q_value: float


@dataclass(frozen=True)
class SteklovTrial:
    modes: tuple[int, ...]
    boundary_integral: float
    gradient_integral: float
    ratio: float


@dataclass(frozen=True)
class SteklovReport:
    trials: list[SteklovTrial]
    mode_identity_residuals: dict[int, float]
    max_ratio: float
    holds: bool


@dataclass(frozen=True)
class LandauRow:
    t: float
    ratios: list[float] = field(default_factory=list)
    quotients: list[float] = field(default_factory=list)
    decreasing: bool = True


@dataclass(frozen=True)
class LandauReport:
    s_grid: list[float]
    rows: list[LandauRow]
    holds: bool
