import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.errors import DomainError, SourceValidationError

MAX_SOURCE_DEGREE = 12
VALIDATION_POINTS = 1001


@dataclass(frozen=True)
class BallConfig:
    n: int
    R: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"Dimension n must be an integer >= 2, got {self.n}")
        if not (math.isfinite(self.R) and self.R > 0):
            raise DomainError(f"Radius R must be positive, got {self.R}")

    @property
    def omega_n(self) -> float:
        """Volume of the unit ball in R^n."""
        return math.pi ** (0.5 * self.n) / math.gamma(0.5 * self.n + 1.0)

    @property
    def perimeter(self) -> float:
        return self.n * self.omega_n * self.R ** (self.n - 1)

    @property
    def volume(self) -> float:
        return self.omega_n * self.R ** self.n


@dataclass(frozen=True)
class RadialSource:
    """Polynomial heat source f(r) = sum_k c_k r^k."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients:
            raise SourceValidationError("Source needs at least one coefficient")
        if len(coefficients) - 1 > MAX_SOURCE_DEGREE:
            raise SourceValidationError(
                f"Source degree {len(coefficients) - 1} exceeds the supported {MAX_SOURCE_DEGREE}"
            )
        if not all(math.isfinite(c) for c in coefficients):
            raise SourceValidationError(f"Source coefficients must be finite, got {coefficients}")
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def constant(cls, value: float = 1.0) -> "RadialSource":
        return cls((value,))

    @classmethod
    def parse(cls, text: str) -> "RadialSource":
        """Build a source from a comma list such as ``"1,0,-1"`` (1 - r^2)."""
        try:
            return cls(tuple(float(part) for part in text.split(",") if part.strip()))
        except ValueError as e:
            raise SourceValidationError(f"Cannot parse source coefficients '{text}': {e}") from e

    def profile(self, r):
        return np.polynomial.polynomial.polyval(r, self.coefficients)

    def derivative(self, r):
        return np.polynomial.polynomial.polyval(r, np.polynomial.polynomial.polyder(self.coefficients))

    def scaled(self, factor: float) -> "RadialSource":
        return RadialSource(tuple(factor * c for c in self.coefficients))

    def radial_moment(self, n: int, r):
        """Exact value of the integral of f(s) s^{n-1} from 0 to r."""
        antiderivative = np.polynomial.polynomial.polyint(
            np.concatenate((np.zeros(n - 1), self.coefficients))
        )
        return np.polynomial.polynomial.polyval(r, antiderivative)

    def boundary_excess(self, n: int, R: float) -> float:
        """f(R) minus the mean of f over B_R, summed termwise as c_k R^k k / (n + k).

        The constant term drops out exactly, so constant sources give 0.0.
        """
        return float(sum(c * R ** k * k / (n + k) for k, c in enumerate(self.coefficients) if k))

    def validate(self, R: float, require_nonzero: bool = True) -> np.ndarray:
        """Check f >= 0 (and f not identically 0) on the uniform validation grid of [0, R]."""
        grid = np.linspace(0.0, R, VALIDATION_POINTS)
        values = self.profile(grid)
        scale = max(1.0, float(np.max(np.abs(values))))
        negative = np.flatnonzero(values < -1e-12 * scale)
        if negative.size:
            r_bad = float(grid[negative[0]])
            raise SourceValidationError(
                f"Source is negative at r = {r_bad:.6g} (f = {values[negative[0]]:.6g})", point=r_bad
            )
        if require_nonzero and not np.max(values) > 0:
            raise SourceValidationError("Source vanishes identically on [0, R]")
        return values


@dataclass(frozen=True)
class RadialProfile:
    """Temperature profile sampled on the composite Gauss grid of [0, R]."""

    r: np.ndarray
    weights: np.ndarray
    u: np.ndarray
    ur: np.ndarray

    def u_at(self, r):
        return np.interp(r, self.r, self.u)


@dataclass(frozen=True)
class EnergyBallSolution:
    config: BallConfig
    source: RadialSource
    m: float
    mean_f: float
    u_R: float
    ur_R: float
    urr_R: float
    f_R: float
    fprime_R: float
    energy: float
    half_source_work: float
    ode_residual: float
    profile: RadialProfile = field(repr=False)


@dataclass(frozen=True)
class EigenBallSolution:
    config: BallConfig
    m: float
    lambda_: float
    u_R: float
    ur_R: float
    urr_R: float
    residual: float
    normalization: float
    mu2: Optional[float] = None
