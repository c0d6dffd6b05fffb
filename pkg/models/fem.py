import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from models.errors import DomainError

MAX_DEFORMATION = 0.2


@dataclass(frozen=True)
class PerturbedDisk:
    """Area-preserving family r(theta) = rho R (1 + t a cos(s theta))."""

    R: float
    s: int = 1
    a: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError(f"Base radius must be positive, got {self.R}")
        if int(self.s) != self.s or self.s < 1:
            raise DomainError(f"Perturbation mode must be an integer >= 1, got {self.s}")
        if abs(self.t * self.a) > MAX_DEFORMATION:
            raise DomainError(f"|t a| = {abs(self.t * self.a):.3g} exceeds {MAX_DEFORMATION}")

    @property
    def rho(self) -> float:
        return (1.0 + 0.5 * (self.t * self.a) ** 2) ** -0.5

    def radius(self, theta):
        return self.rho * self.R * (1.0 + self.t * self.a * np.cos(self.s * theta))

    def normal_speed(self, theta):
        """Normal velocity of the family at t = 0."""
        return self.R * self.a * np.cos(self.s * theta)

    @property
    def area(self) -> float:
        """Exact enclosed area, 1/2 of the integral of r(theta)^2."""
        return 0.5 * (self.rho * self.R) ** 2 * (2.0 * math.pi + math.pi * (self.t * self.a) ** 2)

    def at(self, t: float) -> "PerturbedDisk":
        return PerturbedDisk(R=self.R, s=self.s, a=self.a, t=t)


@dataclass(frozen=True)
class FemMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    n_r: int
    n_theta: int


@dataclass(frozen=True)
class FemSystem:
    domain: PerturbedDisk
    mesh: FemMesh
    stiffness: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    boundary_vector: np.ndarray = field(repr=False)
    load: np.ndarray = field(repr=False)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.boundary_vector))

    @property
    def area(self) -> float:
        """Shoelace area of the boundary polygon."""
        x, y = self.mesh.nodes[self.mesh.boundary].T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.mesh.nodes.shape[0], dtype=bool)
        mask[self.mesh.boundary] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class SignPattern:
    weights: np.ndarray

    @classmethod
    def constant(cls, size: int) -> "SignPattern":
        return cls(np.ones(size))

    @classmethod
    def from_trace(cls, trace: np.ndarray, previous: Optional["SignPattern"] = None) -> "SignPattern":
        """Signs of a boundary trace; zero entries keep the previous sign."""
        weights = np.sign(trace).astype(float)
        fallback = previous.weights if previous is not None else np.ones_like(weights)
        weights[weights == 0] = fallback[weights == 0]
        return cls(weights)

    def canonical(self) -> "SignPattern":
        """Representative of {w, -w}; both give the same rank-one term."""
        weights = self.weights
        if weights.sum() < 0 or (weights.sum() == 0 and weights[0] < 0):
            weights = -weights
        return SignPattern(weights)

    def key(self) -> bytes:
        return self.canonical().weights.astype(np.int8).tobytes()

    @property
    def sign_changing(self) -> bool:
        return bool(np.any(self.weights > 0) and np.any(self.weights < 0))


@dataclass(frozen=True)
class EnergyField:
    u: np.ndarray = field(repr=False)
    energy: float
    trace: np.ndarray = field(repr=False)
    iterations: int


@dataclass(frozen=True)
class EigenField:
    lambda_: float
    pencil_lambda: float
    u: np.ndarray = field(repr=False)
    trace: np.ndarray = field(repr=False)
    pattern: SignPattern = field(repr=False)
    converged: bool
    iterations: int
    sign_changing: bool
    refined: bool = True


@dataclass(frozen=True)
class EnergyDerivatives:
    d1: float
    d2: float
    scaled_d2: float
    analytic: float
    energies: tuple[float, ...]


@dataclass(frozen=True)
class EigenDerivatives:
    d1: float
    d2: float
    scaled_d2: float
    analytic: float
    lambdas: tuple[float, ...]


@dataclass(frozen=True)
class ScanRow:
    m: float
    m_over_m0: float
    regime: str
    lambda_: float
    pencil_lambda: float
    reference_lambda: Optional[float]
    variation: float
    sign_changing: bool
    converged: bool
    passed: Optional[bool]
