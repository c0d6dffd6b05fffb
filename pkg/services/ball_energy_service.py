import logging
import math
from typing import Callable

import numpy as np

from models.ball import BallConfig, EnergyBallSolution, RadialProfile, RadialSource
from models.errors import (
    DegenerateDistributionError,
    DomainError,
    NumericalError,
    VerificationError,
)
from utils.quadrature import PANELS, composite_gauss, cumulative_integral

logger = logging.getLogger("insulation_lab")

CLOSED_FORM_RTOL = 1e-10
ODE_RTOL = 1e-8
ENERGY_IDENTITY_RTOL = 1e-8


def check_material(m: float) -> float:
    m = float(m)
    if not (math.isfinite(m) and m > 0):
        raise DomainError(f"Material amount m must be positive, got {m}")
    return m


def mean_source(config: BallConfig, f: RadialSource) -> float:
    """Average of f over B_R, exact for the polynomial representation."""
    n, R = config.n, config.R
    return float(n * f.radial_moment(n, R) / R ** n)


def solve_radial(config: BallConfig, f: RadialSource, m: float) -> EnergyBallSolution:
    """Radial minimizer of the insulated energy on B_R with source f and material m."""
    m = check_material(m)
    f_grid = f.validate(config.R)
    n, R = config.n, config.R

    def integrand(s):
        return f.profile(s) * s ** (n - 1)

    def radial_derivative(s):
        return -s ** (1 - n) * cumulative_integral(integrand, s, 0.0, R)

    r, weights = composite_gauss(0.0, R)
    ur = radial_derivative(r)

    # Boundary data in closed form, cross-checked against quadrature.
    mean_f = mean_source(config, f)
    mean_f_quad = n * float(np.sum(weights * integrand(r))) / R ** n
    ur_R = -(R / n) * mean_f
    ur_R_quad = float(radial_derivative(np.array([R]))[0])
    for label, exact, quad in (("mean_f", mean_f, mean_f_quad), ("ur_R", ur_R, ur_R_quad)):
        if abs(exact - quad) > CLOSED_FORM_RTOL * abs(exact):
            raise NumericalError(f"{label}: closed form {exact:.15g} disagrees with quadrature {quad:.15g}")

    u_R = m * mean_f / (n ** 2 * config.omega_n * R ** (n - 2))
    f_R = float(f.profile(R))
    fprime_R = float(f.derivative(R))
    urr_R = -f_R - ((n - 1) / R) * ur_R

    bc_residual = abs(ur_R + config.perimeter * u_R / m)
    if bc_residual > 1e-12 * abs(ur_R):
        raise NumericalError(f"Boundary condition residual {bc_residual:.3e} too large")

    drop_total = float(np.sum(weights * -ur))
    drop = cumulative_integral(lambda s: -radial_derivative(s), r, 0.0, R)
    u = u_R + (drop_total - drop)
    if np.min(u) <= 0:
        raise NumericalError(f"Radial temperature is not positive (min u = {np.min(u):.3e})")

    # Flux balance per quadrature panel: (r^{n-1} u_r)' = -f r^{n-1}.
    edges = np.linspace(0.0, R, PANELS + 1)
    flux = np.concatenate(([0.0], edges[1:] ** (n - 1) * radial_derivative(edges[1:])))
    source = f.radial_moment(n, edges)
    shell = (edges[1:] ** n - edges[:-1] ** n) / n
    ode_residual = float(np.max(np.abs(np.diff(flux) + np.diff(source)) / shell))
    if ode_residual > ODE_RTOL * float(np.max(f_grid)):
        raise NumericalError(f"ODE residual {ode_residual:.3e} exceeds tolerance")

    sphere = n * config.omega_n
    dirichlet = 0.5 * sphere * float(np.sum(weights * ur ** 2 * r ** (n - 1)))
    source_work = sphere * float(np.sum(weights * f.profile(r) * u * r ** (n - 1)))
    boundary = (config.perimeter * u_R) ** 2 / (2.0 * m)
    energy = dirichlet + boundary - source_work

    logger.debug(f"Ball solve n={n} R={R} m={m}: u_R={u_R:.6g}, energy={energy:.6g}")
    return EnergyBallSolution(
        config=config,
        source=f,
        m=m,
        mean_f=mean_f,
        u_R=u_R,
        ur_R=ur_R,
        urr_R=urr_R,
        f_R=f_R,
        fprime_R=fprime_R,
        energy=energy,
        half_source_work=0.5 * source_work,
        ode_residual=ode_residual,
        profile=RadialProfile(r=r, weights=weights, u=u, ur=ur),
    )


def energy_value(sol: EnergyBallSolution) -> float:
    """E_m(B_R), checked against the identity E = -1/2 * integral of f u."""
    gap = abs(sol.energy + sol.half_source_work)
    if gap > ENERGY_IDENTITY_RTOL * abs(sol.energy):
        raise VerificationError(
            f"Energy {sol.energy:.12g} does not match -1/2 int f u = {-sol.half_source_work:.12g}"
        )
    return sol.energy


def optimal_distribution(sol: EnergyBallSolution) -> Callable[[np.ndarray], np.ndarray]:
    """Optimal insulation density on the sphere; constant m / P(B_R) for the radial solution."""
    if sol.u_R == 0:
        raise DegenerateDistributionError("Boundary temperature vanishes; no distribution defined")
    # |u| is constant on the sphere, so m|u| / int|u| reduces to m / P.
    boundary_integral = sol.config.perimeter * abs(sol.u_R)
    density = sol.m * abs(sol.u_R) / boundary_integral
    if abs(density * sol.config.perimeter - sol.m) > 1e-10 * sol.m:
        raise VerificationError("Insulation density does not integrate to m")

    def h(sigma):
        return np.full(np.shape(sigma), density)

    return h


def distribution_from_trace(trace: np.ndarray, boundary_weights: np.ndarray, m: float) -> np.ndarray:
    """Nodal density m|u| / int |u| for a discrete boundary trace."""
    mass = float(np.dot(boundary_weights, np.abs(trace)))
    if not mass > 0:
        raise DegenerateDistributionError("Boundary trace vanishes; no distribution defined")
    return m * np.abs(trace) / mass
