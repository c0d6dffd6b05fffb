import logging
import math
from typing import Callable, Iterable, Optional

import numpy as np

from models.ball import BallConfig, EigenBallSolution
from models.errors import (
    DomainError,
    NumericalError,
    RegimeError,
    UnsupportedDimensionError,
    VerificationError,
)
from models.stability import EigenModeForm, LandauReport, LandauRow
from services.ball_energy_service import check_material
from services.energy_stability_service import check_mode
from utils.specfun import (
    bessel_j,
    bessel_j_prime,
    bessel_j_zero_prime,
    dirichlet_radial_root,
    find_root,
    neumann_radial_root,
)

logger = logging.getLogger("insulation_lab")

BRACKET_POINTS = 64
BRACKET_EPS = 1e-9
RESIDUAL_TOL = 1e-10
IDENTITY_TOL = 1e-8
FS_TOL = 1e-8


def neumann_mu2(config: BallConfig) -> float:
    """First nonzero Neumann eigenvalue of the Laplacian on B_R."""
    return (neumann_radial_root(config.n) / config.R) ** 2


def dirichlet_lambda1(config: BallConfig) -> float:
    """First Dirichlet eigenvalue of B_R, the limit of lambda_m as m -> 0."""
    return (dirichlet_radial_root(config.n) / config.R) ** 2


def transcendental(config: BallConfig, m: float, lam: float) -> float:
    """Robin-type radial equation u_r(R) + (P/m) u(R) = 0 for u = r^{1-n/2} J_{n/2-1}(sqrt(lam) r).

    Uses u'(r) = -sqrt(lam) r^{1-n/2} J_{n/2}(sqrt(lam) r).
    """
    n, R = config.n, config.R
    k = math.sqrt(lam)
    scale = R ** (1.0 - 0.5 * n)
    return (-k * scale * bessel_j(0.5 * n, k * R)
            + (config.perimeter / m) * scale * bessel_j(0.5 * n - 1.0, k * R))


def _relative_transcendental(config: BallConfig, m: float, lam: float) -> float:
    n, R = config.n, config.R
    k = math.sqrt(lam)
    scale = R ** (1.0 - 0.5 * n)
    size = (abs(k * scale * bessel_j(0.5 * n, k * R))
            + abs((config.perimeter / m) * scale * bessel_j(0.5 * n - 1.0, k * R)))
    return abs(transcendental(config, m, lam)) / size


def m0_threshold(config: BallConfig) -> float:
    """Symmetry-breaking threshold m0 = ((n-1)/n) P^2 / |B| / mu2(B_R).

    The radial equation is checked to hold at (mu2, m0), where the radial branch
    meets the second Neumann eigenvalue.
    """
    mu2 = neumann_mu2(config)
    m0 = (config.n - 1) / config.n * config.perimeter ** 2 / config.volume / mu2
    residual = _relative_transcendental(config, m0, mu2)
    if residual > IDENTITY_TOL:
        raise VerificationError(f"Radial equation residual {residual:.3e} at (mu2, m0) exceeds {IDENTITY_TOL}")
    return m0


def _bracket(g: Callable[[float], float], lo: float, hi: float) -> tuple[float, float]:
    """Unique sign change of g on a uniform grid of [lo, hi]."""
    grid = np.linspace(lo, hi, BRACKET_POINTS)
    values = np.array([g(x) for x in grid])
    changes = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    if changes.size != 1:
        raise VerificationError(f"Expected one sign change on [{lo:.6g}, {hi:.6g}], found {changes.size}")
    i = int(changes[0])
    return float(grid[i]), float(grid[i + 1])


def _normalized_solution(config: BallConfig, m: float, lam: float, mu2: Optional[float]) -> EigenBallSolution:
    n, R = config.n, config.R
    nu = 0.5 * n - 1.0
    k = math.sqrt(lam)
    z = k * R
    # int_0^R r J_nu(kr)^2 dr in closed form; u^2 r^{n-1} = c^2 r J_nu(kr)^2.
    radial = 0.5 * R ** 2 * (bessel_j_prime(nu, z) ** 2 + (1.0 - (nu / z) ** 2) * bessel_j(nu, z) ** 2)
    normalization = 1.0 / math.sqrt(n * config.omega_n * radial)
    u_R = normalization * R ** (-nu) * bessel_j(nu, z)
    return EigenBallSolution(
        config=config,
        m=m,
        lambda_=lam,
        u_R=u_R,
        ur_R=-(config.perimeter / m) * u_R,
        urr_R=((n - 1) / R * config.perimeter / m - lam) * u_R,
        residual=transcendental(config, m, lam),
        normalization=normalization,
        mu2=mu2,
    )


def lambda_m(config: BallConfig, m: float) -> EigenBallSolution:
    """Optimal insulated eigenvalue of B_R in the uniform regime m > m0."""
    m = check_material(m)
    m0 = m0_threshold(config)
    if m <= m0:
        raise RegimeError(
            f"m = {m:.6g} <= m0 = {m0:.6g}: the radial branch is not optimal, use the FEM sign iteration"
        )
    mu2 = neumann_mu2(config)
    eps = BRACKET_EPS * mu2

    def g(lam: float) -> float:
        return transcendental(config, m, lam)

    lo, hi = _bracket(g, eps, mu2 - eps)
    lam = find_root(g, lo, hi, 1e-14 * mu2)
    sol = _normalized_solution(config, m, lam, mu2)
    if abs(sol.residual) > RESIDUAL_TOL:
        raise NumericalError(f"Radial residual {sol.residual:.3e} at lambda = {lam:.15g} exceeds {RESIDUAL_TOL}")
    logger.debug(f"lambda_m(n={config.n}, R={config.R}, m={m:.6g}) = {lam:.12g}")
    return sol


def radial_candidate(config: BallConfig, m: float) -> float:
    """Radial critical value for 0 < m < m0, root of the radial equation in (mu2, lambda_D)."""
    m = check_material(m)
    m0 = m0_threshold(config)
    if m >= m0:
        raise RegimeError(f"m = {m:.6g} >= m0 = {m0:.6g}: use lambda_m for the radial minimizer")
    mu2 = neumann_mu2(config)
    lam_d = dirichlet_lambda1(config)
    eps = BRACKET_EPS * mu2

    def g(lam: float) -> float:
        return transcendental(config, m, lam)

    lo, hi = _bracket(g, mu2 + eps, lam_d - eps)
    return find_root(g, lo, hi, 1e-14 * lam_d)


def eigen_distribution(sol: EigenBallSolution) -> float:
    """Uniform optimal insulation density m / P(B_R) of the radial regime."""
    return sol.m / sol.config.perimeter


# --- Disk second variation (n = 2) ---
def _require_disk(config: BallConfig) -> None:
    if config.n != 2:
        raise UnsupportedDimensionError(f"Mode factors are only available for n = 2, got n = {config.n}")


def _fs_from_solution(sol: EigenBallSolution, s: int) -> float:
    m, lam, R = sol.m, sol.lambda_, sol.config.R
    z = math.sqrt(lam) * R
    return (m * lam - 2.0 * math.pi) / (z * bessel_j_prime(s, z)) * bessel_j(s, z) - 2.0 * math.pi


def fs_factor(config: BallConfig, m: float, s: int) -> float:
    _require_disk(config)
    s = check_mode(s)
    sol = lambda_m(config, m)
    return _fs_from_solution(sol, s)


def _mode_value(eigen: EigenBallSolution, s: int) -> EigenModeForm:
    m, lam, R, u_R = eigen.m, eigen.lambda_, eigen.config.R, eigen.u_R
    f_s = _fs_from_solution(eigen, s)
    # zeta = c_s cos(s theta) + d_s sin(s theta); each has int_{dB} zeta^2 = pi R.
    coupled = (R ** 2 / m) * (2.0 * math.pi / m - lam) * math.pi * u_R ** 2 * f_s
    boundary = (1.0 / m) * (2.0 * math.pi * R * u_R ** 2) * math.pi * R * (s ** 2 - 1) / R ** 2
    return EigenModeForm(s=s, f_s=f_s, q_value=coupled + boundary)


def eigen_mode_form(config: BallConfig, m: float, s: int) -> EigenModeForm:
    """Coefficient of (c_s^2 + d_s^2) in half the second variation of lambda_m at the disk."""
    _require_disk(config)
    s = check_mode(s)
    return _mode_value(lambda_m(config, m), s)


def eigen_mode_table(config: BallConfig, m: float, s_max: int) -> list[EigenModeForm]:
    _require_disk(config)
    if int(s_max) != s_max or s_max < 1:
        raise DomainError(f"s_max must be an integer >= 1, got {s_max}")
    eigen = lambda_m(config, m)
    z = math.sqrt(eigen.lambda_) * config.R
    if z >= bessel_j_zero_prime(1.0, 1):
        raise VerificationError(f"sqrt(lambda) R = {z:.12g} is not below the first zero of J_1'")
    forms = [_mode_value(eigen, s) for s in range(1, int(s_max) + 1)]
    if abs(forms[0].f_s) > FS_TOL:
        raise VerificationError(f"f_1 = {forms[0].f_s:.3e} should vanish for m > m0")
    return forms


def mlambda_scan(config: BallConfig, m_grid: Iterable[float],
                 mapper: Callable = map) -> list[dict]:
    """Rows (m, lambda_m, m lambda_m) along an increasing m grid, with the two limits of m lambda_m."""
    grid = [check_material(m) for m in m_grid]
    if not grid:
        raise DomainError("m grid is empty")
    solutions = list(mapper(lambda m: lambda_m(config, m), grid))
    lower = (config.n - 1) / config.n * config.perimeter ** 2 / config.volume
    upper = config.perimeter ** 2 / config.volume
    rows = [
        {
            "m": sol.m,
            "lambda": sol.lambda_,
            "m_lambda": sol.m * sol.lambda_,
            "lower_limit": lower,
            "upper_limit": upper,
        }
        for sol in solutions
    ]
    for previous, row in zip(rows, rows[1:]):
        if row["m"] > previous["m"] and not row["m_lambda"] > previous["m_lambda"]:
            raise VerificationError(f"m lambda_m is not increasing at m = {row['m']:.6g}")
    return rows


def landau_check(t_grid: Iterable[float], s_grid: Iterable[float]) -> LandauReport:
    """Monotonicity in s of J_s(t) / (t J_s'(t)) and J_s(t) / J_{s+1}(t) for t below j'_{1,1}."""
    t_values = [float(t) for t in t_grid]
    s_values = sorted(float(s) for s in s_grid)
    if not t_values or not s_values:
        raise DomainError("Landau check needs nonempty t and s grids")
    if any(s < 1 for s in s_values):
        raise DomainError(f"Orders must be >= 1, got {s_values}")
    first_zero = bessel_j_zero_prime(1.0, 1)
    rows = []
    for t in t_values:
        if not 0 < t < first_zero:
            raise DomainError(f"t = {t} outside (0, {first_zero:.10f})")
        quotients = [bessel_j(s, t) / (t * bessel_j_prime(s, t)) for s in s_values]
        ratios = [bessel_j(s, t) / bessel_j(s + 1.0, t) for s in s_values]
        decreasing = (all(b < a for a, b in zip(quotients, quotients[1:]))
                      and all(b > a for a, b in zip(ratios, ratios[1:])))
        rows.append(LandauRow(t=t, ratios=ratios, quotients=quotients, decreasing=decreasing))
    holds = all(row.decreasing for row in rows)
    if not holds:
        logger.warning("Bessel ratio monotonicity failed on part of the grid")
    return LandauReport(s_grid=s_values, rows=rows, holds=holds)
