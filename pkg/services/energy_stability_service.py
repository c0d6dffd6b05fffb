import logging
from typing import Iterable, Optional

import numpy as np

from models.ball import VALIDATION_POINTS, BallConfig, EnergyBallSolution, RadialSource
from models.errors import DomainError, VerificationError
from models.stability import (
    CASE_NONDECREASING,
    CASE_NONINCREASING,
    CASE_OUTSIDE,
    CASE_THRESHOLD,
    ModeForm,
    ModeParts,
    StabilityVerdict,
    SteklovReport,
    SteklovTrial,
)
from services.ball_energy_service import check_material, mean_source
from utils.quadrature import composite_gauss

logger = logging.getLogger("insulation_lab")

MONOTONE_TOL = 1e-12
MARGINAL_RTOL = 1e-12
STEKLOV_MAX_MODE = 8


def check_mode(s) -> int:
    if int(s) != s or s < 1:
        raise DomainError(f"Mode s must be an integer >= 1 (s = 0 is a dilation), got {s}")
    return int(s)


def mode_form(bd: EnergyBallSolution, s: int) -> ModeForm:
    """Q_s for a boundary harmonic of order s normalized to unit L2 norm on the sphere.

    The linearized temperature is v = -(u_rr(R) R / s) (r/R)^s Y_s.
    """
    s = check_mode(s)
    n, R = bd.config.n, bd.config.R
    parts = ModeParts(
        linearized=-(R / s) * bd.urr_R ** 2,
        curvature=bd.urr_R * bd.ur_R,
        source=-bd.fprime_R * bd.u_R,
        # s(s+n-2)/R^2 is the sphere Laplacian eigenvalue; s = 1 cancels (n-1).
        nonlocal_boundary=(bd.config.perimeter * bd.u_R ** 2 / bd.m)
        * (s * (s + n - 2) - (n - 1)) / R ** 2,
    )
    return ModeForm(s=s, q_value=parts.total(), parts=parts)


def mode_table(bd: EnergyBallSolution, s_max: int) -> list[ModeForm]:
    if int(s_max) != s_max or s_max < 1:
        raise DomainError(f"s_max must be an integer >= 1, got {s_max}")
    return [mode_form(bd, s) for s in range(1, int(s_max) + 1)]


def _criterion_terms(config: BallConfig, f: RadialSource) -> tuple[float, float, float, float, float]:
    """(local term, slope of the m-term, mean f, f(R), f'(R)) of the stability criterion."""
    n, R = config.n, config.R
    mean_f = mean_source(config, f)
    f_R = float(f.profile(R))
    fprime_R = float(f.derivative(R))
    excess = f.boundary_excess(n, R)
    local = (excess + mean_f / n) * excess
    slope = fprime_R * mean_f / (n ** 2 * config.omega_n * R ** (n - 1))
    return local, slope, mean_f, f_R, fprime_R


def threshold_m1(config: BallConfig, f: RadialSource) -> Optional[float]:
    """Material amount where the criterion changes sign, when f'(R) < 0 and f(R) < (n-1)/n mean f."""
    local, slope, mean_f, f_R, fprime_R = _criterion_terms(config, f)
    if not (fprime_R < 0 and f_R < (config.n - 1) / config.n * mean_f):
        return None
    return -local / slope


def _monotonicity(config: BallConfig, f: RadialSource) -> tuple[bool, bool]:
    values = f.profile(np.linspace(0.0, config.R, VALIDATION_POINTS))
    steps = np.diff(values)
    tol = MONOTONE_TOL * max(1.0, float(np.max(np.abs(values))))
    return bool(np.all(steps >= -tol)), bool(np.all(steps <= tol))


def classify(config: BallConfig, f: RadialSource, m: float) -> StabilityVerdict:
    m = check_material(m)
    f.validate(config.R)
    local, slope, mean_f, f_R, _ = _criterion_terms(config, f)
    value = local + slope * m
    # tolerance sized by the factors, not by their (possibly cancelled) product
    marginal = abs(value) <= MARGINAL_RTOL * ((abs(f_R) + abs(mean_f)) ** 2 + abs(slope * m))

    nondecreasing, nonincreasing = _monotonicity(config, f)
    condition = f_R >= (config.n - 1) / config.n * mean_f
    m1 = None
    if nondecreasing and not nonincreasing:
        label = CASE_NONDECREASING
    elif nonincreasing and condition:
        label = CASE_NONINCREASING
    else:
        m1 = threshold_m1(config, f)
        label = CASE_THRESHOLD if m1 is not None else CASE_OUTSIDE

    if marginal and label == CASE_THRESHOLD:
        logger.warning(f"m = {m:.6g} sits on the stability threshold m1 = {m1:.6g}")
    return StabilityVerdict(
        m=m,
        case_label=label,
        criterion_value=value,
        stable=bool(value <= 0 or marginal),
        marginal=marginal,
        m1=m1,
    )


def stability_scan(config: BallConfig, f: RadialSource, m_grid: Iterable[float]) -> list[StabilityVerdict]:
    return [classify(config, f, m) for m in m_grid]


def worst_mode(bd: EnergyBallSolution, s_max: int) -> int:
    """Mode with the smallest second variation; always the translation mode s = 1 on a ball."""
    if int(s_max) != s_max or s_max < 2:
        raise DomainError(f"s_max must be an integer >= 2, got {s_max}")
    values = [form.q_value for form in mode_table(bd, s_max)]
    worst = int(np.argmin(values)) + 1
    if worst != 1:
        raise VerificationError(f"Worst mode is s = {worst}, expected the translation mode s = 1")
    return worst


# --- Trace inequality for harmonic functions on the ball ---
def _gradient_energy(config: BallConfig, s: int, coefficient: float = 1.0) -> float:
    """Dirichlet energy of coefficient * r^s Y_s with Y_s of unit mean square on the unit sphere."""
    n, R = config.n, config.R
    r, weights = composite_gauss(0.0, R)
    # radial part s^2 r^{2s-2}, tangential part s(s+n-2) r^{2s-2}, volume element r^{n-1}
    density = (s ** 2 + s * (s + n - 2)) * r ** (2 * s + n - 3)
    return coefficient ** 2 * n * config.omega_n * float(np.sum(weights * density))


def _boundary_energy(config: BallConfig, s: int, coefficient: float = 1.0) -> float:
    return coefficient ** 2 * config.R ** (2 * s) * config.perimeter


def harmonic_trace_ratio(config: BallConfig, coefficients: dict[int, float]) -> SteklovTrial:
    """int_{dB} v^2 / (R int_B |grad v|^2) for v = sum_s c_s r^s Y_s, using per-mode orthogonality."""
    if not coefficients:
        raise DomainError("At least one harmonic mode is required")
    boundary = 0.0
    gradient = 0.0
    for s, c in sorted(coefficients.items()):
        s = check_mode(s)
        boundary += _boundary_energy(config, s, c)
        gradient += (s / config.R) * _boundary_energy(config, s, c)
    return SteklovTrial(
        modes=tuple(sorted(int(s) for s in coefficients)),
        boundary_integral=boundary,
        gradient_integral=gradient,
        ratio=boundary / (config.R * gradient),
    )


def steklov_inequality_check(config: BallConfig, trials: int, seed: int = 0) -> SteklovReport:
    """Trace inequality int_{dB} v^2 <= R int_B |grad v|^2 on random zero-mean harmonic functions."""
    if int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be an integer >= 1, got {trials}")
    residuals = {}
    for s in range(1, STEKLOV_MAX_MODE + 1):
        boundary = _boundary_energy(config, s)
        residuals[s] = abs(boundary - (config.R / s) * _gradient_energy(config, s)) / boundary

    rng = np.random.default_rng(seed)
    results = []
    for _ in range(int(trials)):
        count = int(rng.integers(1, 5))
        modes = rng.choice(np.arange(1, STEKLOV_MAX_MODE + 1), size=count, replace=False)
        coefficients = {int(s): float(rng.normal()) for s in modes}
        results.append(harmonic_trace_ratio(config, coefficients))

    max_ratio = max(trial.ratio for trial in results)
    holds = max_ratio <= 1.0 + 1e-12 and max(residuals.values()) <= 1e-10
    logger.info(f"Trace inequality over {trials} trials: max ratio {max_ratio:.12g}")
    return SteklovReport(
        trials=results,
        mode_identity_residuals=residuals,
        max_ratio=max_ratio,
        holds=holds,
    )
