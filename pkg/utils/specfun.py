import math
from typing import Callable

from models.errors import BracketError, DomainError, EvaluationError

# Above this argument the power series loses too many digits to cancellation.
SERIES_CUTOFF = 8.0
MAX_ARGUMENT = 1.0e4
_RESCALE = 1.0e250


def _check_domain(order: float, x: float) -> None:
    if not (math.isfinite(order) and math.isfinite(x)):
        raise DomainError(f"Bessel arguments must be finite, got order={order}, x={x}")
    if order < 0:
        raise DomainError(f"Bessel order must be >= 0, got {order}")
    if x < 0 or x > MAX_ARGUMENT:
        raise DomainError(f"Bessel argument must lie in [0, {MAX_ARGUMENT:g}], got {x}")


def _series(order: float, x: float) -> float:
    half = 0.5 * x
    term = math.exp(order * math.log(half) - math.lgamma(order + 1.0))
    total = term
    q = half * half
    k = 0
    while True:
        k += 1
        term *= -q / (k * (k + order))
        total += term
        if abs(term) < 1e-17 * abs(total) and k > q:
            return total
        if k > 500:
            return total


def _miller(order: float, x: float) -> float:
    """Backward recurrence on J_{mu+j}, normalized with the Neumann-type sum
    (x/2)^mu = sum_k (mu+2k) Gamma(mu+k)/k! J_{mu+2k}(x)."""
    n_target = int(math.floor(order))
    mu = order - n_target
    top = max(n_target, int(x)) + 20 + int(math.sqrt(40.0 * max(n_target, x)))
    top += top % 2

    upper, current = 0.0, 1.0e-300
    target_value = 0.0
    norm = 0.0
    for j in range(top, -1, -1):
        if j == n_target:
            target_value = current
        if j % 2 == 0:
            k = j // 2
            if k == 0:
                weight = math.gamma(mu + 1.0)
            else:
                weight = (mu + 2 * k) * math.exp(math.lgamma(mu + k) - math.lgamma(k + 1.0))
            norm += weight * current
        if j == 0:
            break
        # J_{nu-1} = (2 nu / x) J_nu - J_{nu+1}
        lower = (2.0 * (mu + j) / x) * current - upper
        upper, current = current, lower
        if abs(current) > _RESCALE:
            upper /= _RESCALE
            current /= _RESCALE
            norm /= _RESCALE
            target_value /= _RESCALE
    return target_value * math.exp(mu * math.log(0.5 * x)) / norm


def bessel_j(order: float, x: float) -> float:
    """Bessel function of the first kind J_order(x) for real order >= 0."""
    order = float(order)
    x = float(x)
    _check_domain(order, x)
    if x == 0.0:
        return 1.0 if order == 0.0 else 0.0
    if x <= SERIES_CUTOFF:
        return _series(order, x)
    return _miller(order, x)


def bessel_j_prime(order: float, x: float) -> float:
    """Derivative of J_order at x, from J' = (order/x) J_order - J_{order+1}."""
    order = float(order)
    x = float(x)
    _check_domain(order, x)
    if x == 0.0:
        if order == 0.0 or order > 1.0:
            return 0.0
        if order == 1.0:
            return 0.5
        raise DomainError(f"J'_{order} is unbounded at x = 0")
    if order == 0.0:
        return -bessel_j(1.0, x)
    return (order / x) * bessel_j(order, x) - bessel_j(order + 1.0, x)


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Bracketed root of ``f`` on [lo, hi] by a secant/bisection hybrid.

    A secant step is taken when it lands strictly inside the bracket and the
    previous step at least halved the bracket; otherwise the step bisects.
    """
    if not lo < hi:
        raise BracketError(f"Empty bracket [{lo}, {hi}]")
    if tol <= 0:
        raise BracketError(f"Tolerance must be positive, got {tol}")

    def evaluate(x: float) -> float:
        value = float(f(x))
        if not math.isfinite(value):
            raise EvaluationError(f"Non-finite function value {value} at x = {x}")
        return value

    a, b = float(lo), float(hi)
    fa, fb = evaluate(a), evaluate(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise BracketError(f"No sign change on [{lo}, {hi}]: f(lo)={fa:.3e}, f(hi)={fb:.3e}")

    last_width = b - a
    for _ in range(400):
        width = b - a
        if width <= tol:
            break
        candidate = b - fb * (b - a) / (fb - fa)
        if not (a < candidate < b) or width > 0.5 * last_width:
            candidate = 0.5 * (a + b)
        if candidate <= a or candidate >= b:
            break
        last_width = width
        fc = evaluate(candidate)
        if fc == 0.0:
            return candidate
        if fa * fc < 0:
            b, fb = candidate, fc
        else:
            a, fa = candidate, fc
    return a if abs(fa) <= abs(fb) else b


def _scan_sign_changes(g: Callable[[float], float], start: float, step: float, count: int,
                       limit: float) -> tuple[float, float]:
    x_prev, g_prev = start, g(start)
    found = 0
    x = start
    while x < limit:
        x = x_prev + step
        g_x = g(x)
        if g_prev * g_x < 0:
            found += 1
            if found == count:
                return x_prev, x
        x_prev, g_prev = x, g_x
    raise BracketError(f"Sign change #{count} not found below {limit}")


def bessel_j_zero_prime(order: float, k: int = 1) -> float:
    """k-th positive zero of J'_order."""
    if k < 1:
        raise DomainError(f"Zero index must be >= 1, got {k}")
    lo, hi = _scan_sign_changes(lambda z: bessel_j_prime(order, z), 0.05, 0.05, k, MAX_ARGUMENT)
    return find_root(lambda z: bessel_j_prime(order, z), lo, hi, 1e-14)


def neumann_radial_root(n: int) -> float:
    """First positive root of z J'_{n/2}(z) - ((n-2)/2) J_{n/2}(z)."""
    if n < 2:
        raise DomainError(f"Dimension must be >= 2, got {n}")
    nu = 0.5 * n

    def h(z: float) -> float:
        return z * bessel_j_prime(nu, z) - 0.5 * (n - 2) * bessel_j(nu, z)

    lo, hi = _scan_sign_changes(h, 0.05, 0.05, 1, MAX_ARGUMENT)
    return find_root(h, lo, hi, 1e-14)


def dirichlet_radial_root(n: int) -> float:
    """First positive zero of J_{n/2-1}."""
    if n < 2:
        raise DomainError(f"Dimension must be >= 2, got {n}")
    nu = 0.5 * n - 1.0
    lo, hi = _scan_sign_changes(lambda z: bessel_j(nu, z), 0.05, 0.05, 1, MAX_ARGUMENT)
    return find_root(lambda z: bessel_j(nu, z), lo, hi, 1e-14)
