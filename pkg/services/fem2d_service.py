import logging
import math
import os
import threading
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import nnls
from scipy.sparse.linalg import cg, eigsh, splu

from models.ball import BallConfig, RadialSource
from models.errors import DomainError, MeshError, NumericalError, RegimeError
from models.fem import (
    EigenDerivatives,
    EigenField,
    EnergyDerivatives,
    EnergyField,
    FemMesh,
    FemSystem,
    PerturbedDisk,
    ScanRow,
    SignPattern,
)
from services.ball_energy_service import check_material, distribution_from_trace, solve_radial
from services.eigen_disk_service import eigen_mode_form, lambda_m, m0_threshold, radial_candidate
from services.energy_stability_service import mode_form

logger = logging.getLogger("insulation_lab")

DEFAULT_NR = 48
DEFAULT_NTHETA = 192
DEFAULT_DT = 0.02
CG_RTOL = 1e-10
MAX_SIGN_ITERATIONS = 50
MAX_REFINE_ITERATIONS = 500
REFINE_RTOL = 1e-11
UNIFORM_CV_THRESHOLD = 0.02
# Expected h_m spread for m <= NONUNIFORM_RATIO * m0 on the default disk mesh.
NONUNIFORM_CV_THRESHOLD = 0.20
NONUNIFORM_RATIO = 0.8
THRESHOLD_RTOL = 1e-6

# ARPACK is not re-entrant; sweeps share one lock around eigsh.
_ARPACK_LOCK = threading.Lock()


# --- Mesh and assembly ---
def check_resolution(s: int, n_r: int, n_theta: int) -> None:
    if n_r < 8:
        raise DomainError(f"n_r must be >= 8, got {n_r}")
    if n_theta < 16 or n_theta % (4 * s):
        raise DomainError(f"n_theta must be >= 16 and a multiple of 4 s = {4 * s}, got {n_theta}")


def build_mesh(domain: PerturbedDisk, n_r: int, n_theta: int) -> FemMesh:
    """Polar grid: a center node, then ring i = 1..n_r with n_theta nodes at radius (i / n_r) r(theta)."""
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    rings = np.arange(1, n_r + 1)[:, None] / n_r * domain.radius(theta)[None, :]
    x = np.concatenate(([0.0], (rings * np.cos(theta)).ravel()))
    y = np.concatenate(([0.0], (rings * np.sin(theta)).ravel()))
    nodes = np.column_stack((x, y))

    def index(ring, j):
        return 1 + (ring - 1) * n_theta + np.mod(j, n_theta)

    j = np.arange(n_theta)
    fan = np.column_stack((np.zeros(n_theta, dtype=int), index(1, j), index(1, j + 1)))
    quads = []
    for ring in range(1, n_r):
        a, b = index(ring, j), index(ring + 1, j)
        c, d = index(ring + 1, j + 1), index(ring, j + 1)
        quads.append(np.column_stack((a, b, c)))
        quads.append(np.column_stack((a, c, d)))
    triangles = np.vstack([fan] + quads)
    boundary = index(n_r, j)
    return FemMesh(nodes=nodes, triangles=triangles, boundary=boundary, n_r=n_r, n_theta=n_theta)


def _assemble(nodes: np.ndarray, triangles: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """P1 stiffness and consistent mass matrices."""
    t1, t2, t3 = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    v1, v2, v3 = nodes[t1], nodes[t2], nodes[t3]
    v2mv1 = v2 - v1
    v3mv2 = v3 - v2
    v1mv3 = v1 - v3
    signed = 0.5 * (v2mv1[:, 0] * (-v1mv3[:, 1]) - v2mv1[:, 1] * (-v1mv3[:, 0]))
    if np.any(signed <= 0):
        bad = int(np.flatnonzero(signed <= 0)[0])
        raise MeshError(f"Degenerate or inverted triangle #{bad} (signed area {signed[bad]:.3e})")
    vol = 4.0 * signed
    # off-diagonal entries grad(phi_i) . grad(phi_j) * area, rows sum to zero
    a12 = np.sum(v3mv2 * v1mv3, axis=1) / vol
    a23 = np.sum(v1mv3 * v2mv1, axis=1) / vol
    a31 = np.sum(v2mv1 * v3mv2, axis=1) / vol
    a11 = -a12 - a31
    a22 = -a12 - a23
    a33 = -a31 - a23
    local_a = np.column_stack((a12, a12, a23, a23, a31, a31, a11, a22, a33)).reshape(-1)
    i = np.column_stack((t1, t2, t2, t3, t3, t1, t1, t2, t3)).reshape(-1)
    j = np.column_stack((t2, t1, t3, t2, t1, t3, t1, t2, t3)).reshape(-1)
    size = nodes.shape[0]
    stiffness = sp.csr_matrix((local_a, (i, j)), shape=(size, size))
    b_ii = signed / 6.0
    b_ij = signed / 12.0
    local_b = np.column_stack((b_ij, b_ij, b_ij, b_ij, b_ij, b_ij, b_ii, b_ii, b_ii)).reshape(-1)
    mass = sp.csr_matrix((local_b, (i, j)), shape=(size, size))
    return stiffness, mass


def _boundary_weights(nodes: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """Half the lengths of the two boundary edges at each boundary node."""
    points = nodes[boundary]
    edges = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    return 0.5 * (edges + np.roll(edges, 1))


def build_system(domain: PerturbedDisk, f: RadialSource, n_r: int = DEFAULT_NR,
                 n_theta: int = DEFAULT_NTHETA) -> FemSystem:
    check_resolution(domain.s, n_r, n_theta)
    f.validate(domain.R, require_nonzero=False)
    mesh = build_mesh(domain, n_r, n_theta)
    stiffness, mass = _assemble(mesh.nodes, mesh.triangles)
    b = np.zeros(mesh.nodes.shape[0])
    b[mesh.boundary] = _boundary_weights(mesh.nodes, mesh.boundary)
    load = mass @ f.profile(np.linalg.norm(mesh.nodes, axis=1))

    kernel = np.abs(stiffness @ np.ones(mesh.nodes.shape[0])).max()
    if kernel > 1e-10 * abs(stiffness.diagonal()).max():
        raise MeshError(f"Stiffness does not annihilate constants (residual {kernel:.3e})")
    system = FemSystem(domain=domain, mesh=mesh, stiffness=stiffness, mass=mass, boundary_vector=b, load=load)
    logger.debug(
        f"Assembled {mesh.nodes.shape[0]} nodes / {mesh.triangles.shape[0]} triangles "
        f"(t={domain.t:.4g}, area={system.area:.12g}, perimeter={system.perimeter:.12g})"
    )
    return system


# --- Energy problem ---
def _jacobi(matrix: sp.csr_matrix) -> sp.dia_matrix:
    return sp.diags(1.0 / matrix.diagonal())


def solve_energy(system: FemSystem, m: float) -> EnergyField:
    """Discrete minimizer of 1/2 u'Au + (1/2m)(b'u)^2 - F'u with positive boundary trace.

    With beta = b'u, the optimality system reads A u = F - (beta/m) b and summing rows
    gives beta = m 1'F / P. The constant part of u is then fixed by b'u = beta.
    """
    m = check_material(m)
    A, b, F = system.stiffness, system.boundary_vector, system.load
    perimeter = float(b.sum())
    beta = m * float(F.sum()) / perimeter
    rhs = F - (beta / m) * b
    rhs -= rhs.mean()

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    w, info = cg(A, rhs, rtol=CG_RTOL, maxiter=20 * A.shape[0], M=_jacobi(A), callback=count)
    if info != 0:
        raise NumericalError(f"CG did not converge (info={info}) after {iterations} iterations")
    w -= w.mean()
    u = w + (beta - float(b @ w)) / perimeter

    residual = np.linalg.norm(A @ u + (float(b @ u) / m) * b - F)
    if residual > 1e-8 * np.linalg.norm(F):
        raise NumericalError(f"Energy system residual {residual:.3e} too large")
    trace = u[system.mesh.boundary]
    if np.min(trace) <= 0:
        raise RegimeError(f"Boundary temperature is not positive (min {np.min(trace):.3e})")
    energy = -0.5 * float(F @ u)
    logger.debug(f"Energy solve m={m:.6g}: E={energy:.12g} in {iterations} CG iterations")
    return EnergyField(u=u, energy=energy, trace=trace, iterations=iterations)


def _check_stencil(dt: float, order: int, a: float) -> tuple[float, ...]:
    if not (math.isfinite(a) and a != 0):
        raise DomainError(f"Perturbation amplitude must be finite and nonzero, got {a}")
    if not 1e-3 <= dt <= 5e-2:
        raise DomainError(f"dt must lie in [1e-3, 5e-2], got {dt}")
    if order not in (2, 4):
        raise DomainError(f"order must be 2 or 4, got {order}")
    return (-dt, 0.0, dt) if order == 2 else (-dt, -0.5 * dt, 0.0, 0.5 * dt, dt)


def _differences(values: dict[float, float], dt: float, order: int) -> tuple[float, float]:
    """Central first and second differences at t = 0; order=4 Richardson-combines dt and dt/2."""

    def stencil(h: float) -> tuple[float, float]:
        plus, zero, minus = values[h], values[0.0], values[-h]
        return (plus - minus) / (2.0 * h), (plus - 2.0 * zero + minus) / h ** 2

    d1, d2 = stencil(dt)
    if order == 4:
        d1_half, d2_half = stencil(0.5 * dt)
        d1 = (4.0 * d1_half - d1) / 3.0
        d2 = (4.0 * d2_half - d2) / 3.0
    return d1, d2


def energy_derivatives(R: float, f: RadialSource, m: float, s: int, a: float = 1.0,
                       dt: float = DEFAULT_DT, order: int = 2, n_r: int = DEFAULT_NR,
                       n_theta: int = DEFAULT_NTHETA, mapper: Callable = map) -> EnergyDerivatives:
    """Finite differences in t of E_m over the area-preserving family, against the analytic Q_s.

    order=2 is the three-point stencil; order=4 Richardson-combines step dt and dt/2.
    """
    steps = _check_stencil(dt, order, a)
    base = PerturbedDisk(R=R, s=s, a=a, t=0.0)
    check_resolution(s, n_r, n_theta)

    def energy_at(t: float) -> float:
        return solve_energy(build_system(base.at(t), f, n_r, n_theta), m).energy

    energies = dict(zip(steps, mapper(energy_at, steps)))
    d1, d2 = _differences(energies, dt, order)

    # normal speed R a cos(s theta) has int_{dB} zeta^2 = pi R^3 a^2
    zeta_norm = math.pi * R ** 3 * a ** 2
    analytic = mode_form(solve_radial(BallConfig(2, R), f, m), s).q_value
    logger.info(f"FD second derivative s={s}: {d2 / zeta_norm:.6g} vs analytic {analytic:.6g}")
    return EnergyDerivatives(
        d1=d1,
        d2=d2,
        scaled_d2=d2 / zeta_norm,
        analytic=analytic,
        energies=tuple(energies[h] for h in steps),
    )


# --- Eigenvalue problem ---
def true_quotient(system: FemSystem, u: np.ndarray, m: float) -> float:
    """Discrete (u'Au + (1/m)(b'|u|)^2) / u'Mu."""
    boundary_integral = float(system.boundary_vector @ np.abs(u))
    numerator = float(u @ (system.stiffness @ u)) + boundary_integral ** 2 / m
    return numerator / float(u @ (system.mass @ u))


def _start_vector(system: FemSystem) -> np.ndarray:
    """Deterministic Lanczos start that is not rotation invariant."""
    x, y = (system.mesh.nodes / system.domain.R).T
    return 1.0 + 0.5 * x + 0.3 * y + 0.2 * x * y


def _neumann_pair(system: FemSystem) -> tuple[float, np.ndarray]:
    """Smallest nonzero Neumann eigenvalue and an eigenvector aligned with the x coordinate."""
    with _ARPACK_LOCK:
        values, vectors = eigsh(system.stiffness, k=3, M=system.mass, sigma=-0.01,
                            v0=_start_vector(system), which="LM")
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    x = system.mesh.nodes[:, 0]
    # the pair is degenerate on the disk; pick the combination closest to x
    pair = vectors[:, 1:3]
    weights = pair.T @ (system.mass @ x)
    if np.linalg.norm(weights) == 0:
        vector = pair[:, 0]
    else:
        vector = pair @ (weights / np.linalg.norm(weights))
    return float(values[1]), vector


def neumann_mu2_fem(system: FemSystem) -> float:
    return _neumann_pair(system)[0]


def _pencil_ground_state(system: FemSystem, m: float, pattern: SignPattern) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of (A + (1/m) b_w b_w', M) by shift-invert Lanczos."""
    boundary = system.mesh.boundary
    size = system.mesh.nodes.shape[0]
    b_w = system.boundary_vector[boundary] * pattern.weights
    rows = np.repeat(boundary, boundary.size)
    cols = np.tile(boundary, boundary.size)
    rank_one = sp.csr_matrix((np.outer(b_w, b_w).ravel() / m, (rows, cols)), shape=(size, size))
    operator = (system.stiffness + rank_one).tocsc()
    sigma = -1.0 / system.domain.R ** 2
    with _ARPACK_LOCK:
        values, vectors = eigsh(operator, k=1, M=system.mass, sigma=sigma, v0=_start_vector(system),
                            which="LM")
    vector = vectors[:, 0]
    vector /= math.sqrt(float(vector @ (system.mass @ vector)))
    if float(system.boundary_vector @ vector) < 0:
        vector = -vector
    return float(values[0]), vector


def _sign_iteration(system: FemSystem, m: float, start: SignPattern, max_iter: int):
    """Fixed-point loop on the boundary sign pattern; returns the lowest-quotient iterate."""
    boundary = system.mesh.boundary
    pattern = start
    seen = {pattern.key()}
    best = None
    first_pencil = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        pencil, vector = _pencil_ground_state(system, m, pattern)
        if first_pencil is None:
            first_pencil = (pencil, vector)
        quotient = true_quotient(system, vector, m)
        if best is None or quotient < best[0]:
            best = (quotient, pencil, vector, pattern)
        updated = SignPattern.from_trace(vector[boundary], pattern)
        logger.debug(f"Sign iteration {iterations}: pencil {pencil:.10g}, quotient {quotient:.10g}")
        if updated.key() == pattern.key():
            converged = True
            break
        if updated.key() in seen:
            logger.debug(f"Sign pattern cycle detected after {iterations} iterations")
            break
        seen.add(updated.key())
        pattern = updated
    return best, first_pencil, converged, iterations


class _ConeRefiner:
    """Projected inverse iteration for the true quotient over nonnegative fields.

    Each step minimizes 1/2 u'Ku - g'u (K = A + (1/m) b b', g = M u_old) subject to
    u >= 0 on the boundary. The interior is eliminated by a Schur complement and
    the boundary problem is solved as a nonnegative least-squares problem.
    """

    def __init__(self, system: FemSystem, m: float):
        self.system = system
        self.m = m
        A = system.stiffness.tocsc()
        self.boundary = system.mesh.boundary
        self.interior = system.interior
        A_II = A[self.interior][:, self.interior].tocsc()
        A_IB = A[self.interior][:, self.boundary].toarray()
        A_BB = A[self.boundary][:, self.boundary].toarray()
        self.lu = splu(A_II)
        self.X = self.lu.solve(A_IB)
        b_B = system.boundary_vector[self.boundary]
        schur = A_BB - A_IB.T @ self.X + np.outer(b_B, b_B) / m
        schur = 0.5 * (schur + schur.T)
        ridge = 0.0
        while True:
            try:
                self.L = la.cholesky(schur + ridge * np.eye(schur.shape[0]), lower=True)
                break
            except la.LinAlgError:
                ridge = max(1e-14 * np.abs(schur).max(), 10.0 * ridge)
                logger.debug(f"Boundary Schur complement not positive definite, ridge {ridge:.3e}")

    def step(self, u: np.ndarray) -> np.ndarray:
        g = self.system.mass @ u
        g_I = g[self.interior]
        reduced = g[self.boundary] - self.X.T @ g_I
        target = la.solve_triangular(self.L, reduced, lower=True)
        x, _ = nnls(self.L.T, target)
        result = np.empty_like(u)
        result[self.boundary] = x
        result[self.interior] = self.lu.solve(g_I) - self.X @ x
        norm = math.sqrt(float(result @ (self.system.mass @ result)))
        if norm == 0:
            raise NumericalError("Projected inverse iteration collapsed to zero")
        return result / norm

    def run(self, start: np.ndarray) -> tuple[float, np.ndarray, bool, int]:
        u = np.abs(start)
        u /= math.sqrt(float(u @ (self.system.mass @ u)))
        quotient = true_quotient(self.system, u, self.m)
        for iteration in range(1, MAX_REFINE_ITERATIONS + 1):
            candidate = self.step(u)
            value = true_quotient(self.system, candidate, self.m)
            decrease = quotient - value
            if value <= quotient:
                u, quotient = candidate, value
            if decrease <= REFINE_RTOL * abs(quotient):
                return quotient, u, True, iteration
        return quotient, u, False, MAX_REFINE_ITERATIONS


def solve_eigen(system: FemSystem, m: float, init: Optional[SignPattern] = None,
                max_iter: int = MAX_SIGN_ITERATIONS) -> EigenField:
    """Minimize the discrete insulated Rayleigh quotient with |u| in the boundary term.

    Stage one runs the sign iteration on the linear pencil from the given pattern, or
    from both the constant pattern and the second Neumann eigenvector by default.
    Stage two refines the lowest iterate with projected inverse iteration in the
    nonnegative cone, which also covers the nonsmooth regime m < m0.

    ``pencil_lambda`` and ``sign_changing`` describe the first pencil solve of the first
    start pattern; below m0 that is the second Neumann eigenpair.
    """
    m = check_material(m)
    boundary = system.mesh.boundary
    starts = [init] if init is not None else [
        SignPattern.constant(boundary.size),
        SignPattern.from_trace(_neumann_pair(system)[1][boundary]),
    ]

    best = None
    first_pencil = None
    converged_any = False
    total_iterations = 0
    for start in starts:
        candidate, pencil_pair, converged, iterations = _sign_iteration(system, m, start, max_iter)
        total_iterations += iterations
        converged_any = converged_any or converged
        if first_pencil is None:
            first_pencil = pencil_pair
        if best is None or candidate[0] < best[0]:
            best = candidate
    if not converged_any:
        logger.warning(f"Sign iteration did not stabilize at m = {m:.6g}; keeping the best iterate")

    pencil_lambda, pencil_vector = first_pencil
    refiner = _ConeRefiner(system, m)
    x = system.mesh.nodes[:, 0] / system.domain.R
    refined = [refiner.run(best[2]), refiner.run(1.0 + 0.5 * x)]
    quotient, u, refine_converged, refine_iterations = min(refined, key=lambda item: item[0])
    total_iterations += sum(item[3] for item in refined)

    if quotient > best[0]:
        quotient, u = best[0], best[2]
    trace = u[boundary]
    pattern = SignPattern.from_trace(trace, best[3])
    logger.info(
        f"Eigen solve m={m:.6g}: lambda={quotient:.10g}, pencil={pencil_lambda:.10g}, "
        f"pattern {'stable' if converged_any else 'cycling'}"
    )
    return EigenField(
        lambda_=quotient,
        pencil_lambda=pencil_lambda,
        u=u,
        trace=trace,
        pattern=pattern,
        converged=converged_any,
        iterations=total_iterations,
        sign_changing=SignPattern.from_trace(pencil_vector[boundary]).sign_changing,
        refined=refine_converged,
    )


def eigen_derivatives(R: float, m: float, s: int, a: float = 1.0, dt: float = DEFAULT_DT, order: int = 2,
                      n_r: int = DEFAULT_NR, n_theta: int = DEFAULT_NTHETA,
                      mapper: Callable = map) -> EigenDerivatives:
    """Finite differences in t of lambda_m over the area-preserving family, for m above m0.

    With zeta = c cos(s theta) the analytic form is the coefficient of c^2 in half the
    second variation, and the family has c = R a, so it is compared with d2 / (2 (R a)^2).
    """
    steps = _check_stencil(dt, order, a)
    check_resolution(s, n_r, n_theta)
    config = BallConfig(2, R)
    analytic = eigen_mode_form(config, m, s).q_value
    base = PerturbedDisk(R=R, s=s, a=a, t=0.0)
    source = RadialSource.constant(1.0)

    def lambda_at(t: float) -> float:
        system = build_system(base.at(t), source, n_r, n_theta)
        return solve_eigen(system, m, init=SignPattern.constant(system.mesh.boundary.size)).lambda_

    lambdas = dict(zip(steps, mapper(lambda_at, steps)))
    d1, d2 = _differences(lambdas, dt, order)
    scaled = 0.5 * d2 / (R * a) ** 2
    logger.info(f"FD eigenvalue second derivative s={s}: {scaled:.6g} vs analytic {analytic:.6g}")
    return EigenDerivatives(
        d1=d1,
        d2=d2,
        scaled_d2=scaled,
        analytic=analytic,
        lambdas=tuple(lambdas[h] for h in steps),
    )


def coefficient_of_variation(system: FemSystem, trace: np.ndarray, m: float) -> float:
    """Boundary-weighted coefficient of variation of the insulation density m|u| / int |u|."""
    weights = system.boundary_vector[system.mesh.boundary]
    density = distribution_from_trace(trace, weights, m)
    mean = float(weights @ density) / float(weights.sum())
    spread = math.sqrt(float(weights @ (density - mean) ** 2) / float(weights.sum()))
    return spread / mean


def symmetry_breaking_scan(R: float, m_grid: Iterable[float], n_r: int = DEFAULT_NR,
                           n_theta: int = DEFAULT_NTHETA, mapper: Callable = map) -> list[ScanRow]:
    """Eigen solves on the disk along an m grid, with h_m nonuniformity and the predicted regime."""
    config = BallConfig(2, R)
    m0 = m0_threshold(config)
    system = build_system(PerturbedDisk(R=R), RadialSource.constant(1.0), n_r, n_theta)

    def row(m: float) -> ScanRow:
        m = check_material(m)
        ratio = m / m0
        field = solve_eigen(system, m)
        variation = coefficient_of_variation(system, field.trace, m)
        if abs(ratio - 1.0) <= THRESHOLD_RTOL:
            regime, reference, passed = "indeterminate", None, None
            logger.warning(f"m = {m:.6g} is the threshold m0; row is not asserted")
        elif ratio > 1.0:
            regime, reference = "uniform", lambda_m(config, m).lambda_
            passed = variation <= UNIFORM_CV_THRESHOLD
        else:
            regime, reference = "nonuniform", radial_candidate(config, m)
            passed = variation >= NONUNIFORM_CV_THRESHOLD if ratio <= NONUNIFORM_RATIO else None
        return ScanRow(
            m=m,
            m_over_m0=ratio,
            regime=regime,
            lambda_=field.lambda_,
            pencil_lambda=field.pencil_lambda,
            reference_lambda=reference,
            variation=variation,
            sign_changing=field.sign_changing,
            converged=field.converged,
            passed=passed,
        )

    return list(mapper(row, list(m_grid)))


# --- Plain-text dumps ---
def dump_mesh(system: FemSystem, field: np.ndarray, directory: str) -> list[str]:
    """Write nodes.txt, triangles.txt and field.txt for external plotting."""
    os.makedirs(directory, exist_ok=True)
    nodes = system.mesh.nodes
    index = np.arange(nodes.shape[0])
    paths = [os.path.join(directory, name) for name in ("nodes.txt", "triangles.txt", "field.txt")]
    np.savetxt(paths[0], np.column_stack((index, nodes)), fmt=["%d", "%.12g", "%.12g"],
               header="index x y", comments="# ")
    triangles = system.mesh.triangles
    np.savetxt(paths[1], np.column_stack((np.arange(triangles.shape[0]), triangles)), fmt="%d",
               header="index i j k", comments="# ")
    np.savetxt(paths[2], np.column_stack((index, field)), fmt=["%d", "%.12g"],
               header="index value", comments="# ")
    logger.info(f"Mesh dump written to {directory}")
    return paths
