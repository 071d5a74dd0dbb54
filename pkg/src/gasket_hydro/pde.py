"""Limiting heat equations on the gasket: steady states, eigenfunction
expansion solutions, and weak-formulation residuals.

The continuum problem is represented at finite N through the same graph
operators used everywhere else; there is no separate mesh.  Solutions are

    rho(t) = rho_ss + exp(-(2/3) H_N t) (initial - rho_ss),

with rho_ss the discrete-harmonic steady state matching the boundary data.
For Dirichlet corners the semigroup acts on the eliminated subspace, so
rho(t, a) = rho_bar(a) for every t > 0 regardless of the initial corner
values (the weak solution's instantaneous boundary jump).

The weak-formulation residual Theta uses Delta_N F as the surrogate for
(2/3) Delta F (Lemma-style convergence (3/2) Delta_N -> Delta times the
2/3 scaling) and the exact finite-N boundary weight
w_N = (2/3) 3^N/(3^N+1); with these weights Theta vanishes identically in
continuous time along solve() trajectories, so the returned residual is
pure time-quadrature error, O(dt^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import (
    check_field,
    dtn_robin_solve,
    harmonic_extension,
    laplacian,
    normal_derivative,
    RobinCoefficients,
)
from .errors import DomainError, SingularityError
from .gasket import GasketGraph
from .spectral import BoundaryCondition, Spectrum, semigroup_apply


@dataclass(frozen=True)
class HeatProblem:
    """Boundary data, initial profile, and horizon for one heat equation.

    g[i] is the boundary datum rho_bar(a_i) (used at Dirichlet and Robin
    corners); r[i] the Robin coefficient lambda_sigma(a_i) (used at Robin
    corners).  The initial profile is a density: entries in [0, 1].
    """

    level: int
    bc: BoundaryCondition
    g: tuple[float, float, float]
    r: tuple[float, float, float]
    initial: np.ndarray
    horizon: float

    def __post_init__(self):
        arr = np.asarray(self.initial, dtype=np.float64)
        if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
            raise DomainError("initial profile must lie in [0, 1]")
        if any(not (-1e-12 <= v <= 1 + 1e-12) for v in self.g):
            raise DomainError("boundary densities must lie in [0, 1]")
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")
        object.__setattr__(self, "initial", arr)


def problem_from_boundary_spec(
    g: GasketGraph, bs, initial, horizon: float
) -> HeatProblem:
    """Heat problem of the hydrodynamic limit for a BoundarySpec: regime
    classification per corner, g = rho_bar, r = lambda_sigma."""
    initial = check_field(g, np.asarray(initial, dtype=np.float64))
    return HeatProblem(
        level=g.level,
        bc=bs.boundary_condition(),
        g=bs.rho_bar,
        r=bs.lambda_sigma,
        initial=initial,
        horizon=horizon,
    )


def steady_state(g: GasketGraph, p: HeatProblem) -> np.ndarray:
    """Discrete-harmonic steady state for the problem's boundary regime.

    Dirichlet: harmonic extension of the boundary data.  Neumann (all
    corners): the initial profile's mean.  Robin/mixed: harmonic extension
    of the corner values solving the corner system
    (Dirichlet rows pinned, (2+kappa_j) c_j - sum_{i!=j} c_i = gamma_j
    elsewhere, kappa = r at Robin corners and 0 at Neumann corners).
    """
    if p.level != g.level:
        raise DomainError("problem level does not match graph")
    kinds = p.bc.kinds
    if all(k == "neumann" for k in kinds):
        return np.full(g.n_vertices, float(np.mean(p.initial)))
    if all(k == "dirichlet" for k in kinds):
        return harmonic_extension(p.g, graph=g)
    if all(k == "robin" for k in kinds):
        rc = RobinCoefficients(
            kappa=tuple(p.r),
            gamma=tuple(r * gv for r, gv in zip(p.r, p.g)),
        )
        return harmonic_extension(dtn_robin_solve(rc), graph=g)
    # mixed: assemble the 3x3 corner system by regime
    A = np.zeros((3, 3))
    rhs = np.zeros(3)
    for j, kind in enumerate(kinds):
        if kind == "dirichlet":
            A[j, j] = 1.0
            rhs[j] = p.g[j]
        else:
            kappa = p.r[j] if kind == "robin" else 0.0
            A[j, :] = -1.0
            A[j, j] = 2.0 + kappa
            rhs[j] = kappa * p.g[j]
    det = np.linalg.det(A)
    if abs(det) < 1e-12:
        raise SingularityError("mixed corner system is singular")
    return harmonic_extension(np.linalg.solve(A, rhs), graph=g)


def solve(g: GasketGraph, p: HeatProblem, s: Spectrum, t: float) -> np.ndarray:
    """rho(t) = rho_ss + semigroup_t(initial - rho_ss); t in [0, horizon]."""
    if s.bc != p.bc or s.level != p.level:
        raise DomainError("spectrum boundary condition/level does not match problem")
    if t < 0 or t > p.horizon:
        raise DomainError(f"time {t} outside [0, {p.horizon}]")
    rho_ss = steady_state(g, p)
    return rho_ss + semigroup_apply(s, p.initial - rho_ss, t)


def solve_series(
    g: GasketGraph, p: HeatProblem, s: Spectrum, times: np.ndarray
) -> np.ndarray:
    """Vectorized solve() over a time grid; rows are trajectories."""
    if s.bc != p.bc or s.level != p.level:
        raise DomainError("spectrum boundary condition/level does not match problem")
    times = np.asarray(times, dtype=np.float64)
    if np.any(times < 0) or np.any(times > p.horizon):
        raise DomainError("times outside [0, horizon]")
    rho_ss = steady_state(g, p)
    coef = s.coefficients(p.initial - rho_ss)
    decay = np.exp(-(2.0 / 3.0) * np.outer(times, s.eigenvalues))
    return rho_ss[None, :] + (decay * coef[None, :]) @ s.eigenvectors.T


def solve_mixed(g: GasketGraph, p: HeatProblem, s: Spectrum, t: float) -> np.ndarray:
    """Mixed per-corner regimes use the same machinery as solve()."""
    return solve(g, p, s, t)


def mass_mean(f: np.ndarray) -> float:
    """m_N-mean (1/|V_N|) sum f."""
    return float(np.mean(f))


def max_principle_gap(p: HeatProblem, trajectory: np.ndarray) -> float:
    """Largest excursion of the trajectory outside [min, max] of the initial
    profile and boundary data (monitored, not enforced)."""
    lo = min(float(np.min(p.initial)), min(p.g))
    hi = max(float(np.max(p.initial)), max(p.g))
    return float(max(lo - trajectory.min(), trajectory.max() - hi, 0.0))


def energy_trace(g: GasketGraph, trajectory: np.ndarray) -> np.ndarray:
    """E_N(rho_s) along a trajectory (diagnostic surrogate for the
    L^2(0,T;F) membership of weak solutions)."""
    from .calculus import energy

    return np.array([energy(g, row) for row in np.atleast_2d(trajectory)])


@dataclass(frozen=True)
class TimeTestFunction:
    """Separable test function F(t, x) = alpha(t) phi(x)."""

    phi: np.ndarray
    alpha: Callable[[float], float] = field(default=lambda t: 1.0)
    alpha_dot: Callable[[float], float] = field(default=lambda t: 0.0)

    def at(self, t: float) -> np.ndarray:
        return self.alpha(t) * self.phi


def boundary_weight(level: int) -> float:
    """Exact finite-N boundary prefactor w_N = (2/3) 3^N/(3^N+1) -> 2/3."""
    return (2.0 / 3.0) * 3.0**level / (3.0**level + 1.0)


def weak_residual(
    g: GasketGraph,
    p: HeatProblem,
    times: np.ndarray,
    trajectory: np.ndarray,
    test: TimeTestFunction,
    t: float | None = None,
) -> float:
    """Weak-formulation residual Theta(t) by trapezoid quadrature.

    Dirichlet corners require the test function to vanish there (the test
    space constraint); a violating test raises DomainError.  The boundary
    bracket per corner is
        dirichlet:  g(a) d_perp F,
        robin:      rho_s(a) d_perp F + r(a)(rho_s(a) - g(a)) F(a),
        neumann:    rho_s(a) d_perp F  (Robin with r = 0).
    """
    times = np.asarray(times, dtype=np.float64)
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.shape != (times.size, g.n_vertices):
        raise DomainError("trajectory must be (len(times), |V_N|)")
    phi = check_field(g, test.phi)
    for a, kind in zip(g.corners, p.bc.kinds):
        if kind == "dirichlet" and abs(phi[a]) > 1e-12:
            raise DomainError(
                "Dirichlet test functions must vanish at Dirichlet corners"
            )
    if t is None:
        idx = times.size - 1
    else:
        idx = int(np.searchsorted(times, t))
        if idx >= times.size or abs(times[idx] - t) > 1e-10:
            raise DomainError("t must be one of the trajectory sample times")

    n = g.n_vertices
    mask = g.interior_mask
    lap_phi = laplacian(g, phi)
    dperp = {a: normal_derivative(g, phi, a) for a in g.corners}
    w_bdry = boundary_weight(g.level)

    ts = times[: idx + 1]
    alpha = np.array([test.alpha(s) for s in ts])
    alpha_dot = np.array([test.alpha_dot(s) for s in ts])
    rho = trajectory[: idx + 1]

    pair_phi = rho @ phi / n  # <rho_s, phi>
    pair_lap = rho[:, mask] @ lap_phi[mask] / n  # interior <rho_s, Delta_N phi>
    integrand = pair_lap * alpha + pair_phi * alpha_dot

    bracket = np.zeros(ts.size)
    for j, (a, kind) in enumerate(zip(g.corners, p.bc.kinds)):
        rho_a = rho[:, a]
        if kind == "dirichlet":
            bracket += p.g[j] * dperp[a] * alpha
        elif kind == "robin":
            bracket += rho_a * dperp[a] * alpha + p.r[j] * (rho_a - p.g[j]) * (
                phi[a] * alpha
            )
        else:
            bracket += rho_a * dperp[a] * alpha

    theta = (
        float(rho[idx] @ phi / n) * alpha[idx]
        - float(np.asarray(p.initial) @ phi / n) * alpha[0]
        - np.trapezoid(integrand, ts)
        + w_bdry * np.trapezoid(bracket, ts)
    )
    return theta
