"""Equilibrium density fluctuation fields and Ornstein-Uhlenbeck
diagnostics.

All estimators assume the equal-rates equilibrium setting: product
Bernoulli(rho) with rho = lambda_+/lambda_sigma is reversible, so paths
started from it are stationary.  Test functions are drawn from the
computed spectrum, which builds the regime's corner constraints into them.

Stationary theory used here:

* Cov(Y_t(F), Y_0(G)) = chi(rho) <semigroup_t F, G>_{m_N}; for
  eigenfunctions this is chi(rho) exp(-(2/3) lambda_n t) delta_mn.
* E[M_t(F)^2] = (3^N/|V_N|) 2 chi(rho) t [E_N(F)
                + sum_a (5^N/(3^N b_a^N)) lam_sig(a) F(a)^2],
  where M_t(F) = Y_t(F) - Y_0(F) - int_0^t 5^N L_N Y_s(F) ds is the Dynkin
  martingale; the estimator integrates the exact generator drift along the
  simulated path, so the comparison carries no time-discretization bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import check_field, energy
from .errors import DomainError, InsufficientDataError
from .gasket import GasketGraph
from .sim import (
    BoundarySpec,
    Configuration,
    MeasurementSeries,
    Observable,
    drift_observable,
    fluctuation_observable,
    run_replicas,
    sample_path,
    RngState,
    RngStream,
    initial_configuration,
)
from .spectral import Spectrum, semigroup_apply


def chi(rho: float) -> float:
    """Exclusion conductivity chi(rho) = rho (1 - rho)."""
    return rho * (1.0 - rho)


def field_apply(c: Configuration, F: np.ndarray, rho: float) -> float:
    """Y(F) = |V_N|^(-1/2) sum_x (eta(x) - rho) F(x)."""
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0, 1)")
    F = np.asarray(F, dtype=np.float64)
    if F.shape != c.occupation.shape:
        raise DomainError("field length does not match configuration")
    return float((c.occupation - rho) @ F) / math.sqrt(F.size)


def ou_covariance_theory(
    s: Spectrum, F: np.ndarray, G: np.ndarray, t: float, rho: float
) -> float:
    """chi(rho) <semigroup_t F, G>_{m_N} (stationary OU covariance)."""
    if t < 0:
        raise DomainError("lag must be >= 0")
    G = np.asarray(G, dtype=np.float64)
    return chi(rho) * float(semigroup_apply(s, np.asarray(F, float), t) @ G) / s.n_vertices


@dataclass(frozen=True)
class CovarianceEstimate:
    lag: float
    estimate: float
    stderr: float
    n_products: int


def ou_covariance_empirical(
    yF: np.ndarray,
    yG: np.ndarray,
    dt: float,
    lag: float,
    batches: int = 50,
) -> CovarianceEstimate:
    """Ergodic-average estimator of Cov(Y_{s+lag}(F), Y_s(G)) over a single
    stationary path sampled every dt, with batch-means error bars."""
    yF = np.asarray(yF, dtype=np.float64)
    yG = np.asarray(yG, dtype=np.float64)
    if yF.shape != yG.shape or yF.ndim != 1:
        raise DomainError("series must be equal-length 1-D arrays")
    ell = int(round(lag / dt))
    if abs(ell * dt - lag) > 1e-9 * max(dt, 1.0):
        raise DomainError("lag must be a multiple of the sampling step")
    m = yF.size - ell
    if m < 10:
        raise InsufficientDataError("series shorter than 10 lags")
    products = yF[ell:] * yG[: yF.size - ell]
    nb = min(batches, m)
    splits = np.array_split(products, nb)
    means = np.array([s.mean() for s in splits])
    return CovarianceEstimate(
        lag=lag,
        estimate=float(products.mean()),
        stderr=float(means.std(ddof=1) / math.sqrt(nb)),
        n_products=m,
    )


def covariance_curve(
    yF: np.ndarray, yG: np.ndarray, dt: float, lags: np.ndarray, batches: int = 50
):
    """ou_covariance_empirical over a grid of lags."""
    out = [ou_covariance_empirical(yF, yG, dt, lag, batches) for lag in lags]
    return out


def fit_decay_rate(lags, estimates, floor_ratio: float = 0.1) -> float:
    """Exponential decay rate from a covariance curve: least-squares slope
    of log C(lag) over the lags where C stays above floor_ratio * C(0)."""
    lags = np.asarray(lags, dtype=np.float64)
    est = np.asarray(estimates, dtype=np.float64)
    if est[0] <= 0:
        raise InsufficientDataError("lag-0 covariance estimate is not positive")
    mask = est > floor_ratio * est[0]
    if mask.sum() < 3:
        raise InsufficientDataError("fewer than 3 usable lags above the floor")
    slope = np.polyfit(lags[mask], np.log(est[mask]), 1)[0]
    return float(-slope)


def equilibrium_path(
    g: GasketGraph,
    bs: BoundarySpec,
    rho: float,
    t_end: float,
    dt: float,
    seed: int,
    test_functions: dict[str, np.ndarray],
    stream_id: int = 0,
) -> MeasurementSeries:
    """One long stationary path recording Y(F) for each named test function
    (plus the exact drift integrals needed for martingale diagnostics)."""
    obs = []
    for name, F in test_functions.items():
        obs.append(fluctuation_observable(g, F, rho, name=f"Y:{name}"))
        obs.append(drift_observable(g, bs, F, name=f"drift:{name}"))
    grid = np.arange(0.0, t_end + dt * 0.5, dt)
    rng = RngState(RngStream(seed, stream_id))
    c0 = initial_configuration(g, np.full(g.n_vertices, rho), rng)
    return sample_path(c0, g, bs, rng, t_end, obs, grid)


def martingale_series(series: MeasurementSeries, name: str, n_vertices: int):
    """M_t(F) = Y_t - Y_0 - sqrt(|V_N|) int_0^t (drift of pi(F)) ds along one
    path, evaluated at the sample grid."""
    y = series.values[f"Y:{name}"]
    drift_int = series.integrals[f"drift:{name}"]
    return y - y[0] - math.sqrt(n_vertices) * drift_int


def martingale_qv_theory(
    g: GasketGraph, bs: BoundarySpec, F: np.ndarray, t: float, rho: float
) -> float:
    """(3^N/|V_N|) 2 chi(rho) t [E_N(F) + sum_a (5^N/(3^N b_a^N)) lam_sig F(a)^2]."""
    F = check_field(g, F)
    level = g.level
    kappa = bs.boundary_scale(level) / 3.0**level
    boundary = sum(
        kappa[i] * bs.lambda_sigma[i] * F[a] ** 2 for i, a in enumerate(g.corners)
    )
    return (
        3.0**level
        / g.n_vertices
        * 2.0
        * chi(rho)
        * t
        * (energy(g, F) + boundary)
    )


@dataclass(frozen=True)
class QVDiagnostic:
    t: float
    estimate: float
    stderr: float
    theory: float
    n_replicas: int

    @property
    def sigmas(self) -> float:
        return abs(self.estimate - self.theory) / self.stderr


def martingale_qv_diagnostic(
    g: GasketGraph,
    bs: BoundarySpec,
    F: np.ndarray,
    t_end: float,
    rho: float,
    master_seed: int,
    n_replicas: int = 200,
    jobs: int = 1,
) -> QVDiagnostic:
    """Estimate E[M_t(F)^2] over replicas started from nu_rho and compare
    with the closed form."""
    if n_replicas < 10:
        raise InsufficientDataError("need at least 10 replicas")
    obs = [
        fluctuation_observable(g, F, rho, name="Y:F"),
        drift_observable(g, bs, F, name="drift:F"),
    ]
    grid = np.array([0.0, t_end])
    series = run_replicas(
        g,
        bs,
        np.full(g.n_vertices, rho),
        master_seed,
        n_replicas,
        t_end,
        obs,
        grid,
        jobs=jobs,
    )
    raw = []
    for s in series:
        m = martingale_series(s, "F", g.n_vertices)
        raw.append(m[-1] ** 2)
    raw = np.array(raw)
    return QVDiagnostic(
        t=t_end,
        estimate=float(raw.mean()),
        stderr=float(raw.std(ddof=1) / math.sqrt(n_replicas)),
        theory=martingale_qv_theory(g, bs, F, t_end, rho),
        n_replicas=n_replicas,
    )
