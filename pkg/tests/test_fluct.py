import math

import numpy as np
import pytest

from gasket_hydro import fluct, gasket, sim, spectral
from gasket_hydro.errors import DomainError, InsufficientDataError

BS = sim.BoundarySpec.uniform(1.0, 1.0, "5/3")
RHO = 0.5


@pytest.fixture(scope="module")
def spec3(g3):
    return spectral.eigendecompose(g3, BS.boundary_condition())


def test_field_apply_linearity(g2):
    rng = np.random.default_rng(0)
    c = sim.Configuration((rng.random(g2.n_vertices) < 0.4).astype(np.uint8))
    F = rng.standard_normal(g2.n_vertices)
    G = rng.standard_normal(g2.n_vertices)
    lhs = fluct.field_apply(c, F + G, RHO)
    rhs = fluct.field_apply(c, F, RHO) + fluct.field_apply(c, G, RHO)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_field_apply_full_configuration(g2):
    c = sim.Configuration(np.ones(g2.n_vertices, dtype=np.uint8))
    val = fluct.field_apply(c, np.ones(g2.n_vertices), 0.3)
    assert val == pytest.approx(0.7 * math.sqrt(g2.n_vertices))


def test_field_apply_rho_domain(g2):
    c = sim.Configuration(np.zeros(g2.n_vertices, dtype=np.uint8))
    with pytest.raises(DomainError):
        fluct.field_apply(c, np.zeros(g2.n_vertices), 1.0)


def test_mean_zero_under_equilibrium(g2):
    rng = np.random.default_rng(1)
    F = rng.standard_normal(g2.n_vertices)
    vals = []
    for _ in range(4000):
        c = sim.Configuration((rng.random(g2.n_vertices) < RHO).astype(np.uint8))
        vals.append(fluct.field_apply(c, F, RHO))
    vals = np.array(vals)
    assert abs(vals.mean()) <= 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_exact_variance_under_product_measure(g2):
    # Var Y(F) = chi(rho) <F, F>_{m_N} exactly under nu_rho
    rng = np.random.default_rng(2)
    F = rng.standard_normal(g2.n_vertices)
    theory = fluct.chi(RHO) * float(F @ F) / g2.n_vertices
    vals = []
    for _ in range(6000):
        c = sim.Configuration((rng.random(g2.n_vertices) < RHO).astype(np.uint8))
        vals.append(fluct.field_apply(c, F, RHO))
    vals = np.array(vals)
    est = vals.var(ddof=1)
    se = est * math.sqrt(2.0 / vals.size)
    assert abs(est - theory) <= 4 * se


def test_ou_theory_orthonormal_modes(spec3):
    phi1 = spec3.eigenvectors[:, 0]
    phi2 = spec3.eigenvectors[:, 1]
    assert fluct.ou_covariance_theory(spec3, phi1, phi1, 0.0, RHO) == pytest.approx(
        fluct.chi(RHO), rel=1e-10
    )
    for t in (0.0, 0.2, 1.0):
        assert abs(fluct.ou_covariance_theory(spec3, phi1, phi2, t, RHO)) < 1e-12


def test_ou_theory_eigen_decay(spec3):
    phi = spec3.eigenvectors[:, 2]
    lam = spec3.eigenvalues[2]
    for t in (0.1, 0.5):
        expect = fluct.chi(RHO) * math.exp(-(2 / 3) * lam * t)
        assert fluct.ou_covariance_theory(spec3, phi, phi, t, RHO) == pytest.approx(
            expect, rel=1e-10
        )


def test_ou_theory_neumann_zero_mode(g3):
    bs = sim.BoundarySpec.uniform(1.0, 1.0, 2)
    s = spectral.eigendecompose(g3, bs.boundary_condition())
    phi1 = s.eigenvectors[:, 0]
    for t in (0.0, 1.0, 10.0):
        assert fluct.ou_covariance_theory(s, phi1, phi1, t, RHO) == pytest.approx(
            fluct.chi(RHO), rel=1e-10
        )


def test_ou_theory_semigroup_consistency(spec3):
    rng = np.random.default_rng(3)
    F = rng.standard_normal(spec3.n_vertices)
    G = rng.standard_normal(spec3.n_vertices)
    lhs = fluct.ou_covariance_theory(spec3, F, G, 0.7, RHO)
    TsF = spectral.semigroup_apply(spec3, F, 0.3)
    rhs = fluct.ou_covariance_theory(spec3, TsF, G, 0.4, RHO)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_ou_theory_gram_psd(spec3):
    k = 5
    t = 0.3
    M = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            M[i, j] = fluct.ou_covariance_theory(
                spec3, spec3.eigenvectors[:, i], spec3.eigenvectors[:, j], t, RHO
            )
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    assert eig.min() >= -1e-10


def test_covariance_estimator_insufficient_data():
    with pytest.raises(InsufficientDataError):
        fluct.ou_covariance_empirical(np.ones(5), np.ones(5), 0.1, 0.0)


def test_covariance_estimator_on_synthetic_ou():
    # exact discrete-time AR(1) with known autocovariance
    rng = np.random.default_rng(4)
    rate, dt, n = 2.0, 0.05, 200_000
    a = math.exp(-rate * dt)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n) * math.sqrt(1 - a * a)
    for i in range(1, n):
        x[i] = a * x[i - 1] + noise[i]
    est = fluct.ou_covariance_empirical(x, x, dt, 10 * dt)
    expect = math.exp(-rate * 10 * dt)
    assert abs(est.estimate - expect) <= 4 * est.stderr
    lags = np.arange(10) * dt
    curve = [fluct.ou_covariance_empirical(x, x, dt, l).estimate for l in lags]
    fitted = fluct.fit_decay_rate(lags, curve)
    assert fitted == pytest.approx(rate, rel=0.1)


def test_equilibrium_lag0_variance(g3, spec3):
    tf = {f"phi{k}": spec3.eigenvectors[:, k - 1] for k in (1, 2, 3)}
    series = fluct.equilibrium_path(g3, BS, RHO, 150.0, 0.01, 11, tf)
    for k in (1, 2, 3):
        y = series.values[f"Y:phi{k}"]
        est = fluct.ou_covariance_empirical(y, y, 0.01, 0.0)
        assert abs(est.estimate - fluct.chi(RHO)) <= 3 * est.stderr


def test_orthogonal_modes_uncorrelated(g3, spec3):
    tf = {"phi1": spec3.eigenvectors[:, 0], "phi2": spec3.eigenvectors[:, 1]}
    series = fluct.equilibrium_path(g3, BS, RHO, 120.0, 0.01, 13, tf)
    y1 = series.values["Y:phi1"]
    y2 = series.values["Y:phi2"]
    est = fluct.ou_covariance_empirical(y1, y2, 0.01, 0.0)
    assert abs(est.estimate) <= 3 * est.stderr + 1e-3


def test_martingale_is_centered(g2):
    # Dynkin compensation: E[M_t] = 0 and M uses the exact drift integral
    s = spectral.eigendecompose(g2, BS.boundary_condition())
    F = s.eigenvectors[:, 1]
    obs = [
        sim.fluctuation_observable(g2, F, RHO, name="Y:F"),
        sim.drift_observable(g2, BS, F, name="drift:F"),
    ]
    series = sim.run_replicas(
        g2, BS, np.full(g2.n_vertices, RHO), 55, 400, 0.4, obs, np.array([0.0, 0.4])
    )
    finals = np.array(
        [fluct.martingale_series(s_, "F", g2.n_vertices)[-1] for s_ in series]
    )
    se = finals.std(ddof=1) / math.sqrt(finals.size)
    assert abs(finals.mean()) <= 3.5 * se


def test_martingale_qv_diagnostic(g3):
    bs = sim.BoundarySpec.uniform(1.0, 1.0, 2)
    s = spectral.eigendecompose(g3, bs.boundary_condition())
    F = s.eigenvectors[:, 1]
    diag = fluct.martingale_qv_diagnostic(g3, bs, F, 0.5, RHO, 123, n_replicas=300)
    assert diag.sigmas <= 3.0
    assert diag.theory > 0


def test_qv_theory_limit_form(g4):
    # (3^N/|V_N|) -> 2/3: the closed form approaches (2/3) 2 chi t E_b(F)
    bs = sim.BoundarySpec.uniform(1.0, 1.0, "5/3")
    s = spectral.eigendecompose(g4, bs.boundary_condition())
    F = s.eigenvectors[:, 0]
    from gasket_hydro.calculus import energy

    t = 0.7
    lam = bs.lambda_sigma[0]
    e_b = energy(g4, F) + lam * sum(F[a] ** 2 for a in g4.corners)
    exact = fluct.martingale_qv_theory(g4, bs, F, t, RHO)
    limit = (2 / 3) * 2 * fluct.chi(RHO) * t * e_b
    assert exact == pytest.approx(limit, rel=2e-2)  # 3^N/|V_N| = 2/3 * (1+3^-N)^-1
