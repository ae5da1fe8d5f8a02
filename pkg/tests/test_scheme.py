import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from ks.bdf import bdf_coefficients
from ks.errors import ConfigurationError, NumericalError
from ks.grid import build_grid, gradient, integrate
from ks.scheme import (ModelParams, State, advance, compute_dissipation,
                       compute_energy, initialize, step3_recover_density,
                       step4_energy_correction, step5_rescale)


def _constant_state(grid, k, c_val, rho_val, params):
    s = bdf_coefficients(k)
    st = State(grid, s)
    for _ in range(k):
        c = np.full((grid.ny, grid.nx), c_val)
        rho = np.full((grid.ny, grid.nx), rho_val)
        st.push_level(c, c.copy(), np.log(rho), rho,
                      compute_energy(rho, c, 1.0, params, grid))
    st.t_index = k - 1
    return st


def test_model_params_reject_nonpositive():
    with pytest.raises(ConfigurationError):
        ModelParams(eps=0.0)
    with pytest.raises(ConfigurationError):
        ModelParams(alpha=-1.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_constant_equilibrium_is_a_fixed_point(k):
    # alpha*C = beta*R makes the constant pair steady; every correction
    # scalar must come out as exactly one and dissipation as zero.
    params = ModelParams(eps=1.0, alpha=2.0, beta=1.0)
    g = build_grid(-1, 1, -1, 1, 17, 17)
    st = _constant_state(g, k, c_val=1.5, rho_val=3.0, params=params)
    st, diag = advance(st, params, tau=0.05, epc=True)
    assert np.max(np.abs(st.c.newest - 1.5)) <= 1e-10
    assert np.max(np.abs(st.rho.newest - 3.0)) <= 1e-10
    assert diag.lam == pytest.approx(1.0, abs=1e-12)
    assert diag.mu == pytest.approx(1.0, abs=1e-9)
    assert abs(diag.dissipation) <= 1e-12


def test_step3_mass_recovery_identity_and_scaling():
    params = ModelParams()
    g = build_grid(-1, 1, -1, 1, 21, 21)
    st = _constant_state(g, 1, c_val=1.0, rho_val=2.0, params=params)
    # u consistent with the stored density -> no correction needed
    _, lam, rho = step3_recover_density(st, np.log(st.rho.newest))
    assert lam == pytest.approx(1.0, rel=1e-14)
    assert np.allclose(rho, st.rho.newest)
    # doubling the provisional density must halve lambda
    _, lam, rho = step3_recover_density(st, np.log(2.0 * st.rho.newest))
    assert lam == pytest.approx(0.5, rel=1e-14)
    assert np.allclose(rho, st.rho.newest)


def test_step3_preserves_mass_for_arbitrary_u():
    params = ModelParams()
    g = build_grid(-1, 1, -1, 1, 33, 33)
    st = _constant_state(g, 1, c_val=0.5, rho_val=1.7, params=params)
    X, Y = g.meshgrid()
    u = 0.3 * np.cos(np.pi * X) * np.cos(2 * np.pi * Y) - 0.1
    _, lam, rho = step3_recover_density(st, u)
    assert integrate(rho, g) == pytest.approx(integrate(st.rho.newest, g), rel=1e-14)
    assert np.min(rho) > 0.0


def test_energy_closed_form_constants():
    g = build_grid(-0.05, 0.05, -0.05, 0.05, 11, 11)  # |Omega| = 0.01
    params = ModelParams(alpha=1.0)
    one = np.ones((g.ny, g.nx))
    # rho=1, c=0: integrand = -1
    assert compute_energy(one, 0.0 * one, 1.0, params, g) == pytest.approx(-0.01, rel=1e-13)
    # rho=1, c=K: -1 - K + K^2/2 per unit area
    K = 3.0
    expect = 0.01 * (-1.0 - K + K * K / 2.0)
    assert compute_energy(one, K * one, 1.0, params, g) == pytest.approx(expect, rel=1e-13)
    # mu scales only the quadratic part
    mu = 2.5
    expect = 0.01 * (-1.0 - K + mu * K * K / 2.0)
    assert compute_energy(one, K * one, mu, params, g) == pytest.approx(expect, rel=1e-13)


def test_energy_requires_positive_density():
    g = build_grid(0, 1, 0, 1, 5, 5)
    rho = np.ones((5, 5))
    rho[2, 2] = 0.0
    with pytest.raises(NumericalError):
        compute_energy(rho, np.zeros((5, 5)), 1.0, ModelParams(), g)


def test_energy_against_quadrature_oracle():
    # Gaussian data on (-5,5)^2 with alpha=6, checked against adaptive
    # quadrature of the same integrand.
    params = ModelParams(alpha=6.0)

    def integrand(y, x):
        r2 = x * x + y * y
        cv = math.exp(-r2 / 2.0)
        rv = 4.0 * math.exp(-r2)
        cx = -x * cv
        cy = -y * cv
        return (rv * math.log(rv) - rv - rv * cv
                + 0.5 * (6.0 * cv * cv + cx * cx + cy * cy))

    oracle, err = dblquad(integrand, -5, 5, -5, 5, epsabs=1e-10, epsrel=1e-10)
    assert err < 1e-8
    # the gradient term is second-order accurate, so the discrete energy
    # converges to the oracle at O(h^2)
    errs = []
    for n in (201, 401, 801):
        g = build_grid(-5, 5, -5, 5, n, n)
        X, Y = g.meshgrid()
        c = np.exp(-(X**2 + Y**2) / 2.0)
        rho = 4.0 * np.exp(-(X**2 + Y**2))
        errs.append(abs(compute_energy(rho, c, 1.0, params, g) - oracle))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5
    assert errs[-1] <= 5e-5 * abs(oracle)


def test_dissipation_matches_analytic_value():
    # rho = 2, u - cbar = cos(pi x): integral of 2*pi^2*sin^2(pi x) over
    # (0,1)^2 is pi^2; chemoattractant history constant so its rate term
    # vanishes.
    g = build_grid(0, 1, 0, 1, 129, 129)
    X, _ = g.meshgrid()
    s = bdf_coefficients(1)
    cbar = np.full((g.ny, g.nx), 0.7)
    u = np.cos(np.pi * X) + 0.7
    rho = np.full((g.ny, g.nx), 2.0)
    from ks.bdf import History
    hist = History(1, [cbar.copy()])
    d = compute_dissipation(rho, u, cbar, hist, tau=0.1, scheme=s, grid=g)
    assert d == pytest.approx(math.pi**2, rel=1e-3)
    assert d >= 0.0


def test_dissipation_nonnegative_random_fields():
    g = build_grid(-1, 1, -1, 1, 33, 33)
    s = bdf_coefficients(2)
    rng = np.random.default_rng(12)
    from ks.bdf import History
    for _ in range(5):
        rho = np.exp(rng.standard_normal((g.ny, g.nx)))
        u = rng.standard_normal((g.ny, g.nx))
        cbar = rng.standard_normal((g.ny, g.nx))
        hist = History(2, [rng.standard_normal((g.ny, g.nx)) for _ in range(2)])
        assert compute_dissipation(rho, u, cbar, hist, 0.01, s, g) >= 0.0


@pytest.mark.parametrize("k", [1, 2])
def test_discrete_energy_identity_holds_exactly(k):
    # With the correction on, the new energy satisfies
    # alpha_k*E_new - A_k(E) = -tau*dissipation to round-off.
    params = ModelParams(alpha=6.0)
    g = build_grid(-5, 5, -5, 5, 41, 41)
    st = initialize(g, k, 1e-3, params,
                    c0=lambda x, y: np.exp(-(x**2 + y**2) / 2.0),
                    rho0=lambda x, y: 4.0 * np.exp(-(x**2 + y**2)),
                    start="cascade")
    s = st.scheme
    e_hist = list(st.energy)  # newest first
    for _ in range(10):
        st, diag = advance(st, params, 1e-3, epc=True)
        a_e = sum(w * e for w, e in zip(s.a_weights, e_hist))
        lhs = s.alpha * diag.energy - a_e
        rhs = -1e-3 * diag.dissipation
        assert abs(lhs - rhs) <= 1e-10 * (1.0 + abs(rhs))
        e_hist = [diag.energy] + e_hist[:k - 1]
        assert diag.mu > 0.0
        assert diag.min_rho > 0.0


def test_step4_mu_is_one_at_equilibrium():
    params = ModelParams(alpha=2.0, beta=1.0)
    g = build_grid(-1, 1, -1, 1, 17, 17)
    st = _constant_state(g, 2, c_val=1.5, rho_val=3.0, params=params)
    rho = st.rho.newest
    u = st.u.newest
    cbar = st.cbar.newest
    mu, diss, f_part, g_part = step4_energy_correction(st, rho, u, cbar, 0.01, params)
    assert mu == pytest.approx(1.0, abs=1e-12)
    assert diss == pytest.approx(0.0, abs=1e-13)
    assert f_part + mu * g_part == pytest.approx(st.energy.newest, rel=1e-12)


def test_step4_rejects_nonpositive_mu():
    params = ModelParams()
    g = build_grid(-1, 1, -1, 1, 9, 9)
    st = _constant_state(g, 1, c_val=1.0, rho_val=1.0, params=params)
    # poison the energy history so the linear solve lands at mu < 0
    st.energy.push(-1e6)
    with pytest.raises(NumericalError, match="reduce the time step"):
        step4_energy_correction(st, st.rho.newest, st.u.newest,
                                st.cbar.newest, 0.01, params)


def test_step5_rescale():
    f = np.full((3, 3), 2.0)
    assert np.allclose(step5_rescale(f, 4.0), 4.0)
    with pytest.raises(NumericalError):
        step5_rescale(f, -0.5)


def test_advance_without_correction_keeps_cbar():
    params = ModelParams(alpha=6.0)
    g = build_grid(-5, 5, -5, 5, 33, 33)
    st = initialize(g, 1, 1e-3, params,
                    c0=lambda x, y: np.exp(-(x**2 + y**2) / 2.0),
                    rho0=lambda x, y: 4.0 * np.exp(-(x**2 + y**2)),
                    start="cascade")
    st, diag = advance(st, params, 1e-3, epc=False)
    assert diag.mu == 1.0
    assert np.array_equal(st.c.newest, st.cbar.newest)


def test_advance_conserves_mass_and_positivity():
    params = ModelParams(alpha=6.0)
    g = build_grid(-5, 5, -5, 5, 41, 41)
    st = initialize(g, 2, 2e-3, params,
                    c0=lambda x, y: np.exp(-(x**2 + y**2) / 2.0),
                    rho0=lambda x, y: 4.0 * np.exp(-(x**2 + y**2)),
                    start="cascade")
    m0 = integrate(st.rho.newest, g)
    for _ in range(20):
        st, diag = advance(st, params, 2e-3, epc=True)
        assert abs(diag.mass - m0) <= 1e-12 * m0
        assert diag.min_rho > 0.0


def test_initialize_exact_start_fills_all_levels():
    from ks.manufactured import example1_solution, forcing
    sol = example1_solution()
    params = ModelParams()
    g = build_grid(*sol.domain, 33, 33)
    tau = 0.1
    st = initialize(g, 3, tau, params, exact=sol, forcing=forcing(sol, params),
                    start="exact")
    assert st.t_index == 2
    assert st.warm
    # newest level holds t = 2*tau
    assert np.allclose(st.rho.newest, g.sample(sol.rho, 2 * tau))
    assert np.allclose(st.c.newest, g.sample(sol.c, 2 * tau))


def test_initialize_cascade_startup_accuracy():
    # The level at t = tau produced by the startup cascade must agree with a
    # heavily resolved first-order march to the same time within O(tau^2).
    params = ModelParams(alpha=6.0)
    g = build_grid(-5, 5, -5, 5, 33, 33)
    c0 = lambda x, y: np.exp(-(x**2 + y**2) / 2.0)
    rho0 = lambda x, y: 4.0 * np.exp(-(x**2 + y**2))
    tau = 0.05

    st = initialize(g, 2, tau, params, c0=c0, rho0=rho0, start="cascade")
    rho_level1 = st.rho.newest

    ref = initialize(g, 1, tau / 1000, params, c0=c0, rho0=rho0, start="cascade")
    for _ in range(1000):
        ref, _ = advance(ref, params, tau / 1000, epc=False)
    diff = np.max(np.abs(rho_level1 - ref.rho.newest))
    assert diff <= 10 * tau**2


def test_initialize_error_paths():
    params = ModelParams()
    g = build_grid(0, 1, 0, 1, 9, 9)
    with pytest.raises(ConfigurationError):
        initialize(g, 2, 0.1, params, start="exact")  # no solution given
    with pytest.raises(ConfigurationError):
        initialize(g, 2, 0.1, params, start="cascade")  # no initial data
    with pytest.raises(ConfigurationError):
        initialize(g, 2, 0.1, params, c0=lambda x, y: np.ones_like(x),
                   rho0=lambda x, y: np.ones_like(x), start="ramp")
    with pytest.raises(ConfigurationError):
        initialize(g, 1, 0.1, params, c0=lambda x, y: np.ones_like(x),
                   rho0=lambda x, y: 0.0 * x, start="cascade")
