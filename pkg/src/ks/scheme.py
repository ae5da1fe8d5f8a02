"""Five-step BDF-k time advance for the log-transformed Keller-Segel system.

Each step advances (cbar, u, rho, c, E) by:

  1. implicit SPD solve for the uncorrected chemoattractant cbar,
  2. implicit advection-diffusion solve for u = log(rho) with frozen,
     extrapolated advection field,
  3. density recovery rho = lambda * exp(u) with lambda fixing the mass,
  4. scalar energy correction mu so the discrete free energy satisfies the
     dissipation identity exactly,
  5. rescale c = sqrt(mu) * cbar.

Positivity of rho is structural (exponential), mass conservation is exact by
construction of lambda, and the energy identity is linear in mu. Steps 4-5
are skipped (mu := 1, c := cbar) when the energy correction is disabled,
e.g. in manufactured-solution runs where external forcing breaks the
energy law.
"""

import math
from dataclasses import dataclass

import numpy as np

from ks.bdf import (BdfScheme, History, bdf_coefficients, discrete_derivative,
                    extrapolate, history_combination)
from ks.errors import ConfigurationError, NumericalError
from ks.grid import Grid2D, apply_laplacian, gradient, integrate
from ks.linsolve import (LinearOperator, solve_nonsym, solve_spd,
                         spectral_helmholtz_inverse)

_DEGENERATE_G = 1e-300


@dataclass(frozen=True)
class ModelParams:
    """Positive model coefficients: chemoattractant response rate eps,
    reaction coefficient alpha, cell growth rate beta, chemotactic
    sensitivity gamma."""
    eps: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("eps", "alpha", "beta", "gamma"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"model parameter {name} must be positive")


@dataclass
class SolverOptions:
    tol: float = 1e-10
    maxit: int | None = None
    precondition: bool = True


@dataclass
class StepDiagnostics:
    mass: float
    min_rho: float
    energy: float
    dissipation: float
    lam: float
    mu: float
    step1_iters: int
    step2_iters: int


class State:
    """Histories of the last k levels of (cbar, c, u, rho, E), newest first,
    plus the current correction scalars and step counter."""

    def __init__(self, grid: Grid2D, scheme: BdfScheme):
        self.grid = grid
        self.scheme = scheme
        k = scheme.k
        self.cbar = History(k)
        self.c = History(k)
        self.u = History(k)
        self.rho = History(k)
        self.energy = History(k)
        self.lam = 1.0
        self.mu = 1.0
        self.t_index = 0

    @property
    def warm(self) -> bool:
        return self.rho.warm

    def push_level(self, cbar, c, u, rho, energy):
        self.cbar.push(cbar)
        self.c.push(c)
        self.u.push(u)
        self.rho.push(rho)
        self.energy.push(energy)


def step1_chemoattractant(state: State, params: ModelParams, tau: float,
                          f_c=None, options: SolverOptions | None = None):
    """Solve (eps*alpha_k/tau + alpha) cbar - Lap cbar =
    eps*A_k(cbar)/tau + beta*B_k(rho) [+ f_c]."""
    opts = options or SolverOptions()
    g, s = state.grid, state.scheme
    sigma = params.eps * s.alpha / tau + params.alpha
    op = LinearOperator(lambda v: sigma * v - apply_laplacian(v, g), symmetric=True)
    rhs = (params.eps / tau) * history_combination(state.cbar, s) \
        + params.beta * extrapolate(state.rho, s)
    if f_c is not None:
        rhs = rhs + f_c
    x0 = extrapolate(state.cbar, s)
    precond = spectral_helmholtz_inverse(g, sigma) if opts.precondition else None
    x, report = solve_spd(op, rhs, tol=opts.tol, maxit=opts.maxit, x0=x0,
                          precond=precond, weights=g.quad_weights)
    return x, report


def step2_log_density(state: State, params: ModelParams, tau: float,
                      cbar_new, f_u=None, options: SolverOptions | None = None):
    """Solve (alpha_k/tau) u - Lap u - w.grad u =
    A_k(u)/tau - gamma*Lap cbar_new [+ f_u] with the frozen advection field
    w = grad B_k(u) - gamma * grad B_k(c)."""
    opts = options or SolverOptions()
    g, s = state.grid, state.scheme
    sigma = s.alpha / tau
    wx_u, wy_u = gradient(extrapolate(state.u, s), g)
    wx_c, wy_c = gradient(extrapolate(state.c, s), g)
    wx = wx_u - params.gamma * wx_c
    wy = wy_u - params.gamma * wy_c

    def apply(v):
        dx, dy = gradient(v, g)
        return sigma * v - apply_laplacian(v, g) - wx * dx - wy * dy

    op = LinearOperator(apply, symmetric=False)
    rhs = history_combination(state.u, s) / tau \
        - params.gamma * apply_laplacian(cbar_new, g)
    if f_u is not None:
        rhs = rhs + f_u
    x0 = extrapolate(state.u, s)
    precond = spectral_helmholtz_inverse(g, sigma) if opts.precondition else None
    x, report = solve_nonsym(op, rhs, tol=opts.tol, maxit=opts.maxit, x0=x0,
                             precond=precond)
    return x, report


def step3_recover_density(state: State, u_new):
    """rho_bar = exp(u), lambda = mass(rho^n)/mass(rho_bar), rho = lambda*rho_bar."""
    g = state.grid
    rho_bar = np.exp(u_new)
    lam = integrate(state.rho.newest, g) / integrate(rho_bar, g)
    return rho_bar, lam, lam * rho_bar


def compute_energy(rho, c, mu: float, params: ModelParams, grid: Grid2D) -> float:
    """Free energy with mu-weighted quadratic chemoattractant terms:
    int rho*log(rho) - rho - rho*c + (mu/2)(alpha*c^2 + |grad c|^2)."""
    if np.min(rho) <= 0.0:
        raise NumericalError("compute_energy requires a strictly positive density")
    dx, dy = gradient(c, grid)
    integrand = rho * np.log(rho) - rho - rho * c \
        + 0.5 * mu * (params.alpha * c * c + dx * dx + dy * dy)
    return integrate(integrand, grid)


def compute_dissipation(rho_new, u_new, cbar_new, cbar_hist: History,
                        tau: float, scheme: BdfScheme, grid: Grid2D,
                        eps: float = 1.0) -> float:
    """int rho |grad(u - cbar)|^2 + eps |D_ktau cbar|^2  (>= 0).

    grad(log rho) equals grad(u) because the recovery factor lambda is
    spatially constant.
    """
    dx, dy = gradient(u_new - cbar_new, grid)
    dc = discrete_derivative(cbar_new, cbar_hist, tau, scheme)
    return integrate(rho_new * (dx * dx + dy * dy) + eps * dc * dc, grid)


def _energy_split(rho_new, cbar_new, params: ModelParams, grid: Grid2D):
    """E = F + mu*G with F the mu-free part and G the quadratic cbar part."""
    f_part = integrate(rho_new * (np.log(rho_new) - 1.0) - rho_new * cbar_new, grid)
    dx, dy = gradient(cbar_new, grid)
    g_part = 0.5 * integrate(params.alpha * cbar_new**2 + dx * dx + dy * dy, grid)
    return f_part, g_part


def step4_energy_correction(state: State, rho_new, u_new, cbar_new,
                            tau: float, params: ModelParams):
    """Solve the (linear in mu) discrete energy identity
    alpha_k*(F + mu*G) = A_k(E-history) - tau*dissipation for mu > 0."""
    g, s = state.grid, state.scheme
    diss = compute_dissipation(rho_new, u_new, cbar_new, state.cbar, tau, s, g,
                               eps=params.eps)
    f_part, g_part = _energy_split(rho_new, cbar_new, params, g)
    if g_part <= _DEGENERATE_G:
        raise NumericalError("energy correction degenerate: quadratic part of E is ~0")
    a_e = history_combination(state.energy, s)
    mu = (a_e - tau * diss - s.alpha * f_part) / (s.alpha * g_part)
    if mu <= 0.0:
        raise NumericalError(
            f"energy correction produced mu = {mu:.6e} <= 0 at step "
            f"{state.t_index + 1}; reduce the time step")
    return mu, diss, f_part, g_part


def step5_rescale(cbar_new, mu: float):
    if mu <= 0.0:
        raise NumericalError(f"cannot rescale with non-positive mu = {mu:.6e}")
    return math.sqrt(mu) * cbar_new


def advance(state: State, params: ModelParams, tau: float, forcing=None,
            epc: bool = True, options: SolverOptions | None = None):
    """Run Steps 1-5 once, push the new level, and return (state, diagnostics).

    forcing: optional object with ``f_c(grid, t)`` and ``f_u(grid, t)``
    evaluated at the new time level.
    """
    g, s = state.grid, state.scheme
    t_new = (state.t_index + 1) * tau
    f_c = forcing.f_c(g, t_new) if forcing is not None else None
    f_u = forcing.f_u(g, t_new) if forcing is not None else None

    cbar_new, rep1 = step1_chemoattractant(state, params, tau, f_c, options)
    u_new, rep2 = step2_log_density(state, params, tau, cbar_new, f_u, options)
    _, lam, rho_new = step3_recover_density(state, u_new)

    if epc:
        mu, diss, f_part, g_part = step4_energy_correction(
            state, rho_new, u_new, cbar_new, tau, params)
        c_new = step5_rescale(cbar_new, mu)
        e_new = f_part + mu * g_part
    else:
        mu = 1.0
        diss = compute_dissipation(rho_new, u_new, cbar_new, state.cbar, tau, s, g,
                                   eps=params.eps)
        c_new = cbar_new
        e_new = compute_energy(rho_new, cbar_new, 1.0, params, g)

    for name, f in (("cbar", cbar_new), ("u", u_new), ("rho", rho_new), ("c", c_new)):
        if not np.all(np.isfinite(f)):
            raise NumericalError(f"non-finite values in {name} at step {state.t_index + 1}")

    state.push_level(cbar_new, c_new, u_new, rho_new, e_new)
    state.lam = lam
    state.mu = mu
    state.t_index += 1

    diag = StepDiagnostics(
        mass=integrate(rho_new, g),
        min_rho=float(np.min(rho_new)),
        energy=e_new,
        dissipation=diss,
        lam=lam,
        mu=mu,
        step1_iters=rep1.iterations,
        step2_iters=rep2.iterations,
    )
    return state, diag


def initialize(grid: Grid2D, k: int, tau: float, params: ModelParams,
               c0=None, rho0=None, exact=None, forcing=None,
               start: str = "cascade", options: SolverOptions | None = None) -> State:
    """Build a warm State holding levels 0..k-1.

    exact-start fills every level from a manufactured solution (closures
    ``exact.c/rho/u`` of (x, y, t)). cascade-start takes level 0 from the
    initial-data closures c0(x, y), rho0(x, y) and produces levels 1..k-1 by
    sub-marching lower-order schemes with time steps small enough that each
    startup level carries an O(tau^k) error.
    """
    scheme = bdf_coefficients(k)
    state = State(grid, scheme)

    if start == "exact":
        if exact is None:
            raise ConfigurationError("exact-start initialization needs a manufactured solution")
        for j in range(k):
            t = j * tau
            c = grid.sample(exact.c, t)
            rho = grid.sample(exact.rho, t)
            u = grid.sample(exact.u, t)
            state.push_level(c, c, u, rho, compute_energy(rho, c, 1.0, params, grid))
        state.t_index = k - 1
        return state

    if start != "cascade":
        raise ConfigurationError(f"unknown start mode {start!r}")
    if c0 is None or rho0 is None:
        raise ConfigurationError("cascade-start initialization needs c0 and rho0 closures")

    c_init = grid.sample(c0)
    rho_init = grid.sample(rho0)
    if np.min(rho_init) <= 0.0:
        raise ConfigurationError("initial density must be strictly positive")
    u_init = np.log(rho_init)
    state.push_level(c_init, c_init, u_init, rho_init,
                     compute_energy(rho_init, c_init, 1.0, params, grid))

    err_target = tau ** k
    for j in range(1, k):
        level = _cascade_level(grid, params, c0, rho0, forcing, j, j * tau,
                               err_target, options)
        state.push_level(*level,
                         compute_energy(level[3], level[0], 1.0, params, grid))
    state.t_index = k - 1
    return state


# substep refinement factor beyond the error-balance step size
_CASCADE_M = 2


def _cascade_level(grid, params, c0, rho0, forcing, order, t_end, err_target,
                   options):
    """March an order-j scheme from t=0 to t_end with substeps small enough
    that the global error (~ t_end * tau_sub^j) stays below err_target;
    the sub-march's own startup levels honor the same absolute target via
    recursion. Returns (cbar, c, u, rho) at t_end."""
    tau_sub = min(t_end / order, (err_target / t_end) ** (1.0 / order))
    n_sub = _CASCADE_M * math.ceil(t_end / tau_sub)
    tau_sub = t_end / n_sub

    scheme = bdf_coefficients(order)
    sub = State(grid, scheme)
    c_init = grid.sample(c0)
    rho_init = grid.sample(rho0)
    sub.push_level(c_init, c_init.copy(), np.log(rho_init), rho_init,
                   compute_energy(rho_init, c_init, 1.0, params, grid))
    for j in range(1, order):
        level = _cascade_level(grid, params, c0, rho0, forcing, j, j * tau_sub,
                               err_target, options)
        sub.push_level(*level,
                       compute_energy(level[3], level[0], 1.0, params, grid))
    sub.t_index = order - 1
    while sub.t_index < n_sub:
        advance(sub, params, tau_sub, forcing=forcing, epc=False,
                options=options)
    return sub.cbar.newest, sub.c.newest, sub.u.newest, sub.rho.newest
