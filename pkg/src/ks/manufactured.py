"""Manufactured exact solution, forcing terms, error norms, and the
time-step refinement harness that fits empirical convergence orders.

The exact pair is an oscillating-in-time standing wave on (-0.05, 0.05)^2,

    c   = sin(10 pi x) sin(10 pi y) sin(t) + 1.1,
    rho = sin(10 pi x) sin(10 pi y) sin(t) / (2 pi^2 + 1) + 1.1,

which satisfies the homogeneous Neumann condition exactly and keeps rho
bounded away from zero. Forcing terms are assembled from hand-derived
analytic derivatives so the pair solves the log-transformed system with
sources.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ks.errors import ConfigurationError
from ks.grid import Grid2D, build_grid, norm
from ks.scheme import ModelParams, SolverOptions, State, advance, initialize

log = logging.getLogger(__name__)

_KAPPA = 10.0 * math.pi
_AMP = 1.0 / (2.0 * math.pi**2 + 1.0)
_OFFSET = 1.1

CSV_COLUMNS = ("k", "tau", "err_cbar_L2", "err_u_L2", "err_rho_L2", "err_c_L2",
               "err_cbar_H1", "err_u_H1", "err_rho_H1", "err_c_H1",
               "max_dev_lambda", "max_dev_mu")


class Example1Solution:
    """Closures for the exact fields and every derivative the forcing needs."""

    domain = (-0.05, 0.05, -0.05, 0.05)

    @staticmethod
    def _wave(x, y, t):
        return np.sin(_KAPPA * x) * np.sin(_KAPPA * y) * np.sin(t)

    def c(self, x, y, t):
        return self._wave(x, y, t) + _OFFSET

    def rho(self, x, y, t):
        return _AMP * self._wave(x, y, t) + _OFFSET

    def u(self, x, y, t):
        return np.log(self.rho(x, y, t))

    def c_t(self, x, y, t):
        return np.sin(_KAPPA * x) * np.sin(_KAPPA * y) * np.cos(t)

    def lap_c(self, x, y, t):
        return -2.0 * _KAPPA**2 * self._wave(x, y, t)

    def grad_c(self, x, y, t):
        s = np.sin(t)
        dx = _KAPPA * np.cos(_KAPPA * x) * np.sin(_KAPPA * y) * s
        dy = _KAPPA * np.sin(_KAPPA * x) * np.cos(_KAPPA * y) * s
        return dx, dy

    def rho_t(self, x, y, t):
        return _AMP * np.sin(_KAPPA * x) * np.sin(_KAPPA * y) * np.cos(t)

    def lap_rho(self, x, y, t):
        return -2.0 * _KAPPA**2 * _AMP * self._wave(x, y, t)

    def grad_rho(self, x, y, t):
        dx, dy = self.grad_c(x, y, t)
        return _AMP * dx, _AMP * dy

    def u_t(self, x, y, t):
        return self.rho_t(x, y, t) / self.rho(x, y, t)

    def grad_u(self, x, y, t):
        r = self.rho(x, y, t)
        dx, dy = self.grad_rho(x, y, t)
        return dx / r, dy / r

    def lap_u(self, x, y, t):
        r = self.rho(x, y, t)
        dx, dy = self.grad_rho(x, y, t)
        return self.lap_rho(x, y, t) / r - (dx * dx + dy * dy) / (r * r)


def example1_solution() -> Example1Solution:
    return Example1Solution()


class ManufacturedForcing:
    """Source terms making the exact pair solve the transformed system:

    f_c = eps*c_t - Lap c + alpha*c - beta*rho
    f_u = u_t - Lap u - |grad u|^2 + gamma*(grad u . grad c) + gamma*Lap c
    """

    def __init__(self, sol, params: ModelParams):
        self.sol = sol
        self.params = params

    def f_c_at(self, x, y, t):
        s, p = self.sol, self.params
        return p.eps * s.c_t(x, y, t) - s.lap_c(x, y, t) \
            + p.alpha * s.c(x, y, t) - p.beta * s.rho(x, y, t)

    def f_u_at(self, x, y, t):
        s, p = self.sol, self.params
        ux, uy = s.grad_u(x, y, t)
        cx, cy = s.grad_c(x, y, t)
        return s.u_t(x, y, t) - s.lap_u(x, y, t) - (ux * ux + uy * uy) \
            + p.gamma * (ux * cx + uy * cy) + p.gamma * s.lap_c(x, y, t)

    def f_c(self, grid: Grid2D, t: float):
        X, Y = grid.meshgrid()
        return self.f_c_at(X, Y, t)

    def f_u(self, grid: Grid2D, t: float):
        X, Y = grid.meshgrid()
        return self.f_u_at(X, Y, t)


def forcing(sol, params: ModelParams) -> ManufacturedForcing:
    return ManufacturedForcing(sol, params)


def error_norms(state: State, sol, t: float, grid: Grid2D) -> dict:
    """L2 and H1-seminorm errors of the newest (cbar, u, rho, c) levels."""
    out = {}
    for name, num, exact in (("cbar", state.cbar.newest, sol.c),
                             ("u", state.u.newest, sol.u),
                             ("rho", state.rho.newest, sol.rho),
                             ("c", state.c.newest, sol.c)):
        e = num - grid.sample(exact, t)
        out[f"err_{name}_L2"] = norm(e, grid, "L2")
        out[f"err_{name}_H1"] = norm(e, grid, "H1semi")
    return out


@dataclass
class ConvergenceTable:
    k: int
    rows: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)

    def fit_orders(self):
        """Least-squares slope of log(err) vs log(tau) per error column,
        reported with the fit residual; columns with any exact zero are
        skipped."""
        taus = np.array([r["tau"] for r in self.rows])
        lt = np.log(taus)
        for col in CSV_COLUMNS[2:]:
            vals = np.array([r[col] for r in self.rows])
            if np.any(vals <= 0.0):
                continue
            coeffs, res, *_ = np.polyfit(lt, np.log(vals), 1, full=True)
            self.orders[col] = (float(coeffs[0]),
                                float(res[0]) if len(res) else 0.0)

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(
                f"{r[c]:d}" if c == "k" else f"{r[c]:.17g}" for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        parts = [f"{col}: order {slope:.3f} (fit residual {res:.2e})"
                 for col, (slope, res) in self.orders.items()]
        return f"k={self.k} fitted orders | " + "; ".join(parts)


def _march_one_tau(k, tau, grid, params, T, epc, options):
    sol = example1_solution()
    frc = forcing(sol, params)
    n_steps = round(T / tau)
    if abs(n_steps * tau - T) > 1e-12 * T:
        raise ConfigurationError(f"T={T} is not an integer multiple of tau={tau}")
    state = initialize(grid, k, tau, params, exact=sol, forcing=frc,
                       start="exact", options=options)
    max_dl = 0.0
    max_dm = 0.0
    acc_cbar_h1 = 0.0
    for _ in range(k - 1, n_steps):
        _, diag = advance(state, params, tau, forcing=frc, epc=epc,
                          options=options)
        max_dl = max(max_dl, abs(1.0 - diag.lam))
        max_dm = max(max_dm, abs(1.0 - diag.mu))
        e = state.cbar.newest - grid.sample(sol.c, state.t_index * tau)
        acc_cbar_h1 += tau * norm(e, grid, "H1semi") ** 2
    row = {"k": k, "tau": tau, "max_dev_lambda": max_dl, "max_dev_mu": max_dm}
    row.update(error_norms(state, sol, n_steps * tau, grid))
    log.info("k=%d tau=%.5g accumulated cbar H1 error sqrt(tau*sum) = %.6e",
             k, tau, math.sqrt(acc_cbar_h1))
    return row


def run_convergence(k: int, taus, grid_policy: str = "fixed",
                    grid: Grid2D | None = None, T: float = 1.0,
                    params: ModelParams | None = None, epc: bool = False,
                    options: SolverOptions | None = None,
                    workers: int = 1) -> ConvergenceTable:
    """March the forced problem once per tau from an exact start and fit the
    empirical order of every final-time error column.

    grid_policy "fixed" uses the supplied grid for every tau; "coupled" sets
    the mesh spacing to tau^k (practical only for small k).
    """
    taus = list(taus)
    if len(taus) < 3:
        raise ConfigurationError("need at least 3 tau values to fit an order")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ConfigurationError("tau list must be strictly decreasing")
    params = params or ModelParams()
    xmin, xmax, ymin, ymax = Example1Solution.domain

    def grid_for(tau):
        if grid_policy == "fixed":
            if grid is None:
                raise ConfigurationError("fixed grid policy needs a grid")
            return grid
        if grid_policy == "coupled":
            h = tau ** k
            n = max(3, math.ceil((xmax - xmin) / h) + 1)
            return build_grid(xmin, xmax, ymin, ymax, n, n)
        raise ConfigurationError(f"unknown grid policy {grid_policy!r}")

    table = ConvergenceTable(k=k)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(
                lambda tau: _march_one_tau(k, tau, grid_for(tau), params, T,
                                           epc, options), taus))
    else:
        rows = [_march_one_tau(k, tau, grid_for(tau), params, T, epc, options)
                for tau in taus]
    table.rows = rows
    table.fit_orders()
    return table
