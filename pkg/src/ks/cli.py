"""Configuration parsing, output writers, and the ``ks`` command line.

Subcommands:

    ks simulate --config FILE [--out-dir DIR]
    ks converge --config FILE --taus a,b,c [--grid-policy fixed|coupled]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Config files are plain ``key = value`` lines with ``#`` comments; unknown
keys are rejected. ``KS_THREADS`` caps harness parallelism in converge mode.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from ks import manufactured
from ks.errors import ConfigurationError, NumericalError, SolverError
from ks.grid import Grid2D, build_grid
from ks.scheme import ModelParams, SolverOptions, advance, initialize

SERIES_COLUMNS = ("step", "time", "mass", "min_rho", "energy", "dissipation",
                  "lambda", "mu", "step1_iters", "step2_iters")

_REQUIRED = ("xmin", "xmax", "ymin", "ymax", "nx", "ny", "tau", "T", "k")


@dataclass
class RunConfig:
    xmin: float = None
    xmax: float = None
    ymin: float = None
    ymax: float = None
    nx: int = None
    ny: int = None
    tau: float = None
    T: float = None
    k: int = None
    eps: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    mode: str = "simulate"
    epc: str = "on"
    start: str = "cascade"
    ic: str = "example2"
    snapshot_every: int = 0
    snapshot_format: str = "csv"
    out_dir: str = "."
    tol: float = 1e-10
    maxit: int = 0

    def validate(self):
        missing = [f for f in _REQUIRED if getattr(self, f) is None]
        if missing:
            raise ConfigurationError(f"missing required keys: {', '.join(missing)}")
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.T < self.tau:
            raise ConfigurationError("T must be at least tau")
        if not 1 <= self.k <= 5:
            raise ConfigurationError(f"k must be in 1..5, got {self.k}")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be >= 0")
        if self.mode not in ("simulate", "converge"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.epc not in ("on", "off"):
            raise ConfigurationError("epc must be 'on' or 'off'")
        if self.start not in ("cascade", "exact"):
            raise ConfigurationError("start must be 'cascade' or 'exact'")
        if self.snapshot_format not in ("csv", "vtk"):
            raise ConfigurationError("snapshot_format must be 'csv' or 'vtk'")
        return self

    def grid(self) -> Grid2D:
        return build_grid(self.xmin, self.xmax, self.ymin, self.ymax,
                          self.nx, self.ny)

    def params(self) -> ModelParams:
        return ModelParams(self.eps, self.alpha, self.beta, self.gamma)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.tol,
                             maxit=self.maxit if self.maxit > 0 else None)


def parse_config(text: str) -> RunConfig:
    casters = {f.name: f.type for f in fields(RunConfig)}
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in casters:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        caster = casters[key]
        try:
            setattr(cfg, key, caster(value))
        except ValueError:
            raise ConfigurationError(
                f"line {lineno}: cannot parse {value!r} as {caster.__name__} for {key!r}")
    return cfg.validate()


_BUILTIN_ICS = {
    "example2": (lambda x, y: np.exp(-(x**2 + y**2) / 2.0),
                 lambda x, y: 4.0 * np.exp(-(x**2 + y**2))),
    "example3": (lambda x, y: 420.0 * np.exp(-42.0 * (x**2 + y**2)),
                 lambda x, y: 840.0 * np.exp(-84.0 * (x**2 + y**2))),
    "constant": (lambda x, y: np.ones_like(x),
                 lambda x, y: np.ones_like(x)),
}


def builtin_initial_conditions(name: str):
    try:
        return _BUILTIN_ICS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown initial condition {name!r}; available: "
            + ", ".join(sorted(_BUILTIN_ICS)))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # shortest representation that round-trips exactly
    return repr(float(v))


def write_snapshot(f: np.ndarray, grid: Grid2D, path: str, fmt: str = "csv"):
    """Write one scalar field, full double precision.

    csv: header x,y,value then one row per node, row-major in j then i.
    vtk: legacy ASCII STRUCTURED_POINTS, plot-ready in standard viewers.
    """
    X, Y = grid.meshgrid()
    if fmt == "csv":
        lines = ["x,y,value"]
        for xv, yv, fv in zip(X.ravel(), Y.ravel(), f.ravel()):
            lines.append(f"{xv:.17g},{yv:.17g},{fv:.17g}")
        body = "\n".join(lines) + "\n"
    elif fmt == "vtk":
        header = "\n".join([
            "# vtk DataFile Version 3.0",
            "ks field snapshot",
            "ASCII",
            "DATASET STRUCTURED_POINTS",
            f"DIMENSIONS {grid.nx} {grid.ny} 1",
            f"ORIGIN {_fmt(grid.xmin)} {_fmt(grid.ymin)} 0",
            f"SPACING {_fmt(grid.hx)} {_fmt(grid.hy)} 1",
            f"POINT_DATA {grid.nx * grid.ny}",
            "SCALARS value double 1",
            "LOOKUP_TABLE default",
        ])
        body = header + "\n" + "\n".join(f"{v:.17g}" for v in f.ravel()) + "\n"
    else:
        raise ConfigurationError(f"unknown snapshot format {fmt!r}")
    try:
        with open(path, "w") as fh:
            fh.write(body)
    except OSError as exc:
        raise IOError(f"cannot write snapshot to {path}: {exc}") from exc


def read_snapshot_csv(path: str, grid: Grid2D) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data[:, 2].reshape(grid.ny, grid.nx)


def _series_row(n, t, diag) -> str:
    vals = (n, t, diag.mass, diag.min_rho, diag.energy, diag.dissipation,
            diag.lam, diag.mu, diag.step1_iters, diag.step2_iters)
    return ",".join(_fmt(v) for v in vals)


def simulate(cfg: RunConfig, out_dir: str | None = None) -> int:
    """Run one simulation: series.csv, periodic field snapshots, and the
    y=0 density cross-section at final time."""
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    grid = cfg.grid()
    params = cfg.params()
    opts = cfg.solver_options()
    epc = cfg.epc == "on"

    frc = None
    if cfg.start == "exact":
        sol = manufactured.example1_solution()
        frc = manufactured.forcing(sol, params)
        state = initialize(grid, cfg.k, cfg.tau, params, exact=sol,
                           forcing=frc, start="exact", options=opts)
    else:
        c0, rho0 = builtin_initial_conditions(cfg.ic)
        state = initialize(grid, cfg.k, cfg.tau, params, c0=c0, rho0=rho0,
                           start="cascade", options=opts)

    n_steps = max(1, round(cfg.T / cfg.tau))
    snap_ext = cfg.snapshot_format

    def snap(tag):
        write_snapshot(state.rho.newest, grid,
                       os.path.join(out, f"rho_{tag}.{snap_ext}"), snap_ext)
        write_snapshot(state.c.newest, grid,
                       os.path.join(out, f"c_{tag}.{snap_ext}"), snap_ext)

    series_path = os.path.join(out, "series.csv")
    with open(series_path, "w") as fh:
        fh.write(",".join(SERIES_COLUMNS) + "\n")
        try:
            for n in range(state.t_index + 1, n_steps + 1):
                _, diag = advance(state, params, cfg.tau, forcing=frc,
                                  epc=epc, options=opts)
                fh.write(_series_row(n, n * cfg.tau, diag) + "\n")
                if cfg.snapshot_every and n % cfg.snapshot_every == 0 and n < n_steps:
                    snap(f"{n:08d}")
        except (SolverError, NumericalError):
            fh.flush()
            raise

    snap("final")
    j0 = int(np.argmin(np.abs(grid.y)))
    with open(os.path.join(out, "rho_cross_section.csv"), "w") as fh:
        fh.write("x,rho\n")
        for xv, rv in zip(grid.x, state.rho.newest[j0, :]):
            fh.write(f"{xv:.17g},{rv:.17g}\n")
    return 0


def converge(cfg: RunConfig, taus, grid_policy: str = "fixed",
             out_dir: str | None = None) -> int:
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    workers = int(os.environ.get("KS_THREADS", "1"))
    table = manufactured.run_convergence(
        cfg.k, taus, grid_policy=grid_policy, grid=cfg.grid(), T=cfg.T,
        params=cfg.params(), epc=(cfg.epc == "on"),
        options=cfg.solver_options(), workers=max(1, workers))
    path = os.path.join(out, f"convergence_k{cfg.k}.csv")
    with open(path, "w") as fh:
        fh.write(table.to_csv())
    print(table.summary())
    return 0


def _parse_taus(text: str):
    try:
        taus = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse tau list {text!r}")
    if not taus:
        raise ConfigurationError("empty tau list")
    return taus


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ks",
        description="Structure-preserving BDF-k Keller-Segel solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="march a configured run")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out-dir", default=None)

    p_conv = sub.add_parser("converge", help="tau-refinement order study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--taus", required=True,
                        help="comma-separated decreasing time steps")
    p_conv.add_argument("--grid-policy", choices=("fixed", "coupled"),
                        default="fixed")
    p_conv.add_argument("--out-dir", default=None)

    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.command == "simulate":
            return simulate(cfg, out_dir=args.out_dir)
        return converge(cfg, _parse_taus(args.taus),
                        grid_policy=args.grid_policy, out_dir=args.out_dir)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
