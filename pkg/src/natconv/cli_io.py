"""Experiment configuration, batch runs, snapshots and the command line.

Config files are flat ``key = value`` text, one assignment per line, with
``#`` comments.  Sequences are comma separated.  A ``preset`` line selects
the defaults that the remaining keys override.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import STEP_FIELDS, StabilityLedger, check_sublinear_growth, record_step
from .fem import build_fe_system, estimate_inf_sup
from .hopf import build_hopf_extension, estimate_hopf_bound_constant
from .manufactured import boussinesq_mms, l2_errors
from .mesh import (delta_from_rayleigh, generate_graded_mesh, heated_sidewalls, mesh_from_lines,
                   mesh_to_lines, rayleigh_benard, uniform_mesh, validate_mesh)
from .steppers import PicardOptions, SchemeConfig, init_state, simulate

log = logging.getLogger(__name__)

PRESETS = ("heated_cavity", "rayleigh_benard", "manufactured", "decay_test")


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    preset: str = "heated_cavity"
    # mesh
    mesh_kind: str = "graded"  # graded | uniform
    n_core: int = 16
    n_layers: int = 4
    stretch: float = 2.0
    c_delta: Optional[float] = None
    delta: Optional[float] = None
    # scheme
    scheme: str = "LI_BDF2"
    dt: float = 1e-2
    n_steps: int = 200
    Pr: float = 0.71
    Ra: float = 1e3
    picard_max_iters: int = 50
    picard_tol: float = 1e-9
    # output and checks
    out_dir: str = "out"
    snapshot_every: int = 0  # 0: final state only
    checkpoints: tuple = ()  # horizons t*
    growth_margin: float = 1.25
    identity_tol: float = 1e-9
    estimate_beta: bool = False
    plots: bool = True
    seed: int = 0
    # manufactured solution and rate studies
    omega: float = 2 * math.pi
    rate_dt0: float = 0.1
    rate_levels: int = 5
    rate_t_final: float = 1.0
    spatial_levels: tuple = (4, 8, 16)
    spatial_dt: float = 2.5e-3
    spatial_t_final: float = 0.25
    # Hopf bound check
    hopf_deltas: tuple = (1e-1, 1e-2, 1e-3)
    hopf_samples: int = 500

    def __post_init__(self):
        self.checkpoints = tuple(float(c) for c in self.checkpoints)
        self.spatial_levels = tuple(int(c) for c in self.spatial_levels)
        self.hopf_deltas = tuple(float(c) for c in self.hopf_deltas)
        self.validate()

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.mesh_kind not in ("graded", "uniform"):
            raise ConfigError("mesh_kind must be 'graded' or 'uniform'")
        if self.c_delta is not None and self.delta is not None:
            raise ConfigError("give exactly one of c_delta and delta")
        if self.mesh_kind == "graded" and self.c_delta is None and self.delta is None:
            raise ConfigError("a graded mesh needs c_delta or delta")
        for name in ("dt", "Pr", "Ra", "stretch", "picard_tol", "growth_margin", "identity_tol",
                     "omega", "rate_dt0", "rate_t_final", "spatial_dt", "spatial_t_final"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("c_delta", "delta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_core < 1 or self.n_steps < 0 or self.n_layers < 1 or self.picard_max_iters < 1:
            raise ConfigError("n_core, n_layers, picard_max_iters >= 1 and n_steps >= 0 required")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        # scheme name and the rest are checked by SchemeConfig
        self.scheme_config()

    @property
    def layer_width(self) -> float:
        if self.delta is not None:
            return self.delta
        return delta_from_rayleigh(self.Ra, self.c_delta)

    def checkpoint_steps(self) -> list:
        return [int(round(t / self.dt)) for t in self.checkpoints]

    def scheme_config(self, **kw) -> SchemeConfig:
        args = dict(scheme=self.scheme, dt=self.dt, n_steps=self.n_steps, Pr=self.Pr, Ra=self.Ra,
                    picard=PicardOptions(self.picard_max_iters, self.picard_tol))
        args.update(kw)
        return SchemeConfig(**args)

    # flat text round trip --------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kv = {}
        for lno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lno}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in kv:
                raise ConfigError(f"line {lno}: duplicate key {key!r}")
            kv[key] = val
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(kv) - set(types)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        parsed = {k: _parse(k, types[k], v) for k, v in kv.items()}
        if "c_delta" in parsed and "delta" in parsed:
            raise ConfigError("give exactly one of c_delta and delta")
        return preset_config(parsed.pop("preset", "heated_cavity"), **parsed)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _parse(key, typ, text):
    typ = str(typ)
    try:
        if "bool" in typ:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if "tuple" in typ:
            items = [s.strip() for s in text.split(",") if s.strip()]
            return tuple(float(s) if key != "spatial_levels" else int(s) for s in items)
        if "int" in typ:
            return int(text)
        if "float" in typ:
            return None if text.lower() == "none" else float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


PRESET_DEFAULTS = {
    "heated_cavity": dict(c_delta=1.0),
    "rayleigh_benard": dict(c_delta=1.0),
    "decay_test": dict(c_delta=1.0, n_steps=500),
    "manufactured": dict(mesh_kind="uniform", Pr=1.0, Ra=100.0, scheme="BDF2"),
}


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    args = dict(PRESET_DEFAULTS[name])
    # an explicit layer width replaces the preset's c_delta and vice versa
    if "delta" in overrides:
        args.pop("c_delta", None)
    if "c_delta" in overrides:
        args.pop("delta", None)
    args.update(overrides)
    return ExperimentConfig(preset=name, **args)


# --------------------------------------------------------------------------
# problem setup
# --------------------------------------------------------------------------

@dataclass
class Problem:
    mesh: object
    system: object
    hopf: object
    scheme: SchemeConfig
    state0: object
    mms: object = None


def _cavity(config):
    return rayleigh_benard() if config.preset == "rayleigh_benard" else heated_sidewalls()


def build_mesh(config: ExperimentConfig, n_core: Optional[int] = None):
    cav = _cavity(config)
    n = config.n_core if n_core is None else n_core
    if config.mesh_kind == "uniform":
        return uniform_mesh(cav, n)
    return generate_graded_mesh(cav, n, config.layer_width, config.n_layers, config.stretch)


def setup_problem(config: ExperimentConfig, mesh=None, **scheme_kw) -> Problem:
    if mesh is None:
        try:
            mesh = build_mesh(config)
        except ValueError as exc:
            raise ExperimentError(f"mesh generation failed: {exc}") from exc
    validate_mesh(mesh).raise_if_invalid()
    system = build_fe_system(mesh, _cavity(config).xi)
    mms = None
    if config.preset == "decay_test":
        bc = system.temperature_bc_values(t_hot=0.0, t_cold=0.0)
        u0, T0 = None, (lambda x, y: np.sin(np.pi * x))
    elif config.preset == "manufactured":
        mms = boussinesq_mms(Pr=config.Pr, Ra=config.Ra, xi=system.xi, omega=config.omega)
        bc = system.temperature_bc_values()
        u0, _, T0 = mms.at(0.0)
        scheme_kw.setdefault("forcing", mms.forcing)
        scheme_kw.setdefault("heat_source", mms.heat_source)
    elif config.preset == "rayleigh_benard":
        bc = system.temperature_bc_values()
        u0, T0 = None, (lambda x, y: 1.0 - y)
    else:
        bc = system.temperature_bc_values()
        u0, T0 = None, (lambda x, y: 1.0 - x)
    hopf = build_hopf_extension(system, bc)
    scheme = config.scheme_config(xi=tuple(system.xi), **scheme_kw)
    return Problem(mesh, system, hopf, scheme, init_state(system, u0, T0, hopf), mms)


# --------------------------------------------------------------------------
# snapshots
# --------------------------------------------------------------------------

@dataclass
class Snapshot:
    mesh: object
    n: int
    t: float
    u: np.ndarray
    p: np.ndarray
    T: np.ndarray
    tau: np.ndarray

    @property
    def theta(self):
        return self.T - self.tau


def write_snapshot(state, system, path, tau=None, vtk_path=None):
    """Plain-text snapshot: header, mesh block, P2 node columns, P1 pressure column.

    Layout::

        snapshot <n> <t>
        <mesh block>
        nodes <N>            then N lines: x y ux uy T tau theta
        pressure <M>         then M lines: p   (one per mesh vertex)
    """
    nT = system.n_T
    tau = np.zeros(nT) if tau is None else tau
    theta = state.T - tau
    coords = system.temp.coords
    lines = [f"snapshot {state.n} {float(state.t)!r}"] + mesh_to_lines(system.mesh)
    lines.append(f"nodes {nT}")
    ux, uy = state.u[:nT], state.u[nT:]
    for k in range(nT):
        vals = (coords[k, 0], coords[k, 1], ux[k], uy[k], state.T[k], tau[k], theta[k])
        lines.append(" ".join(repr(float(v)) for v in vals))
    lines.append(f"pressure {system.n_p}")
    lines += [repr(float(v)) for v in state.p]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ExperimentError(f"cannot write snapshot {path}: {exc}") from exc
    if vtk_path is not None:
        write_vtk(state, system, vtk_path, tau)


def read_snapshot(path) -> Snapshot:
    with open(path) as fh:
        lines = [s for s in fh.read().splitlines() if s.strip()]
    head = lines[0].split()
    if head[0] != "snapshot":
        raise ValueError(f"{path}: not a snapshot file")
    mesh, used = mesh_from_lines(lines[1:])
    k = 1 + used
    n_nodes = int(lines[k].split()[1])
    cols = np.array([[float(s) for s in ln.split()] for ln in lines[k + 1:k + 1 + n_nodes]])
    k += 1 + n_nodes
    n_p = int(lines[k].split()[1])
    p = np.array([float(s) for s in lines[k + 1:k + 1 + n_p]])
    u = np.concatenate([cols[:, 2], cols[:, 3]])
    return Snapshot(mesh, int(head[1]), float(head[2]), u, p, cols[:, 4].copy(), cols[:, 5].copy())


def write_vtk(state, system, path, tau=None):
    """Legacy ASCII VTK, quadratic triangles on the P2 nodes."""
    nT = system.n_T
    tau = np.zeros(nT) if tau is None else tau
    coords = system.temp.coords
    cells = system.temp.cell_dofs
    # P1 pressure lifted to P2 nodes: vertex values, edge midpoints averaged
    pv = np.zeros(nT)
    nv = system.mesh.n_vertices
    pv[:nv] = state.p
    edges = system.temp.edges
    pv[nv:] = 0.5 * (state.p[edges[:, 0]] + state.p[edges[:, 1]])
    out = ["# vtk DataFile Version 3.0", f"natconv n={state.n} t={state.t!r}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nT} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in coords]
    out.append(f"CELLS {len(cells)} {7 * len(cells)}")
    out += ["6 " + " ".join(str(int(i)) for i in c) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += ["22"] * len(cells)
    out.append(f"POINT_DATA {nT}")
    for name, vals in (("T", state.T), ("tau", tau), ("theta", state.T - tau), ("p", pv)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(v)) for v in vals]
    out.append("VECTORS u double")
    out += [f"{float(a)!r} {float(b)!r} 0.0" for a, b in zip(state.u[:nT], state.u[nT:])]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------

@dataclass
class ExitReport:
    exit_code: int
    checks: dict
    details: dict = field(default_factory=dict)
    growth: object = None
    ledger: object = None
    outputs: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"{name}: {'ok' if ok else 'FAILED'}" for name, ok in self.checks.items()]
        lines += [f"  {k} = {v}" for k, v in self.details.items()]
        lines.append(f"exit {self.exit_code}")
        return "\n".join(lines)


def write_ledger_header(fh, ledger):
    for k, v in ledger.metadata().items():
        fh.write(f"# {k} = {v}\n")
    fh.write("# columns: n t | L2 norms T theta u p, H1 seminorms grad_T grad_u | increments dT du,\n"
             "#   second differences d2T d2u, extrapolants extT extu | identity residuals res_*\n"
             "#   and their dominant term scale_* | dt (grad tau, grad theta) | ||B u||, p mean,\n"
             "#   Picard iterations, startup flag\n")


def write_growth(report, path_txt, path_kv, ledger):
    meta = ledger.metadata()
    with open(path_txt, "w") as fh:
        fh.write(f"scheme {meta['scheme']}  dt {meta['dt']}  Pr {meta['Pr']}  Ra {meta['Ra']}  "
                 f"delta {meta['delta']}\n")
        if report is None:
            fh.write("no checkpoints requested\n")
        else:
            fh.write(f"{'t*':>10} {'Q':>14} {'P':>14}\n")
            for t, q, p in zip(report.t_star, report.Q, report.P):
                fh.write(f"{t:10.4g} {q:14.6e} {p:14.6e}\n")
            fh.write(f"Q ratio {report.q_ratio:.4f} (margin {report.margin}) "
                     f"{'within' if report.q_ok else 'EXCEEDS'} margin\n")
            fh.write(f"P ratio {report.p_ratio:.4f} (margin {report.margin}) "
                     f"{'within' if report.p_ok else 'EXCEEDS'} margin\n")
            fh.write(f"||T^n|| ~ t^{report.exponent:.4f}\n")
    with open(path_kv, "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")
        if report is not None:
            for k, v in report.as_dict().items():
                if isinstance(v, (list, tuple)):
                    v = ",".join(repr(float(x)) for x in v)
                fh.write(f"{k}={v}\n")


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExitReport:
    """Build, run and check one experiment; outputs go to ``out_dir``."""
    out = out_dir or config.out_dir
    os.makedirs(out, exist_ok=True)
    config.save(os.path.join(out, "config.txt"))
    prob = setup_problem(config)
    system, hopf, scheme = prob.system, prob.hopf, prob.scheme
    ledger = StabilityLedger.for_run(scheme, system, hopf, prob.state0,
                                     c_delta=config.c_delta if config.c_delta is not None else float("nan"))
    if config.estimate_beta:
        ledger.beta_h = estimate_inf_sup(system, seed=config.seed)
    outputs = []

    def snap(state):
        base = os.path.join(out, f"snap_{state.n:06d}")
        write_snapshot(state, system, base + ".txt", hopf.coefficients, base + ".vtk")
        outputs.extend([base + ".txt", base + ".vtk"])

    csv_path = os.path.join(out, "ledger.csv")
    outputs.append(csv_path)
    with open(csv_path, "w", newline="") as fh:
        write_ledger_header(fh, ledger)
        writer = csv.writer(fh)
        writer.writerow(STEP_FIELDS)

        def on_step(before, after):
            record_step(ledger, before, after, system, hopf, scheme)
            e = ledger.entries[-1]
            writer.writerow([repr(v) if isinstance(v, float) else int(v) for v in
                             (getattr(e, k) for k in STEP_FIELDS)])
            fh.flush()
            if config.snapshot_every and after.n % config.snapshot_every == 0:
                snap(after)

        if config.snapshot_every:
            snap(prob.state0)
        try:
            final = simulate(system, hopf, scheme, prob.state0, on_step)
        except Exception as exc:
            raise ExperimentError(f"time stepping failed after {len(ledger.entries)} steps: {exc}") from exc
    if not config.snapshot_every or final.n % config.snapshot_every:
        snap(final)

    checks, details = {}, {}
    if ledger.entries:
        rel = max(max(abs(e.res_T) / e.scale_T if e.scale_T else abs(e.res_T),
                      abs(e.res_u) / e.scale_u if e.scale_u else abs(e.res_u)) for e in ledger.entries)
        checks["energy_identity"] = rel <= config.identity_tol
        details["max_relative_identity_residual"] = rel
        checks["incompressibility"] = all(e.div_u <= 1e-10 * e.u for e in ledger.entries)
        checks["pressure_mean"] = all(abs(e.p_mean) <= 1e-12 for e in ledger.entries)
        details["max_div_u"] = max(e.div_u for e in ledger.entries)
    if config.preset == "decay_test":
        Ts = np.concatenate([[ledger.initial["T"]], ledger.column("T")])
        checks["monotone_T"] = bool(np.all(np.diff(Ts) <= 0))
    growth = None
    steps = [c for c in config.checkpoint_steps() if 1 <= c <= len(ledger.entries)]
    if config.checkpoints:
        if len(steps) < len(config.checkpoints):
            raise ExperimentError("checkpoint horizons must lie within the simulated steps")
        growth = check_sublinear_growth(ledger, steps, config.growth_margin)
        checks["growth_Q"] = growth.q_ok
        checks["growth_P"] = growth.p_ok
        details["Q_ratio"] = growth.q_ratio
        details["P_ratio"] = growth.p_ratio
        details["T_exponent"] = growth.exponent
    gtxt, gkv = os.path.join(out, "growth.txt"), os.path.join(out, "growth.kv")
    write_growth(growth, gtxt, gkv, ledger)
    outputs += [gtxt, gkv]

    if config.plots and ledger.entries:
        from . import plotting
        figs = {"norms.png": lambda p: plotting.plot_ledger(ledger, p),
                "fields.png": lambda p: plotting.plot_fields(system, final, p)}
        if growth is not None:
            figs["growth.png"] = lambda p: plotting.plot_growth(growth, p)
        for name, fn in figs.items():
            fn(os.path.join(out, name))
            outputs.append(os.path.join(out, name))

    code = 0 if all(checks.values()) else 1
    return ExitReport(code, checks, details, growth, ledger, outputs)


# --------------------------------------------------------------------------
# convergence studies
# --------------------------------------------------------------------------

@dataclass
class RateTable:
    kind: str  # temporal | spatial
    scheme: str
    steps: list  # dt or h per level
    errors: np.ndarray  # (levels, 3): u, p, T
    field_orders: tuple
    order: float  # fitted on sqrt(e_u^2 + e_T^2)
    monotone: bool

    def lines(self) -> list:
        head = "dt" if self.kind == "temporal" else "h"
        out = [f"# {self.kind} rates, {self.scheme}",
               f"{head:>12} {'err_u':>12} {'err_p':>12} {'err_T':>12}"]
        for s, e in zip(self.steps, self.errors):
            out.append(f"{s:12.5g} {e[0]:12.4e} {e[1]:12.4e} {e[2]:12.4e}")
        out.append("orders u p T: " + " ".join(f"{o:.3f}" for o in self.field_orders))
        out.append(f"fitted order (u, T combined): {self.order:.3f}")
        if not self.monotone:
            out.append("WARNING: error sequence is not monotone")
        return out


def _slope(h, e):
    h, e = np.asarray(h, float), np.asarray(e, float)
    ok = e > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


def manufactured_rates(config: ExperimentConfig, kind: str = "temporal", levels=None, sol=None) -> RateTable:
    """Final-time L2 errors against the manufactured fields and fitted orders.

    Temporal: dt = rate_dt0 / 2^k on the configured mesh.  Spatial: uniform
    meshes ``spatial_levels`` at the fixed small ``spatial_dt``.
    """
    if kind not in ("temporal", "spatial"):
        raise ConfigError("kind must be 'temporal' or 'spatial'")
    if config.preset != "manufactured":
        config = dataclasses.replace(config, preset="manufactured")
    errs, hs = [], []
    if kind == "temporal":
        n_levels = config.rate_levels if levels is None else levels
        prob = setup_problem(config)
        if sol is not None:
            prob = dataclasses.replace(prob, mms=sol)
        for k in range(n_levels):
            dt = config.rate_dt0 / 2**k
            n = int(round(config.rate_t_final / dt))
            sc = dataclasses.replace(prob.scheme, dt=dt, n_steps=n,
                                     forcing=prob.mms.forcing, heat_source=prob.mms.heat_source)
            s = simulate(prob.system, prob.hopf, sc, prob.state0)
            errs.append(l2_errors(prob.system, s, prob.mms, s.t))
            hs.append(dt)
    else:
        ns = config.spatial_levels if levels is None else levels
        for n in ns:
            prob = setup_problem(dataclasses.replace(config, mesh_kind="uniform"),
                                 mesh=uniform_mesh(heated_sidewalls(), n))
            steps = int(round(config.spatial_t_final / config.spatial_dt))
            sc = dataclasses.replace(prob.scheme, dt=config.spatial_dt, n_steps=steps)
            s = simulate(prob.system, prob.hopf, sc, prob.state0)
            errs.append(l2_errors(prob.system, s, prob.mms, s.t))
            hs.append(1.0 / n)
    E = np.array(errs)
    combined = np.sqrt(E[:, 0] ** 2 + E[:, 2] ** 2)
    orders = tuple(_slope(hs, E[:, k]) for k in range(3))
    monotone = bool(np.all(np.diff(combined) < 0))
    return RateTable(kind, config.scheme, hs, E, orders, _slope(hs, combined), monotone)


def check_hopf(config: ExperimentConfig) -> dict:
    """Sampled Hopf bound constant across the configured layer widths."""
    cav = _cavity(config)
    consts = {}
    for d in config.hopf_deltas:
        mesh = generate_graded_mesh(cav, config.n_core, d, config.n_layers, config.stretch)
        system = build_fe_system(mesh, cav.xi)
        tau = build_hopf_extension(system, system.temperature_bc_values())
        consts[d] = estimate_hopf_bound_constant(system, tau, config.hopf_samples, seed=config.seed)
    vals = list(consts.values())
    ratio = max(vals) / min(vals) if min(vals) > 0 else math.inf
    return {"constants": consts, "ratio": ratio, "ok": ratio <= 2.0}


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    over = {}
    if args.out is not None:
        over["out_dir"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    return dataclasses.replace(cfg, **over) if over else cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="natconv", description="Boussinesq cavity experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run an experiment and check its invariants"),
                        ("rates", "manufactured-solution convergence rates"),
                        ("check-hopf", "sample the Hopf extension bound across layer widths")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "rates":
            p.add_argument("--kind", choices=("temporal", "spatial"), default="temporal")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = _load(args)
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.command == "run":
            report = run_experiment(cfg)
            print(report.summary())
            return report.exit_code
        if args.command == "rates":
            table = manufactured_rates(cfg, args.kind)
            lines = table.lines()
            with open(os.path.join(cfg.out_dir, f"rates_{args.kind}.txt"), "w") as fh:
                fh.write("\n".join(lines) + "\n")
            if cfg.plots:
                from .plotting import plot_rates
                plot_rates(table, os.path.join(cfg.out_dir, f"rates_{args.kind}.png"))
            print("\n".join(lines))
            return 0 if table.monotone else 1
        res = check_hopf(cfg)
        lines = [f"delta={d:g} C_meas={c:.6e}" for d, c in res["constants"].items()]
        lines.append(f"max/min ratio {res['ratio']:.4f} ({'ok' if res['ok'] else 'exceeds 2'})")
        with open(os.path.join(cfg.out_dir, "hopf.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines))
        return 0 if res["ok"] else 1
    except (ConfigError, ExperimentError, ValueError, OSError) as exc:
        cause = f" ({type(exc.__cause__).__name__})" if exc.__cause__ is not None else ""
        print(f"error{cause}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
