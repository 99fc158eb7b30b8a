"""Fully discrete BDF1/BDF2 schemes, fully and linearly implicit.

Every scheme advects with and buoys by an extrapolated pair
``eta(u), eta(T)``:

=========  ==================  ==========================
scheme     time difference     eta(chi)
=========  ==================  ==========================
BDF1       (chi1 - chi0)/dt    chi^{n+1} (Picard)
LI_BDF1    (chi1 - chi0)/dt    chi^n
BDF2       3-4-1 stencil       chi^{n+1} (Picard)
LI_BDF2    3-4-1 stencil       2 chi^n - chi^{n-1}
=========  ==================  ==========================
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FeSystem, apply_dirichlet
from .hopf import HopfExtension

log = logging.getLogger(__name__)

SCHEMES = ("BDF1", "LI_BDF1", "BDF2", "LI_BDF2")

# (a_{-1}, a_0): weights of eta on the newest and next level
ETA_COEFFICIENTS = {
    "BDF1": (1.0, 0.0),
    "LI_BDF1": (0.0, 1.0),
    "BDF2": (1.0, 0.0),
    # applied to (chi^n, chi^{n-1}), i.e. eta = 2 chi^n - chi^{n-1}
    "LI_BDF2": (2.0, -1.0),
}


class SchemeError(RuntimeError):
    pass


class SaddleSolveError(SchemeError):
    pass


class PicardError(SchemeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class PicardOptions:
    max_iters: int = 50
    tol_rel: float = 1e-9


@dataclass
class SchemeConfig:
    scheme: str = "LI_BDF2"
    dt: float = 1e-2
    n_steps: int = 100
    Pr: float = 0.71
    Ra: float = 1e3
    xi: tuple = (0.0, -1.0)
    forcing: Optional[Callable] = None  # f(x, y, t) -> (fx, fy)
    heat_source: Optional[Callable] = None  # gamma(x, y, t)
    picard: PicardOptions = field(default_factory=PicardOptions)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SchemeError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.dt <= 0 or self.Pr <= 0 or self.Ra <= 0:
            raise SchemeError("dt, Pr and Ra must be positive")
        if self.n_steps < 0:
            raise SchemeError("n_steps must be non-negative")
        if abs(np.hypot(*self.xi) - 1) > 1e-12:
            raise SchemeError("xi must be a unit vector")

    @property
    def a_minus1(self) -> float:
        return ETA_COEFFICIENTS[self.scheme][0]

    @property
    def a_0(self) -> float:
        return ETA_COEFFICIENTS[self.scheme][1]

    @property
    def bdf2(self) -> bool:
        return self.scheme in ("BDF2", "LI_BDF2")

    @property
    def linearly_implicit(self) -> bool:
        return self.scheme.startswith("LI_")

    @property
    def t_star(self) -> float:
        return self.n_steps * self.dt


@dataclass
class StepInfo:
    """What a step actually used: the eta fields of the final linear solves."""

    adv: np.ndarray
    T_eta: np.ndarray
    picard_iters: int = 0
    picard_history: list = field(default_factory=list)
    linear_solves: int = 0
    startup: bool = False
    wall_time: float = 0.0


@dataclass
class SchemeState:
    n: int
    t: float
    u: np.ndarray
    p: np.ndarray
    T: np.ndarray
    u_prev: Optional[np.ndarray] = None
    T_prev: Optional[np.ndarray] = None
    info: Optional[StepInfo] = None
    wall_time: float = 0.0


def init_state(system: FeSystem, u0=None, T0=None, hopf: Optional[HopfExtension] = None) -> SchemeState:
    """Nodal interpolation of the initial data with Dirichlet values imposed."""
    if u0 is None:
        u = np.zeros(system.n_u)
    else:
        u = system.interpolate_velocity(u0)
    u[system.vel_bc] = 0.0
    T = np.zeros(system.n_T) if T0 is None else system.temp.interpolate(T0)
    if hopf is not None:
        T[hopf.boundary_dofs] = hopf.boundary_values
    return SchemeState(0, 0.0, u, np.zeros(system.n_p), T)


# --------------------------------------------------------------------------
# linear solves
# --------------------------------------------------------------------------

def solve_saddle(system: FeSystem, K, rhs_u, bc_values=None, rhs_p=None, rtol: float = 1e-10):
    """Solve [K -B^T; -B 0] (u, p) = (rhs_u, rhs_p) with mean-zero pressure.

    Velocity Dirichlet values default to zero on the whole boundary.  The
    zero-mean condition enters through one Lagrange multiplier row, which
    keeps the block structure symmetric when K is.
    """
    nu, npr = system.n_u, system.n_p
    m = system.p_mean
    Z = sp.bmat([[K, -system.B.T, None],
                 [-system.B, None, sp.csr_matrix(m[:, None])],
                 [None, sp.csr_matrix(m[None, :]), None]], format="csr")
    rhs = np.concatenate([rhs_u, np.zeros(npr) if rhs_p is None else rhs_p, [0.0]])
    g = np.zeros(len(system.vel_bc)) if bc_values is None else bc_values
    Zc, bc = apply_dirichlet(system, Z, rhs, "velocity", system.vel_bc, g)
    Zc = Zc.tocsc()
    try:
        x = spla.splu(Zc).solve(bc)
    except RuntimeError as exc:
        raise SaddleSolveError(f"structurally singular saddle system: {exc}") from exc
    scale = np.linalg.norm(bc)
    res = np.linalg.norm(Zc @ x - bc)
    if not np.isfinite(res) or res > rtol * max(scale, 1e-300) and scale > 0:
        raise SaddleSolveError(f"saddle residual {res:.3e} exceeds {rtol:g} x {scale:.3e}")
    return x[:nu], x[nu:nu + npr]


def solve_temperature(system: FeSystem, K, rhs, hopf: HopfExtension):
    Kc, bc = apply_dirichlet(system, K, rhs, "temperature", hopf.boundary_dofs, hopf.boundary_values)
    try:
        return spla.splu(Kc.tocsc()).solve(bc)
    except RuntimeError as exc:
        raise SchemeError(f"singular temperature system: {exc}") from exc


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------

def _data(system: FeSystem, config: SchemeConfig, t1: float):
    F = np.zeros(system.n_u) if config.forcing is None else system.load_vector(config.forcing, t1)
    Q = np.zeros(system.n_T) if config.heat_source is None else system.load_scalar(config.heat_source, t1)
    return F, Q


def _linear_pair(system, config, hopf, c, hist_T, hist_u, adv, T_eta, F, Q, T_only=False):
    """One temperature solve and one saddle solve with frozen eta fields."""
    N = system.convection_matrix(adv)
    KT = c * system.M_T + N + system.A_T
    T1 = solve_temperature(system, KT, hist_T + Q, hopf)
    if T_eta is None:  # fully implicit: buoyancy from the fresh temperature
        T_eta = T1
    Ku = c * system.M_u + sp.block_diag([N, N], format="csr") + config.Pr * system.A_u
    rhs = hist_u + config.Pr * config.Ra * (system.G @ T_eta) + F
    u1, p1 = solve_saddle(system, Ku, rhs)
    return u1, p1, T1, T_eta


def step(state: SchemeState, config: SchemeConfig, system: FeSystem, hopf: HopfExtension,
         scheme: Optional[str] = None) -> SchemeState:
    """Advance one level; ``scheme`` overrides the configured one (startup)."""
    scheme = scheme or config.scheme
    t_start = time.perf_counter()
    dt = config.dt
    bdf2 = scheme in ("BDF2", "LI_BDF2")
    if bdf2 and (state.u_prev is None or state.T_prev is None):
        raise SchemeError(f"{scheme} needs two history levels; use bdf2_startup first")
    t1 = (state.n + 1) * dt
    F, Q = _data(system, config, t1)
    if bdf2:
        c = 1.5 / dt
        hist_T = system.M_T @ (2.0 * state.T - 0.5 * state.T_prev) / dt
        hist_u = system.M_u @ (2.0 * state.u - 0.5 * state.u_prev) / dt
    else:
        c = 1.0 / dt
        hist_T = system.M_T @ state.T / dt
        hist_u = system.M_u @ state.u / dt

    if scheme.startswith("LI_"):
        if scheme == "LI_BDF1":
            adv, T_eta = state.u, state.T
        else:
            adv = 2.0 * state.u - state.u_prev
            T_eta = 2.0 * state.T - state.T_prev
        u1, p1, T1, T_eta = _linear_pair(system, config, hopf, c, hist_T, hist_u, adv, T_eta, F, Q)
        info = StepInfo(adv=adv, T_eta=T_eta, linear_solves=2)
    else:
        opts = config.picard
        u_k, T_k = state.u, state.T
        history = []
        for it in range(1, opts.max_iters + 1):
            adv = u_k
            u1, p1, T1, T_eta = _linear_pair(system, config, hopf, c, hist_T, hist_u, adv, None, F, Q)
            num = np.sqrt(np.sum((u1 - u_k) ** 2) + np.sum((T1 - T_k) ** 2))
            den = np.sqrt(np.sum(u1**2) + np.sum(T1**2))
            upd = num / den if den > 0 else num
            history.append(float(upd))
            u_k, T_k = u1, T1
            if upd <= opts.tol_rel:
                break
        else:
            raise PicardError(f"Picard did not converge in {opts.max_iters} iterations "
                              f"(last update {history[-1]:.3e})", history)
        info = StepInfo(adv=adv, T_eta=T_eta, picard_iters=it, picard_history=history,
                        linear_solves=2 * it)
    info.wall_time = time.perf_counter() - t_start
    return SchemeState(state.n + 1, t1, u1, p1, T1,
                       u_prev=state.u if config.bdf2 else None,
                       T_prev=state.T if config.bdf2 else None,
                       info=info, wall_time=state.wall_time + info.wall_time)


def bdf2_startup(state0: SchemeState, config: SchemeConfig, system: FeSystem,
                 hopf: HopfExtension) -> SchemeState:
    """First level of a BDF2 run from one first-order step of matching implicitness."""
    starter = "LI_BDF1" if config.linearly_implicit else "BDF1"
    s1 = step(state0, config, system, hopf, scheme=starter)
    s1.info.startup = True
    return replace(s1, u_prev=state0.u, T_prev=state0.T)


def advance(state: SchemeState, config: SchemeConfig, system: FeSystem, hopf: HopfExtension) -> SchemeState:
    """One step of the configured scheme, including the BDF2 startup at n = 0."""
    if config.bdf2 and state.n == 0:
        return bdf2_startup(state, config, system, hopf)
    return step(state, config, system, hopf)


def simulate(system: FeSystem, hopf: HopfExtension, config: SchemeConfig, state0: SchemeState,
             on_step: Optional[Callable] = None) -> SchemeState:
    """Run ``config.n_steps`` steps; ``on_step(before, after)`` sees every step."""
    state = state0
    for _ in range(config.n_steps):
        new = advance(state, config, system, hopf)
        if on_step is not None:
            on_step(state, new)
        state = new
    return state
