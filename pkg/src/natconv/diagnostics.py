"""Per-step norms, discrete energy identities and growth checks.

The energy identities are the exact equalities obtained by testing the
temperature equation with theta^{n+1} = T^{n+1} - tau and the momentum
equation with u^{n+1}.  They are evaluated term by term with quadrature,
independently of the matrices used by the solver, so a non-zero residual
points at an assembly or solver defect.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .fem import FeSystem, trilinear_b_star
from .hopf import HopfExtension
from .steppers import SchemeConfig, SchemeState


@dataclass
class IdentityResidual:
    temperature: float
    momentum: float
    scale_T: float
    scale_u: float
    grad_tau_theta: float  # dt (grad tau, grad theta^{n+1}), kept in the identity

    @property
    def rel_temperature(self) -> float:
        return abs(self.temperature) / self.scale_T if self.scale_T else abs(self.temperature)

    @property
    def rel_momentum(self) -> float:
        return abs(self.momentum) / self.scale_u if self.scale_u else abs(self.momentum)


@dataclass
class StepEntry:
    n: int
    t: float
    T: float
    theta: float
    u: float
    grad_T: float
    grad_u: float
    p: float
    dT: float
    du: float
    d2T: float  # ||T^{n+1} - 2T^n + T^{n-1}||, nan without history
    d2u: float
    extT: float  # ||2T^{n+1} - T^n||
    extu: float
    res_T: float
    res_u: float
    scale_T: float
    scale_u: float
    grad_tau_theta: float
    div_u: float  # ||B u^{n+1}||
    p_mean: float
    picard_iters: int
    startup: bool


@dataclass
class StabilityLedger:
    dt: float
    scheme: str
    Pr: float
    Ra: float
    delta: float
    c_delta: float = float("nan")
    beta_h: float = float("nan")
    tau_l2: float = 0.0
    initial: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    acc: dict = field(default_factory=lambda: dict.fromkeys(ACCUMULATORS, 0.0))

    @classmethod
    def for_run(cls, config: SchemeConfig, system: FeSystem, hopf: HopfExtension,
                state0: SchemeState, **meta):
        led = cls(config.dt, config.scheme, config.Pr, config.Ra, hopf.delta,
                  tau_l2=system.l2_T(hopf.coefficients), **meta)
        led.initial = {"T": system.l2_T(state0.T), "u": system.l2_u(state0.u),
                       "theta": system.l2_T(state0.T - hopf.coefficients),
                       "grad_u": system.h1_u(state0.u)}
        return led

    @property
    def startup_first_order(self) -> bool:
        # BDF2 runs always start with one first-order step
        if self.entries:
            return self.entries[0].startup
        return self.scheme in ("BDF2", "LI_BDF2")

    def column(self, name) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries], dtype=float)

    def recompute_accumulators(self) -> dict:
        acc = dict.fromkeys(ACCUMULATORS, 0.0)
        for e in self.entries:
            _accumulate(acc, e, self.dt)
        return acc

    def metadata(self) -> dict:
        return {"scheme": self.scheme, "dt": self.dt, "Pr": self.Pr, "Ra": self.Ra,
                "delta": self.delta, "c_delta": self.c_delta, "beta_h": self.beta_h,
                "tau_l2": self.tau_l2, "startup_first_order": self.startup_first_order}


ACCUMULATORS = ("sum_gradT2_dt", "sum_gradu2_dt", "sum_dT2", "sum_du2",
                "sum_d2T2", "sum_d2u2", "sum_p_dt")


def _accumulate(acc, e: StepEntry, dt):
    acc["sum_gradT2_dt"] += e.grad_T**2 * dt
    acc["sum_gradu2_dt"] += e.grad_u**2 * dt
    acc["sum_dT2"] += e.dT**2
    acc["sum_du2"] += e.du**2
    if not math.isnan(e.d2T):
        acc["sum_d2T2"] += e.d2T**2
        acc["sum_d2u2"] += e.d2u**2
    acc["sum_p_dt"] += e.p * dt


# --------------------------------------------------------------------------
# energy identities
# --------------------------------------------------------------------------

def _l2sq_T(system, v):
    val, _ = system.eval_scalar(v)
    return system.integrate(val**2)


def _h1sq_T(system, v):
    _, g = system.eval_scalar(v)
    return system.integrate(np.sum(g**2, axis=-1))


def _l2sq_u(system, v):
    val, _ = system.eval_vector(v)
    return system.integrate(np.sum(val**2, axis=-1))


def _h1sq_u(system, v):
    _, g = system.eval_vector(v)
    return system.integrate(np.sum(g**2, axis=(-1, -2)))


def _func_at_quad(system, func, t, vector):
    x, y = system.xq[..., 0], system.xq[..., 1]
    if func is None:
        return np.zeros(x.shape + ((2,) if vector else ()))
    out = func(x, y, t)
    if vector:
        return np.stack([np.broadcast_to(np.asarray(c, float), x.shape) for c in out], axis=-1)
    return np.broadcast_to(np.asarray(out, float), x.shape)


def check_energy_identity(before: SchemeState, after: SchemeState, system: FeSystem,
                          hopf: HopfExtension, config: SchemeConfig) -> IdentityResidual:
    """LHS - RHS of the temperature (tested with theta) and momentum (tested with u) identities.

    Uses the advecting field and buoyancy temperature recorded in
    ``after.info``.  BDF2 steps use the G-norm form; the startup step of a
    BDF2 run is first order and uses the BDF1 form.
    """
    dt, tau = config.dt, hopf.coefficients
    info = after.info
    adv, T_eta = info.adv, info.T_eta
    second_order = config.bdf2 and not info.startup and before.T_prev is not None

    th1, th0 = after.T - tau, before.T - tau
    u1, u0 = after.u, before.u
    if second_order:
        thm = before.T_prev - tau
        um = before.u_prev
        lhs_T = [0.25 * (_l2sq_T(system, th1) + _l2sq_T(system, 2 * th1 - th0)),
                 -0.25 * (_l2sq_T(system, th0) + _l2sq_T(system, 2 * th0 - thm)),
                 0.25 * _l2sq_T(system, th1 - 2 * th0 + thm)]
        lhs_u = [0.25 * (_l2sq_u(system, u1) + _l2sq_u(system, 2 * u1 - u0)),
                 -0.25 * (_l2sq_u(system, u0) + _l2sq_u(system, 2 * u0 - um)),
                 0.25 * _l2sq_u(system, u1 - 2 * u0 + um)]
    else:
        lhs_T = [0.5 * _l2sq_T(system, th1), -0.5 * _l2sq_T(system, th0),
                 0.5 * _l2sq_T(system, th1 - th0)]
        lhs_u = [0.5 * _l2sq_u(system, u1), -0.5 * _l2sq_u(system, u0),
                 0.5 * _l2sq_u(system, u1 - u0)]

    _, g_tau = system.eval_scalar(tau)
    th_val, g_th = system.eval_scalar(th1)
    grad_tau_theta = dt * system.integrate(np.sum(g_tau * g_th, axis=-1))
    lhs_T += [dt * _h1sq_T(system, th1), grad_tau_theta]
    gamma = _func_at_quad(system, config.heat_source, after.t, vector=False)
    rhs_T = [-dt * trilinear_b_star(system, adv, tau, th1),
             dt * system.integrate(gamma * th_val)]

    u_val, _ = system.eval_vector(u1)
    Teta_val, _ = system.eval_scalar(T_eta)
    f = _func_at_quad(system, config.forcing, after.t, vector=True)
    lhs_u += [config.Pr * dt * _h1sq_u(system, u1)]
    rhs_u = [dt * config.Pr * config.Ra * system.integrate(Teta_val * (u_val @ system.xi)),
             dt * system.integrate(np.sum(f * u_val, axis=-1))]

    res_T = sum(lhs_T) - sum(rhs_T)
    res_u = sum(lhs_u) - sum(rhs_u)
    scale_T = max(abs(x) for x in lhs_T + rhs_T)
    scale_u = max(abs(x) for x in lhs_u + rhs_u)
    return IdentityResidual(res_T, res_u, scale_T, scale_u, grad_tau_theta)


# --------------------------------------------------------------------------
# ledger
# --------------------------------------------------------------------------

def record_step(ledger: StabilityLedger, before: SchemeState, after: SchemeState,
                system: FeSystem, hopf: HopfExtension, config: SchemeConfig,
                identity: Optional[IdentityResidual] = None) -> StabilityLedger:
    if identity is None:
        identity = check_energy_identity(before, after, system, hopf, config)
    T1, T0, u1, u0 = after.T, before.T, after.u, before.u
    has_prev = before.T_prev is not None
    nan = float("nan")
    e = StepEntry(
        n=after.n, t=after.n * config.dt,
        T=system.l2_T(T1), theta=system.l2_T(T1 - hopf.coefficients), u=system.l2_u(u1),
        grad_T=system.h1_T(T1), grad_u=system.h1_u(u1), p=system.l2_p(after.p),
        dT=system.l2_T(T1 - T0), du=system.l2_u(u1 - u0),
        d2T=system.l2_T(T1 - 2 * T0 + before.T_prev) if has_prev else nan,
        d2u=system.l2_u(u1 - 2 * u0 + before.u_prev) if has_prev else nan,
        extT=system.l2_T(2 * T1 - T0), extu=system.l2_u(2 * u1 - u0),
        res_T=identity.temperature, res_u=identity.momentum,
        scale_T=identity.scale_T, scale_u=identity.scale_u,
        grad_tau_theta=identity.grad_tau_theta,
        div_u=float(np.linalg.norm(system.B @ u1)),
        p_mean=float(system.p_mean @ after.p),
        picard_iters=after.info.picard_iters if after.info else 0,
        startup=bool(after.info and after.info.startup),
    )
    ledger.entries.append(e)
    _accumulate(ledger.acc, e, ledger.dt)
    return ledger


def theorem_lhs(ledger: StabilityLedger, scheme: Optional[str] = None, upto: Optional[int] = None) -> float:
    """Left-hand side of the sub-linear stability bound after ``upto`` steps."""
    scheme = scheme or ledger.scheme
    if scheme != ledger.scheme:
        raise ValueError(f"ledger holds a {ledger.scheme} run, not {scheme}")
    N = len(ledger.entries) if upto is None else upto
    if N < 1 or N > len(ledger.entries):
        raise ValueError(f"ledger has {len(ledger.entries)} steps, asked for {N}")
    ents = ledger.entries[:N]
    last = ents[-1]
    dt, Pr = ledger.dt, ledger.Pr
    if scheme in ("BDF1", "LI_BDF1"):
        lhs = 0.5 * last.T**2 + last.u**2
        lhs += sum(e.dT**2 + e.du**2 for e in ents)
        lhs += dt / 4 * sum(e.grad_T**2 for e in ents)
        if scheme == "BDF1":
            lhs += Pr * dt / 4 * sum(e.grad_u**2 for e in ents)
        else:
            lhs += Pr * dt / 8 * sum(e.grad_u**2 for e in ents) + Pr * dt / 8 * last.grad_u**2
        return lhs
    # second order: sums over n = 1..N-1, i.e. entries for levels 2..N
    tail = ents[1:]
    lhs = 0.5 * last.T**2 + 0.5 * last.extT**2 + last.u**2 + last.extu**2
    lhs += sum(e.d2T**2 + e.d2u**2 for e in tail)
    lhs += dt / 2 * sum(e.grad_T**2 for e in tail)
    lhs += Pr * dt / 2 * sum(e.grad_u**2 for e in tail)
    if scheme == "LI_BDF2":
        prev_grad_u = ents[-2].grad_u if N >= 2 else ledger.initial.get("grad_u", 0.0)
        lhs += Pr * dt / 2 * (last.grad_u**2 + prev_grad_u**2)
    return lhs


@dataclass
class GrowthReport:
    checkpoints: list
    t_star: list
    Q: list
    P: list
    q_ratio: float
    p_ratio: float
    margin: float
    exponent: float
    exponent_margin: float

    @property
    def q_ok(self) -> bool:
        return self.q_ratio <= self.margin

    @property
    def p_ok(self) -> bool:
        return self.p_ratio <= self.margin

    @property
    def exponent_ok(self) -> bool:
        return self.exponent <= 0.5 + self.exponent_margin

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(q_ok=self.q_ok, p_ok=self.p_ok, exponent_ok=self.exponent_ok)
        return d


def check_sublinear_growth(ledger: StabilityLedger, checkpoints, margin: float = 1.25,
                           exponent_margin: float = 0.1) -> GrowthReport:
    """Q(t*) = LHS/t* and P(t*) = dt sum ||p|| / sqrt(t*) at increasing checkpoints.

    ``q_ratio`` is the largest later Q over the first one (same for P); the
    exponent is a least-squares slope of log ||T^n|| against log t^n.
    """
    cps = [int(c) for c in checkpoints]
    if len(cps) < 3:
        raise ValueError("need at least three checkpoints")
    if any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1:
        raise ValueError("checkpoints must be increasing step indices >= 1")
    if cps[-1] > len(ledger.entries):
        raise ValueError(f"checkpoint {cps[-1]} beyond the {len(ledger.entries)} recorded steps")
    dt = ledger.dt
    p = ledger.column("p")
    ts, Q, P = [], [], []
    for c in cps:
        t = c * dt
        ts.append(t)
        Q.append(theorem_lhs(ledger, upto=c) / t)
        P.append(float(dt * p[:c].sum() / math.sqrt(t)))
    q_ratio = max(Q[1:]) / Q[0] if Q[0] > 0 else (0.0 if max(Q[1:]) == 0 else math.inf)
    p_ratio = max(P[1:]) / P[0] if P[0] > 0 else (0.0 if max(P[1:]) == 0 else math.inf)
    T = ledger.column("T")
    t = ledger.column("t")
    ok = T > 0
    if ok.sum() >= 2:
        exponent = float(np.polyfit(np.log(t[ok]), np.log(T[ok]), 1)[0])
    else:
        exponent = float("-inf")
    return GrowthReport(cps, ts, Q, P, q_ratio, p_ratio, margin, exponent, exponent_margin)


STEP_FIELDS = [f.name for f in fields(StepEntry)]
