import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natconv.diagnostics import (ACCUMULATORS, StabilityLedger, StepEntry, check_energy_identity,
                                 check_sublinear_growth, record_step, theorem_lhs)
from natconv.fem import build_fe_system
from natconv.hopf import build_hopf_extension
from natconv.mesh import generate_graded_mesh, heated_sidewalls
from natconv.steppers import SCHEMES, SchemeConfig, advance, init_state


@pytest.fixture(scope="module")
def setup():
    s = build_fe_system(generate_graded_mesh(heated_sidewalls(), 4, 1e-2, 2, 2.0))
    hopf = build_hopf_extension(s, s.temperature_bc_values())
    zero = build_hopf_extension(s, np.zeros(len(s.temp_bc)))
    return s, hopf, zero


def _run(s, hopf, cfg, T0):
    state = init_state(s, T0=T0, hopf=hopf)
    led = StabilityLedger.for_run(cfg, s, hopf, state)
    states = [state]
    for _ in range(cfg.n_steps):
        new = advance(state, cfg, s, hopf)
        record_step(led, state, new, s, hopf, cfg)
        states.append(new)
        state = new
    return led, states


def _forcing(x, y, t):
    return np.sin(np.pi * x) * np.cos(t), 0.3 * y


def _source(x, y, t):
    return 1.0 + x * y * t


@pytest.mark.parametrize("scheme", SCHEMES)
def test_identities_hold_with_data(setup, scheme):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme=scheme, dt=0.05, n_steps=6, Ra=1e4, forcing=_forcing, heat_source=_source)
    led, _ = _run(s, hopf, cfg, lambda x, y: 1 - x)
    for e in led.entries:
        assert abs(e.res_T) <= 1e-10 * e.scale_T
        assert abs(e.res_u) <= 1e-10 * e.scale_u
    # the tau term is generally nonzero and is carried explicitly
    assert any(abs(e.grad_tau_theta) > 1e-8 for e in led.entries)


def test_identity_detects_corruption(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="LI_BDF1", dt=0.05, n_steps=1, Ra=1e4)
    _, (s0, s1) = _run(s, hopf, cfg, lambda x, y: 1 - x)
    T = s1.T.copy()
    T[s.temp_free] += 1e-3
    bad = dataclasses.replace(s1, T=T)
    r = check_energy_identity(s0, bad, s, hopf, cfg)
    assert abs(r.temperature) > 1e-6 * r.scale_T


def test_zero_step_zero_residual(setup):
    s, _, zero = setup
    cfg = SchemeConfig(scheme="BDF1", dt=0.1, n_steps=2)
    led, _ = _run(s, zero, cfg, None)
    for e in led.entries:
        assert e.res_T == 0.0 and e.res_u == 0.0
        assert e.T == 0.0 and e.u == 0.0 and e.p == 0.0
    assert theorem_lhs(led) == 0.0


def test_decay_recorded(setup):
    s, _, zero = setup
    cfg = SchemeConfig(scheme="LI_BDF1", dt=0.05, n_steps=1)
    led, _ = _run(s, zero, cfg, lambda x, y: np.sin(np.pi * x))
    assert led.entries[0].T < led.initial["T"]


def test_accumulators_recompute(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="LI_BDF2", dt=0.05, n_steps=5, Ra=1e4)
    led, _ = _run(s, hopf, cfg, lambda x, y: 1 - x)
    fresh = led.recompute_accumulators()
    for k in ACCUMULATORS:
        assert fresh[k] == led.acc[k]
    assert led.startup_first_order


def test_ledger_invariants(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="BDF2", dt=0.05, n_steps=4, Ra=1e4)
    led, _ = _run(s, hopf, cfg, lambda x, y: 1 - x)
    for e in led.entries:
        assert e.t == e.n * cfg.dt
        vals = [e.T, e.theta, e.u, e.grad_T, e.grad_u, e.p, e.dT, e.du]
        assert all(v >= 0 for v in vals)
        assert e.T <= e.theta + led.tau_l2 + 1e-14


def _entry(n, **kw):
    base = dict(n=n, t=0.1 * n, T=0.0, theta=0.0, u=0.0, grad_T=0.0, grad_u=0.0, p=0.0, dT=0.0, du=0.0,
                d2T=0.0, d2u=0.0, extT=0.0, extu=0.0, res_T=0.0, res_u=0.0, scale_T=0.0, scale_u=0.0,
                grad_tau_theta=0.0, div_u=0.0, p_mean=0.0, picard_iters=0, startup=False)
    base.update(kw)
    return StepEntry(**base)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_lhs_term_isolation(scheme):
    led = StabilityLedger(0.1, scheme, 0.71, 1e3, 1e-3)
    led.entries = [_entry(1), _entry(2), _entry(3, T=2.0, u=3.0, extT=5.0, extu=7.0)]
    expect = 0.5 * 4 + 9
    if scheme.endswith("BDF2"):
        expect += 0.5 * 25 + 49
    assert theorem_lhs(led) == pytest.approx(expect, rel=1e-15)


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.tuples(*[st.floats(0, 10)] * 8), min_size=2, max_size=6),
       scheme=st.sampled_from(SCHEMES))
def test_lhs_double_entry(vals, scheme):
    dt, Pr = 0.1, 0.71
    led = StabilityLedger(dt, scheme, Pr, 1e3, 1e-3)
    led.entries = [_entry(k + 1, T=a, u=b, grad_T=c, grad_u=d, dT=e, du=f, d2T=g, d2u=h, extT=a + 1, extu=b + 1)
                   for k, (a, b, c, d, e, f, g, h) in enumerate(vals)]
    E = led.entries
    N = len(E)
    if scheme in ("BDF1", "LI_BDF1"):
        ref = 0.5 * E[-1].T ** 2 + E[-1].u ** 2 + sum(x.dT ** 2 + x.du ** 2 for x in E)
        ref += dt / 4 * sum(x.grad_T ** 2 for x in E)
        gu = sum(x.grad_u ** 2 for x in E)
        ref += Pr * dt / 4 * gu if scheme == "BDF1" else Pr * dt / 8 * (gu + E[-1].grad_u ** 2)
    else:
        ref = 0.5 * E[-1].T ** 2 + 0.5 * E[-1].extT ** 2 + E[-1].u ** 2 + E[-1].extu ** 2
        for x in E[1:]:
            ref += x.d2T ** 2 + x.d2u ** 2 + dt / 2 * x.grad_T ** 2 + Pr * dt / 2 * x.grad_u ** 2
        if scheme == "LI_BDF2":
            ref += Pr * dt / 2 * (E[-1].grad_u ** 2 + E[N - 2].grad_u ** 2)
    assert theorem_lhs(led) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_lhs_scheme_mismatch():
    led = StabilityLedger(0.1, "BDF1", 0.71, 1e3, 1e-3)
    led.entries = [_entry(1)]
    with pytest.raises(ValueError):
        theorem_lhs(led, "BDF2")


def test_growth_checks(setup):
    s, _, zero = setup
    cfg = SchemeConfig(scheme="LI_BDF1", dt=0.05, n_steps=8)
    led, _ = _run(s, zero, cfg, lambda x, y: np.sin(np.pi * x))
    rep = check_sublinear_growth(led, [2, 4, 8])
    assert all(b < a for a, b in zip(rep.Q, rep.Q[1:]))
    assert rep.exponent <= 0 and rep.q_ok
    with pytest.raises(ValueError):
        check_sublinear_growth(led, [2, 4])
    with pytest.raises(ValueError):
        check_sublinear_growth(led, [4, 2, 8])
    with pytest.raises(ValueError):
        check_sublinear_growth(led, [2, 4, 16])
    assert math.isfinite(rep.q_ratio)
