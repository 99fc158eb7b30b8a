import numpy as np
import pytest

from natconv.fem import build_fe_system
from natconv.hopf import build_hopf_extension
from natconv.mesh import generate_graded_mesh, heated_sidewalls, uniform_mesh
from natconv.steppers import (SCHEMES, PicardError, PicardOptions, SchemeConfig, SchemeError, advance,
                              bdf2_startup, init_state, simulate, solve_saddle, step)


@pytest.fixture(scope="module")
def setup():
    s = build_fe_system(generate_graded_mesh(heated_sidewalls(), 4, 1e-2, 2, 2.0))
    hopf = build_hopf_extension(s, s.temperature_bc_values())
    zero = build_hopf_extension(s, np.zeros(len(s.temp_bc)))
    return s, hopf, zero


def test_stokes_polynomial_exactness():
    # u = (y^2, x^2) is solenoidal, p = x + y - 1 has zero mean, -Lap u + grad p = (-1, -1)
    s = build_fe_system(uniform_mesh(heated_sidewalls(), 3))
    X = s.vel.coords
    u_ex = np.concatenate([X[:, 1] ** 2, X[:, 0] ** 2])
    P = s.pres.coords
    p_ex = P[:, 0] + P[:, 1] - 1
    F = s.load_vector(lambda x, y: (-2.0 + 1.0 + 0 * x, -2.0 + 1.0 + 0 * x))
    u, p = solve_saddle(s, s.A_u, F, bc_values=u_ex[s.vel_bc])
    assert np.abs(u - u_ex).max() < 1e-10
    assert np.abs(p - p_ex).max() < 1e-10
    assert abs(s.p_mean @ p) < 1e-12


def test_saddle_zero_rhs(setup):
    s, _, _ = setup
    u, p = solve_saddle(s, s.A_u, np.zeros(s.n_u))
    assert not u.any() and not p.any()


def test_config_validation():
    with pytest.raises(SchemeError):
        SchemeConfig(scheme="RK4")
    with pytest.raises(SchemeError):
        SchemeConfig(dt=0)
    with pytest.raises(SchemeError):
        SchemeConfig(xi=(1.0, 1.0))
    c = SchemeConfig(scheme="LI_BDF2")
    assert (c.a_minus1, c.a_0) == (2.0, -1.0)
    assert c.bdf2 and c.linearly_implicit


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_data_zero_state(setup, scheme):
    s, _, zero = setup
    cfg = SchemeConfig(scheme=scheme, dt=0.1, n_steps=3)
    out = simulate(s, zero, cfg, init_state(s, hopf=zero))
    assert not out.u.any() and not out.T.any() and not out.p.any()


def test_bdf2_needs_history(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="BDF2", dt=0.1)
    with pytest.raises(SchemeError):
        step(init_state(s, hopf=hopf), cfg, s, hopf)


def test_startup_flag(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="LI_BDF2", dt=0.05)
    s0 = init_state(s, T0=lambda x, y: 1 - x, hopf=hopf)
    s1 = bdf2_startup(s0, cfg, s, hopf)
    assert s1.info.startup
    assert np.array_equal(s1.T_prev, s0.T)
    s2 = advance(s1, cfg, s, hopf)
    assert not s2.info.startup


def test_li_is_two_solves_and_decays(setup):
    s, _, zero = setup
    cfg = SchemeConfig(scheme="LI_BDF1", dt=0.05)
    s0 = init_state(s, T0=lambda x, y: np.sin(np.pi * x), hopf=zero)
    s1 = step(s0, cfg, s, zero)
    assert s1.info.linear_solves == 2 and s1.info.picard_iters == 0
    assert s.l2_T(s1.T) < s.l2_T(s0.T)


def test_dirichlet_and_incompressibility(setup):
    s, hopf, _ = setup
    for scheme in SCHEMES:
        cfg = SchemeConfig(scheme=scheme, dt=0.02, n_steps=4, Ra=1e4)
        out = simulate(s, hopf, cfg, init_state(s, T0=lambda x, y: 1 - x, hopf=hopf))
        assert np.array_equal(out.T[hopf.boundary_dofs], hopf.boundary_values)
        assert not out.u[s.vel_bc].any()
        assert np.linalg.norm(s.B @ out.u) <= 1e-10 * s.l2_u(out.u)
        assert abs(s.p_mean @ out.p) <= 1e-12


def test_picard_converges_and_fails_when_capped(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="BDF1", dt=0.05, Ra=1e4)
    s0 = init_state(s, T0=lambda x, y: 1 - x, hopf=hopf)
    s1 = step(s0, cfg, s, hopf)
    assert s1.info.picard_history[-1] <= 1e-9
    tight = SchemeConfig(scheme="BDF1", dt=0.05, Ra=1e4, picard=PicardOptions(max_iters=1))
    with pytest.raises(PicardError) as err:
        step(s0, tight, s, hopf)
    assert len(err.value.history) == 1


def test_deterministic(setup):
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="BDF2", dt=0.02, n_steps=5, Ra=1e4)
    a = simulate(s, hopf, cfg, init_state(s, T0=lambda x, y: 1 - x, hopf=hopf))
    b = simulate(s, hopf, cfg, init_state(s, T0=lambda x, y: 1 - x, hopf=hopf))
    assert np.array_equal(a.u, b.u) and np.array_equal(a.T, b.T) and np.array_equal(a.p, b.p)


def test_conduction_state_is_steady_without_gravity_coupling(setup):
    # with Ra tiny the linear conduction profile 1 - x is (almost) steady
    s, hopf, _ = setup
    cfg = SchemeConfig(scheme="LI_BDF1", dt=0.1, n_steps=3, Ra=1e-12)
    s0 = init_state(s, T0=lambda x, y: 1 - x, hopf=hopf)
    out = simulate(s, hopf, cfg, s0)
    assert np.abs(out.T - s0.T).max() < 1e-10
