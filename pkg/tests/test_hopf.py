import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natconv.fem import build_fe_system
from natconv.hopf import (HopfError, build_hopf_extension, estimate_hopf_bound_constant,
                          explicit_hopf_profile)
from natconv.mesh import generate_graded_mesh, heated_sidewalls, rayleigh_benard, uniform_mesh


@pytest.fixture(scope="module")
def system():
    return build_fe_system(generate_graded_mesh(heated_sidewalls(), 6, 1e-2, 3, 2.0))


def _support_dofs(system, tau):
    return np.unique(system.temp.cell_dofs[tau.support_elements])


def test_trace_and_support(system):
    tau = build_hopf_extension(system, system.temperature_bc_values())
    assert np.array_equal(tau.coefficients[system.temp_bc], system.temperature_bc_values())
    off = np.setdiff1d(np.arange(system.n_T), _support_dofs(system, tau))
    assert np.all(tau.coefficients[off] == 0.0)
    # every nonzero coefficient sits on Gamma_1
    assert set(np.flatnonzero(tau.coefficients)) <= set(system.temp_bc.tolist())
    assert tau.delta == pytest.approx(1e-2)


def test_input_forms_agree(system):
    vals = system.temperature_bc_values()
    a = build_hopf_extension(system, vals)
    b = build_hopf_extension(system, {int(d): v for d, v in zip(system.temp_bc, vals)})
    c = build_hopf_extension(system, lambda x, y: np.where(x < 0.5, 1.0, 0.0))
    assert np.array_equal(a.coefficients, b.coefficients)
    assert np.array_equal(a.coefficients, c.coefficients)


def test_bad_boundary_data(system):
    with pytest.raises(HopfError):
        build_hopf_extension(system, {int(system.temp_bc[0]): 1.0})
    with pytest.raises(HopfError):
        build_hopf_extension(system, np.zeros(3))
    with pytest.raises(HopfError):
        build_hopf_extension(system, np.full(len(system.temp_bc), np.nan))


def test_zero_data_gives_zero(system):
    tau = build_hopf_extension(system, np.zeros(len(system.temp_bc)))
    assert not tau.coefficients.any()


def test_explicit_profile():
    d = 0.1
    assert explicit_hopf_profile(d, 0.0) == pytest.approx(1.0)
    assert explicit_hopf_profile(d, d) == pytest.approx(0.5)
    assert explicit_hopf_profile(d, 0.5) == pytest.approx(0.5)
    assert explicit_hopf_profile(d, 1.0) == pytest.approx(0.0)
    with pytest.raises(HopfError):
        explicit_hopf_profile(0.6, 0.2)
    with pytest.raises(HopfError):
        explicit_hopf_profile(0.1, 1.5)


@settings(max_examples=30, deadline=None)
@given(delta=st.floats(1e-3, 0.49), x=st.floats(0, 1))
def test_explicit_profile_bounded_and_continuous(delta, x):
    v = explicit_hopf_profile(delta, x)
    assert 0.0 <= v <= 1.0
    eps = 1e-9
    lo, hi = max(0.0, x - eps), min(1.0, x + eps)
    assert abs(explicit_hopf_profile(delta, hi) - explicit_hopf_profile(delta, lo)) <= 2 * eps / (2 * delta) + 1e-12


def test_bound_constant_zero_off_support(system):
    tau = build_hopf_extension(system, system.temperature_bc_values())
    c = estimate_hopf_bound_constant(system, tau, 20, seed=1, chi2_off_support=True)
    assert c == 0.0


def test_bound_constant_deterministic(system):
    tau = build_hopf_extension(system, system.temperature_bc_values())
    a = estimate_hopf_bound_constant(system, tau, 10, seed=5)
    b = estimate_hopf_bound_constant(system, tau, 10, seed=5)
    assert a == b > 0


@pytest.mark.parametrize("preset", [heated_sidewalls(), rayleigh_benard()])
def test_uniform_preset_traces(preset):
    s = build_fe_system(uniform_mesh(preset, 3))
    tau = build_hopf_extension(s, s.temperature_bc_values())
    hot = tau.coefficients[s.temp_bc_N]
    assert np.all(hot == 1.0)
