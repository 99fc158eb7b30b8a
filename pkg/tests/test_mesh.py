import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natconv.mesh import (GAMMA_2, GAMMA_H, GAMMA_N, CavityPreset, GradingError, MeshError,
                          delta_from_rayleigh, generate_graded_mesh, graded_axis, heated_sidewalls,
                          load_mesh, rayleigh_benard, save_mesh, uniform_mesh, validate_mesh)


def test_uniform_4x4_layer_equals_core():
    mesh = generate_graded_mesh(heated_sidewalls(), 4, 0.25)
    xs = np.unique(mesh.vertices[:, 0])
    assert np.allclose(xs, [0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.h_max == pytest.approx(np.sqrt(2) / 4)
    rep = validate_mesh(mesh)
    assert rep.valid
    assert rep.delta == pytest.approx(0.25)


def test_graded_first_line_at_delta():
    mesh = generate_graded_mesh(heated_sidewalls(), 8, 1e-3, n_layers=6, stretch=2.0)
    xs = np.unique(mesh.vertices[:, 0])
    assert xs[1] == pytest.approx(1e-3, rel=1e-12)
    assert 1 - xs[-2] == pytest.approx(1e-3, rel=1e-9)
    # y is not graded for heated sidewalls
    ys = np.unique(mesh.vertices[:, 1])
    assert np.allclose(np.diff(ys), 1 / 8)
    assert validate_mesh(mesh).valid


def test_rayleigh_benard_grades_y():
    mesh = generate_graded_mesh(rayleigh_benard(), 8, 1e-2, n_layers=3, stretch=2.0)
    ys = np.unique(mesh.vertices[:, 1])
    assert ys[1] == pytest.approx(1e-2)
    bottom = mesh.boundary_edges[mesh.edge_tags == GAMMA_N]
    assert np.all(mesh.vertices[bottom.ravel(), 1] == 0.0)
    top = mesh.boundary_edges[mesh.edge_tags == GAMMA_H]
    assert np.all(mesh.vertices[top.ravel(), 1] == 1.0)


def test_delta_above_core_spacing_rejected():
    with pytest.raises(GradingError):
        generate_graded_mesh(heated_sidewalls(), 8, 0.2)


def test_bad_inputs():
    with pytest.raises(MeshError):
        generate_graded_mesh(heated_sidewalls(), 8, 0.0)
    with pytest.raises(MeshError):
        CavityPreset("Custom", side_tags={s: "Gamma2" for s in ("bottom", "right", "top", "left")})
    with pytest.raises(MeshError):
        CavityPreset(xi=(1.0, 1.0))


def test_area_and_orientation():
    mesh = generate_graded_mesh(heated_sidewalls(2.0, 1.0), 6, 1e-2, 3, 1.5)
    a = mesh.signed_areas()
    assert np.all(a > 0)
    assert a.sum() == pytest.approx(2.0, rel=1e-13)


def test_validate_detects_flipped_and_untagged():
    mesh = uniform_mesh(heated_sidewalls(), 3)
    tri = mesh.triangles.copy()
    tri[0] = tri[0][[0, 2, 1]]
    bad = type(mesh)(mesh.vertices, tri, mesh.boundary_edges, mesh.edge_tags, mesh.delta)
    kinds = {v[0] for v in validate_mesh(bad).violations}
    assert "orientation" in kinds
    bad2 = type(mesh)(mesh.vertices, mesh.triangles, mesh.boundary_edges[1:], mesh.edge_tags[1:], mesh.delta)
    assert any(v[0] == "tagging" for v in validate_mesh(bad2).violations)


def test_layer_violation_reported():
    mesh = uniform_mesh(heated_sidewalls(), 4)
    shrunk = type(mesh)(mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.edge_tags, 0.1)
    assert any(v[0] == "layer" for v in validate_mesh(shrunk).violations)


def test_delta_from_rayleigh():
    assert delta_from_rayleigh(1e3) == pytest.approx(1e-3)
    assert delta_from_rayleigh(1e4, 2.0) == pytest.approx(2e-4)


def test_save_load_bit_exact(tmp_path):
    mesh = generate_graded_mesh(rayleigh_benard(), 5, 3e-3, 4, 1.7)
    path = tmp_path / "m.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.same_as(mesh)


@settings(max_examples=30, deadline=None)
@given(n_core=st.integers(3, 12), exp=st.floats(-4, -1.2), n_layers=st.integers(1, 8),
       stretch=st.floats(1.0, 3.0))
def test_graded_axis_properties(n_core, exp, n_layers, stretch):
    delta = 10**exp
    if delta > 1.0 / n_core:
        return
    xs = graded_axis(1.0, n_core, delta, n_layers, stretch, True, True)
    assert xs[0] == 0.0 and xs[-1] == 1.0
    assert np.all(np.diff(xs) > 0)
    assert xs[1] == pytest.approx(delta)
    assert 1 - xs[-2] == pytest.approx(delta, rel=1e-9, abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 8), kind=st.sampled_from(["HeatedSidewalls", "RayleighBenard"]))
def test_every_boundary_edge_tagged_once(n, kind):
    mesh = uniform_mesh(CavityPreset(kind), n)
    assert len(mesh.boundary_edges) == 4 * n
    assert set(np.unique(mesh.edge_tags)) == {GAMMA_N, GAMMA_H, GAMMA_2}
    assert validate_mesh(mesh).valid
