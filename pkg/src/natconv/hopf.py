"""Discrete Hopf extension of the Gamma_1 temperature data.

The extension is a temperature-space field that reproduces the Dirichlet
data on Gamma_1 and vanishes outside the first layer of elements touching
Gamma_1.  Subtracting it homogenizes the temperature: theta = T - tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FeSystem, trilinear_b_star


class HopfError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HopfExtension:
    coefficients: np.ndarray
    support_elements: np.ndarray
    delta: float
    boundary_dofs: np.ndarray
    boundary_values: np.ndarray


def _boundary_values(system: FeSystem, boundary_data):
    dofs = system.temp_bc
    if callable(boundary_data):
        xy = system.temp.coords[dofs]
        vals = np.broadcast_to(np.asarray(boundary_data(xy[:, 0], xy[:, 1]), float), dofs.shape)
        return np.array(vals)
    if isinstance(boundary_data, dict):
        missing = [int(d) for d in dofs if int(d) not in boundary_data]
        if missing:
            raise HopfError(f"no boundary datum for Gamma_1 dofs {missing[:10]}")
        extra = set(boundary_data) - set(int(d) for d in dofs)
        if extra:
            raise HopfError(f"boundary data given off Gamma_1 at dofs {sorted(extra)[:10]}")
        return np.array([boundary_data[int(d)] for d in dofs], dtype=float)
    vals = np.asarray(boundary_data, dtype=float)
    if vals.shape != dofs.shape:
        raise HopfError(f"expected {len(dofs)} Gamma_1 values, got shape {vals.shape}")
    return vals.copy()


def build_hopf_extension(system: FeSystem, boundary_data) -> HopfExtension:
    """Assemble tau = sum_i T_i psi_i from the Gamma_1 nodal basis functions.

    ``boundary_data`` is an array aligned with ``system.temp_bc``, a dict
    ``{dof: value}`` covering every Gamma_1 dof, or a callable ``g(x, y)``.
    """
    mesh = system.mesh
    if not len(system.temp_bc):
        raise HopfError("mesh has no Gamma_1 edges")
    values = _boundary_values(system, boundary_data)
    if not np.all(np.isfinite(values)):
        raise HopfError("boundary data must be finite")

    # elements meeting Gamma_1
    layer = mesh.gamma1_elements()
    on_gamma1 = np.zeros(system.n_T, dtype=bool)
    on_gamma1[system.temp_bc] = True
    # per element, the local nodal functions equal to one at a Gamma_1 node
    local = system.temp.cell_dofs[layer]
    selected = np.unique(local[on_gamma1[local]])
    # tau = sum of the selected functions weighted by the nodal data
    datum = np.zeros(system.n_T)
    datum[system.temp_bc] = values
    coef = np.zeros(system.n_T)
    coef[selected] = datum[selected]
    return HopfExtension(coef, layer, float(mesh.delta), system.temp_bc.copy(), values)


def explicit_hopf_profile(delta: float, x):
    """Classical one-dimensional Hopf profile on [0, 1]."""
    if not 0 < delta < 0.5:
        raise HopfError("delta must lie in (0, 1/2)")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise HopfError("coordinate outside [0, 1]")
    out = np.where(x <= delta, (2 * delta - x) / (2 * delta), 0.5)
    out = np.where(x >= 1 - delta, (1 - x) / (2 * delta), out)
    return out if out.ndim else float(out)


def random_free_fields(system: FeSystem, rng, zero_on_support=None):
    """Standard-normal velocity/temperature coefficients, zero on Dirichlet dofs."""
    chi1 = rng.standard_normal(system.n_u)
    chi1[system.vel_bc] = 0.0
    chi2 = rng.standard_normal(system.n_T)
    chi2[system.temp_bc] = 0.0
    if zero_on_support is not None:
        chi2[np.unique(system.temp.cell_dofs[zero_on_support])] = 0.0
    return chi1, chi2


def estimate_hopf_bound_constant(system: FeSystem, tau: HopfExtension, n_samples: int,
                                 seed: int = 0, eps: float = 1.0,
                                 chi2_off_support: bool = False) -> float:
    """Largest sampled |b*(chi1, tau, chi2)| / (delta (||grad chi1||^2/eps + eps ||grad chi2||^2)).

    With ``chi2_off_support`` the temperature samples vanish on every
    element of the extension's support.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    off = tau.support_elements if chi2_off_support else None
    for _ in range(n_samples):
        chi1, chi2 = random_free_fields(system, rng, off)
        denom = tau.delta * (system.h1_u(chi1) ** 2 / eps + eps * system.h1_T(chi2) ** 2)
        if denom == 0.0:
            continue
        r = abs(trilinear_b_star(system, chi1, tau.coefficients, chi2)) / denom
        worst = max(worst, r)
    return worst
