"""Manufactured solutions for the Boussinesq system on the unit square.

Exact fields (heated-sidewall boundary conditions)::

    T* = 1 - x + h(t) sin(pi x) cos(pi y),       h = a_T sin(omega t)
    psi = g(t) sin^2(pi x) sin^2(pi y),          g = a_u sin(omega t)
    u* = (d psi/dy, -d psi/dx),  p* = g(t) cos(pi x) cos(pi y)

u* is solenoidal and vanishes on the boundary, p* has zero mean, T* equals
1 / 0 on the left / right wall and has zero normal derivative on the top
and bottom.  The forcing f and source gamma are obtained symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sy


@dataclass
class ManufacturedSolution:
    u: Callable  # (x, y, t) -> (ux, uy)
    p: Callable
    T: Callable
    forcing: Callable  # (x, y, t) -> (fx, fy)
    heat_source: Callable
    Pr: float
    Ra: float
    xi: tuple

    def at(self, t):
        """Time slices usable as initial data ``func(x, y)``."""
        return (lambda x, y: self.u(x, y, t), lambda x, y: self.p(x, y, t),
                lambda x, y: self.T(x, y, t))


def _vectorize(expr, args):
    f = sy.lambdify(args, expr, modules="numpy")

    def call(x, y, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x, y, t), dtype=float), np.broadcast(x, np.asarray(y)).shape)
    return call


def _pair(ex, ey, args):
    fx, fy = _vectorize(ex, args), _vectorize(ey, args)
    return lambda x, y, t: (fx(x, y, t), fy(x, y, t))


def boussinesq_mms(Pr=1.0, Ra=100.0, xi=(0.0, -1.0), a_T=0.5, a_u=1.0, omega=3.0) -> ManufacturedSolution:
    x, y, t = sy.symbols("x y t", real=True)
    pi = sy.pi
    h = a_T * sy.sin(omega * t)
    g = a_u * sy.sin(omega * t)
    T = 1 - x + h * sy.sin(pi * x) * sy.cos(pi * y)
    psi = g * sy.sin(pi * x) ** 2 * sy.sin(pi * y) ** 2
    ux, uy = sy.diff(psi, y), -sy.diff(psi, x)
    p = g * sy.cos(pi * x) * sy.cos(pi * y)

    def lap(s):
        return sy.diff(s, x, 2) + sy.diff(s, y, 2)

    def adv(s):
        return ux * sy.diff(s, x) + uy * sy.diff(s, y)

    fx = sy.diff(ux, t) + adv(ux) - Pr * lap(ux) + sy.diff(p, x) - Pr * Ra * xi[0] * T
    fy = sy.diff(uy, t) + adv(uy) - Pr * lap(uy) + sy.diff(p, y) - Pr * Ra * xi[1] * T
    gamma = sy.diff(T, t) + adv(T) - lap(T)
    args = (x, y, t)
    return ManufacturedSolution(
        u=_pair(ux, uy, args), p=_vectorize(p, args), T=_vectorize(T, args),
        forcing=_pair(fx, fy, args), heat_source=_vectorize(gamma, args),
        Pr=float(Pr), Ra=float(Ra), xi=tuple(float(c) for c in xi),
    )


def l2_errors(system, state, sol: ManufacturedSolution, t):
    """L2 errors of (u, p, T) against the exact fields at quadrature points."""
    X, Y = system.xq[..., 0], system.xq[..., 1]
    uh, _ = system.eval_vector(state.u)
    ux, uy = sol.u(X, Y, t)
    eu = system.integrate((uh[..., 0] - ux) ** 2 + (uh[..., 1] - uy) ** 2)
    Th, _ = system.eval_scalar(state.T)
    eT = system.integrate((Th - sol.T(X, Y, t)) ** 2)
    ph, _ = system.eval_scalar(state.p, system.pres)
    pe = sol.p(X, Y, t)
    diff = ph - pe
    diff = diff - system.integrate(diff) / system.domain_area
    ep = system.integrate(diff**2)
    return float(np.sqrt(eu)), float(np.sqrt(ep)), float(np.sqrt(eT))
