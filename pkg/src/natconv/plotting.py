"""Figure output for experiment reports (files only, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_ledger(ledger, path):
    t = ledger.column("t")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ax = axes[0]
    for name, label in (("T", r"$\|T^n\|$"), ("theta", r"$\|\theta^n\|$"), ("u", r"$\|u^n\|$"),
                        ("p", r"$\|p^n\|$")):
        ax.plot(t, ledger.column(name), label=label)
    ax.set_xlabel("t")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title(f"{ledger.scheme}, Ra={ledger.Ra:g}, Pr={ledger.Pr:g}")
    ax = axes[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rT = np.abs(ledger.column("res_T")) / ledger.column("scale_T")
        ru = np.abs(ledger.column("res_u")) / ledger.column("scale_u")
    ax.semilogy(t, rT, ".", ms=3, label="temperature")
    ax.semilogy(t, ru, ".", ms=3, label="momentum")
    ax.set_xlabel("t")
    ax.set_ylabel("relative identity residual")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_growth(report, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(report.t_star, np.asarray(report.Q) / report.Q[0], "o-", label="Q(t*)/Q(t*_0)")
    if report.P[0] > 0:
        ax.plot(report.t_star, np.asarray(report.P) / report.P[0], "s-", label="P(t*)/P(t*_0)")
    ax.axhline(report.margin, color="k", ls="--", lw=0.8, label="margin")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("t*")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fields(system, state, path):
    """Temperature contours and velocity arrows at the mesh vertices."""
    mesh = system.mesh
    nv = mesh.n_vertices
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    nT = system.n_T
    fig, ax = plt.subplots(figsize=(5, 4.5))
    cs = ax.tricontourf(x, y, mesh.triangles, state.T[:nv], levels=20, cmap="coolwarm")
    fig.colorbar(cs, ax=ax, label="T")
    ax.quiver(x, y, state.u[:nv], state.u[nT:nT + nv], scale=None, width=0.002)
    ax.set_aspect("equal")
    ax.set_title(f"n={state.n}, t={state.t:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_rates(table, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    h = np.asarray(table.steps)
    for k, name in enumerate(("u", "p", "T")):
        ax.loglog(h, table.errors[:, k], "o-", label=f"{name}: {table.field_orders[k]:.2f}")
    ax.set_xlabel(table.kind == "temporal" and "dt" or "h")
    ax.set_ylabel("L2 error at final time")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
