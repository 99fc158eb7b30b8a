"""Taylor-Hood P2/P1 spaces, P2 temperature, and operator assembly.

Vector fields are stored component-blocked: ``[u_x dofs..., u_y dofs...]``
over the scalar component space.  Matrices are assembled element by element
with numpy and scattered into a fixed CSR pattern with ``np.bincount``, which
makes repeated assembly of the convection operators cheap and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import GAMMA_2, GAMMA_H, GAMMA_N, Mesh


class FemError(ValueError):
    pass


class DegenerateElementError(FemError):
    pass


class InfSupConvergenceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray  # (nq, 2) on the reference triangle
    weights: np.ndarray  # (nq,), sum = 1/2
    degree: int


def triangle_rule_degree5() -> Quadrature:
    """Seven-point symmetric rule, exact for polynomials of degree <= 5."""
    s15 = np.sqrt(15.0)
    a1, a2 = (6 - s15) / 21, (6 + s15) / 21
    w1, w2 = (155 - s15) / 1200, (155 + s15) / 1200
    pts = [(1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1 - 2 * a
        pts += [(a, a), (b, a), (a, b)]
        wts += [w, w, w]
    return Quadrature(np.array(pts), 0.5 * np.array(wts), 5)


# --------------------------------------------------------------------------
# reference Lagrange elements
# --------------------------------------------------------------------------

def reference_basis(degree, pts):
    """Values (nq, nloc) and reference gradients (nq, nloc, 2).

    P2 local order: three vertices, then midpoints of edges 01, 12, 20.
    """
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        val = np.column_stack([l0, l1, l2])
        grad = np.broadcast_to(dl, (len(pts), 3, 2)).copy()
        return val, grad
    if degree != 2:
        raise FemError(f"unsupported degree {degree}")
    lam = [l0, l1, l2]
    val = np.empty((len(pts), 6))
    grad = np.empty((len(pts), 6, 2))
    for i in range(3):
        val[:, i] = lam[i] * (2 * lam[i] - 1)
        grad[:, i] = np.outer(4 * lam[i] - 1, dl[i])
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        val[:, 3 + k] = 4 * lam[i] * lam[j]
        grad[:, 3 + k] = 4 * (np.outer(lam[j], dl[i]) + np.outer(lam[i], dl[j]))
    return val, grad


class LagrangeSpace:
    """Continuous scalar P1 or P2 space on a mesh."""

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        tri = mesh.triangles
        nv = mesh.n_vertices
        local_edges = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = np.sort(tri[:, local_edges].reshape(-1, 2), axis=1)
        edges, edge_of = np.unique(pairs, axis=0, return_inverse=True)
        self.edges = edges
        self._edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
        if degree == 1:
            self.cell_dofs = np.array(tri)
            self.coords = np.array(mesh.vertices)
        elif degree == 2:
            edge_of = edge_of.reshape(-1, 3)
            self.cell_dofs = np.hstack([tri, nv + edge_of])
            mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.coords = np.vstack([mesh.vertices, mid])
        else:
            raise FemError(f"unsupported degree {degree}")
        self.n_dofs = len(self.coords)

    def edge_dofs(self, edge_vertices) -> np.ndarray:
        """All dofs lying on the given (vertex, vertex) edges."""
        edge_vertices = np.asarray(edge_vertices).reshape(-1, 2)
        dofs = [edge_vertices.ravel()]
        if self.degree == 2:
            nv = self.mesh.n_vertices
            dofs.append(np.array([nv + self._edge_index[tuple(sorted((int(a), int(b))))]
                                  for a, b in edge_vertices], dtype=np.int64))
        return np.unique(np.concatenate(dofs)).astype(np.int64)

    def boundary_dofs(self, tags=None) -> np.ndarray:
        m = self.mesh
        mask = np.ones(len(m.boundary_edges), dtype=bool)
        if tags is not None:
            mask = np.isin(m.edge_tags, list(tags))
        return self.edge_dofs(m.boundary_edges[mask])

    def interpolate(self, func) -> np.ndarray:
        x, y = self.coords[:, 0], self.coords[:, 1]
        return np.broadcast_to(np.asarray(func(x, y), dtype=float), x.shape).copy()


# --------------------------------------------------------------------------
# the assembled system
# --------------------------------------------------------------------------

class _Pattern:
    """CSR sparsity pattern for one (row space, column space) pair."""

    def __init__(self, row_dofs, col_dofs, n_rows, n_cols):
        nt, a = row_dofs.shape
        b = col_dofs.shape[1]
        rows = np.broadcast_to(row_dofs[:, :, None], (nt, a, b)).ravel()
        cols = np.broadcast_to(col_dofs[:, None, :], (nt, a, b)).ravel()
        keys = rows.astype(np.int64) * n_cols + cols
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n_cols).astype(np.int32)
        r = uniq // n_cols
        self.indptr = np.searchsorted(r, np.arange(n_rows + 1)).astype(np.int32)
        self.shape = (n_rows, n_cols)
        self.nnz = len(uniq)

    def matrix(self, local) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class FeSystem:
    """Spaces, quadrature data and constant operators on one mesh.

    Attributes of interest: ``M_T, A_T`` (scalar P2 mass/stiffness),
    ``M_u, A_u`` (vector velocity), ``M_p`` (pressure mass), ``B`` with
    ``B[i, j] = (q_i, div v_j)``, and ``G`` with ``G[j, k] = (xi . v_j, S_k)``.
    """

    def __init__(self, mesh: Mesh, xi=(0.0, -1.0), velocity_degree: int = 2):
        self.mesh = mesh
        self.xi = np.asarray(xi, dtype=float)
        if abs(np.linalg.norm(self.xi) - 1) > 1e-12:
            raise FemError("xi must be a unit vector")
        self.quad = triangle_rule_degree5()
        self.temp = LagrangeSpace(mesh, 2)
        self.vel = self.temp if velocity_degree == 2 else LagrangeSpace(mesh, velocity_degree)
        self.pres = LagrangeSpace(mesh, 1)

        p = mesh.vertices[mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        bad = np.flatnonzero(det <= 1e-14 * np.abs(J).max() ** 2)
        if len(bad):
            raise DegenerateElementError(f"singular element Jacobian at elements {bad[:10].tolist()}")
        invJT = np.empty_like(J)
        invJT[:, 0, 0] = J[:, 1, 1] / det
        invJT[:, 0, 1] = -J[:, 1, 0] / det
        invJT[:, 1, 0] = -J[:, 0, 1] / det
        invJT[:, 1, 1] = J[:, 0, 0] / det
        self.area = 0.5 * det
        self.wdet = det[:, None] * self.quad.weights[None, :]  # (nt, nq)
        qp = self.quad.points
        self.xq = p[:, 0][:, None, :] + np.einsum("eij,qj->eqi", J, qp)

        self._phi = {}
        self._dphi = {}
        for space in {id(s): s for s in (self.temp, self.vel, self.pres)}.values():
            val, grad = reference_basis(space.degree, qp)
            self._phi[space.degree] = val
            self._dphi[space.degree] = np.einsum("eij,qaj->eqai", invJT, grad)
        self._patterns = {}

        t, v, pr = self.temp, self.vel, self.pres
        self.M_T = self._assemble_mass(t, t)
        self.A_T = self._assemble_stiffness(t)
        Mv = self.M_T if v is t else self._assemble_mass(v, v)
        Av = self.A_T if v is t else self._assemble_stiffness(v)
        self.M_vc = Mv
        self.A_vc = Av
        self.M_u = sp.block_diag([Mv, Mv], format="csr")
        self.A_u = sp.block_diag([Av, Av], format="csr")
        self.M_p = self._assemble_mass(pr, pr)
        self.p_mean = np.asarray(self.M_p.sum(axis=0)).ravel()  # integral of each pressure basis fn
        self.B = self._assemble_divergence()
        Mvt = self.M_T if v is t else self._assemble_mass(v, t)
        self.G = sp.vstack([self.xi[0] * Mvt, self.xi[1] * Mvt], format="csr")

        self.vel_bc = np.concatenate([v.boundary_dofs(), v.n_dofs + v.boundary_dofs()])
        self.temp_bc = t.boundary_dofs([GAMMA_N, GAMMA_H])
        self.temp_bc_N = t.boundary_dofs([GAMMA_N])
        self.temp_bc_H = t.boundary_dofs([GAMMA_H])
        self.temp_free = np.setdiff1d(np.arange(t.n_dofs), self.temp_bc)
        self.vel_free = np.setdiff1d(np.arange(self.n_u), self.vel_bc)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_T(self) -> int:
        return self.temp.n_dofs

    @property
    def n_u(self) -> int:
        return 2 * self.vel.n_dofs

    @property
    def n_p(self) -> int:
        return self.pres.n_dofs

    @property
    def domain_area(self) -> float:
        return float(self.area.sum())

    # -- assembly helpers ----------------------------------------------------
    def _pattern(self, rs: LagrangeSpace, cs: LagrangeSpace) -> _Pattern:
        key = (id(rs), id(cs))
        if key not in self._patterns:
            self._patterns[key] = _Pattern(rs.cell_dofs, cs.cell_dofs, rs.n_dofs, cs.n_dofs)
        return self._patterns[key]

    def _assemble_mass(self, rs, cs):
        pr, pc = self._phi[rs.degree], self._phi[cs.degree]
        local = np.einsum("eq,qa,qb->eab", self.wdet, pr, pc)
        return self._pattern(rs, cs).matrix(local)

    def _assemble_stiffness(self, s):
        d = self._dphi[s.degree]
        local = np.einsum("eq,eqai,eqbi->eab", self.wdet, d, d)
        return self._pattern(s, s).matrix(local)

    def _assemble_divergence(self):
        psi = self._phi[1]
        d = self._dphi[self.vel.degree]
        pat = self._pattern(self.pres, self.vel)
        blocks = [pat.matrix(np.einsum("eq,qa,eqb->eab", self.wdet, psi, d[..., c])) for c in range(2)]
        return sp.hstack(blocks, format="csr")

    # -- field evaluation at quadrature points -------------------------------
    def eval_scalar(self, coef, space=None):
        space = space or self.temp
        c = np.asarray(coef)[space.cell_dofs]  # (nt, nloc)
        val = c @ self._phi[space.degree].T
        grad = np.einsum("ea,eqai->eqi", c, self._dphi[space.degree])
        return val, grad

    def eval_vector(self, coef):
        """Values (nt, nq, 2) and gradients (nt, nq, comp, dir)."""
        coef = np.asarray(coef)
        if coef.shape != (self.n_u,):
            raise FemError(f"velocity vector has length {coef.shape}, expected {self.n_u}")
        n = self.vel.n_dofs
        vx, gx = self.eval_scalar(coef[:n], self.vel)
        vy, gy = self.eval_scalar(coef[n:], self.vel)
        return np.stack([vx, vy], axis=-1), np.stack([gx, gy], axis=2)

    def integrate(self, values) -> float:
        return float(np.sum(self.wdet * values))

    # -- norms ---------------------------------------------------------------
    def l2_T(self, T) -> float:
        return float(np.sqrt(max(T @ (self.M_T @ T), 0.0)))

    def h1_T(self, T) -> float:
        return float(np.sqrt(max(T @ (self.A_T @ T), 0.0)))

    def l2_u(self, u) -> float:
        return float(np.sqrt(max(u @ (self.M_u @ u), 0.0)))

    def h1_u(self, u) -> float:
        return float(np.sqrt(max(u @ (self.A_u @ u), 0.0)))

    def l2_p(self, p) -> float:
        return float(np.sqrt(max(p @ (self.M_p @ p), 0.0)))

    # -- data ----------------------------------------------------------------
    def load_scalar(self, func, t=None, space=None) -> np.ndarray:
        """Load vector (func, phi_i); ``func(x, y[, t])``."""
        space = space or self.temp
        x, y = self.xq[..., 0], self.xq[..., 1]
        vals = func(x, y) if t is None else func(x, y, t)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), x.shape)
        local = np.einsum("eq,eq,qa->ea", self.wdet, vals, self._phi[space.degree])
        return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_dofs)

    def load_vector(self, func, t=None) -> np.ndarray:
        x, y = self.xq[..., 0], self.xq[..., 1]
        fx, fy = func(x, y) if t is None else func(x, y, t)
        out = []
        for comp in (fx, fy):
            comp = np.broadcast_to(np.asarray(comp, dtype=float), x.shape)
            out.append(self.load_scalar(lambda *_: comp, space=self.vel))
        return np.concatenate(out)

    def interpolate_velocity(self, func) -> np.ndarray:
        x, y = self.vel.coords[:, 0], self.vel.coords[:, 1]
        fx, fy = func(x, y)
        return np.concatenate([np.broadcast_to(np.asarray(fx, float), x.shape),
                               np.broadcast_to(np.asarray(fy, float), x.shape)])

    def temperature_bc_values(self, t_hot=1.0, t_cold=0.0) -> np.ndarray:
        """Nodal values on Gamma_1 dofs (aligned with ``temp_bc``)."""
        hot = np.isin(self.temp_bc, self.temp_bc_N)
        cold = np.isin(self.temp_bc, self.temp_bc_H)
        if np.any(hot & cold) and t_hot != t_cold:
            raise FemError("Gamma_N and Gamma_H share a node with conflicting data")
        return np.where(hot, t_hot, t_cold).astype(float)

    # -- convection ----------------------------------------------------------
    def convection_matrix(self, adv) -> sp.csr_matrix:
        """Scalar matrix N with S^T N T = b*(adv, T, S); N is antisymmetric."""
        if self.vel is not self.temp:
            raise FemError("convection operators need the P2 velocity space")
        a, _ = self.eval_vector(adv)
        d = self._dphi[2]
        phi = self._phi[2]
        adv_grad = np.einsum("eqi,eqbi->eqb", a, d)  # adv . grad(phi_b)
        C = np.einsum("eq,qa,eqb->eab", self.wdet, phi, adv_grad)
        return self._pattern(self.temp, self.temp).matrix(0.5 * (C - C.transpose(0, 2, 1)))

    def _check_vec(self, *fields):
        for f in fields:
            if np.shape(f) != (self.n_u,):
                raise FemError(f"velocity field of length {np.shape(f)}, expected {self.n_u}")

    def _check_temp(self, *fields):
        for f in fields:
            if np.shape(f) != (self.n_T,):
                raise FemError(f"temperature field of length {np.shape(f)}, expected {self.n_T}")


def build_fe_system(mesh: Mesh, xi=(0.0, -1.0), velocity_degree: int = 2) -> FeSystem:
    return FeSystem(mesh, xi, velocity_degree)


# --------------------------------------------------------------------------
# trilinear forms
# --------------------------------------------------------------------------

def trilinear_b(system: FeSystem, adv, v, w) -> float:
    """b(adv, v, w) = 1/2 (adv.grad v, w) - 1/2 (adv.grad w, v)."""
    system._check_vec(adv, v, w)
    a, _ = system.eval_vector(adv)
    vv, gv = system.eval_vector(v)
    wv, gw = system.eval_vector(w)
    conv_v = np.einsum("eqj,eqij->eqi", a, gv)
    conv_w = np.einsum("eqj,eqij->eqi", a, gw)
    integrand = 0.5 * np.sum(conv_v * wv, axis=-1) - 0.5 * np.sum(conv_w * vv, axis=-1)
    return system.integrate(integrand)


def trilinear_b_divform(system: FeSystem, adv, v, w) -> float:
    """(adv.grad v, w) + 1/2 ((div adv) v, w); equals b for adv vanishing on the boundary."""
    system._check_vec(adv, v, w)
    a, ga = system.eval_vector(adv)
    vv, gv = system.eval_vector(v)
    wv, _ = system.eval_vector(w)
    div = ga[..., 0, 0] + ga[..., 1, 1]
    conv_v = np.einsum("eqj,eqij->eqi", a, gv)
    integrand = np.sum(conv_v * wv, axis=-1) + 0.5 * div * np.sum(vv * wv, axis=-1)
    return system.integrate(integrand)


def trilinear_b_star(system: FeSystem, adv, T, S) -> float:
    """b*(adv, T, S) = 1/2 (adv.grad T, S) - 1/2 (adv.grad S, T)."""
    system._check_vec(adv)
    system._check_temp(T, S)
    a, _ = system.eval_vector(adv)
    tv, gt = system.eval_scalar(T)
    sv, gs = system.eval_scalar(S)
    integrand = 0.5 * np.sum(a * gt, axis=-1) * sv - 0.5 * np.sum(a * gs, axis=-1) * tv
    return system.integrate(integrand)


def trilinear_b_star_divform(system: FeSystem, adv, T, S) -> float:
    system._check_vec(adv)
    system._check_temp(T, S)
    a, ga = system.eval_vector(adv)
    tv, gt = system.eval_scalar(T)
    sv, _ = system.eval_scalar(S)
    div = ga[..., 0, 0] + ga[..., 1, 1]
    integrand = np.sum(a * gt, axis=-1) * sv + 0.5 * div * tv * sv
    return system.integrate(integrand)


def trilinear_b_star_matrix(system: FeSystem, adv) -> sp.csr_matrix:
    system._check_vec(adv)
    return system.convection_matrix(adv)


def trilinear_b_matrix(system: FeSystem, adv) -> sp.csr_matrix:
    """Velocity-space matrix with w^T N v = b(adv, v, w)."""
    N = trilinear_b_star_matrix(system, adv)
    return sp.block_diag([N, N], format="csr")


# --------------------------------------------------------------------------
# Dirichlet conditions
# --------------------------------------------------------------------------

def apply_dirichlet(system: FeSystem, matrix, rhs, kind: str, dofs, values, offset: int = 0):
    """Symmetric elimination of prescribed dofs with value lifting.

    ``dofs`` are field-local indices of the ``kind`` ("velocity" or
    "temperature") field, placed at ``offset`` inside ``matrix``.  Rows and
    columns of the constrained dofs are replaced by identity rows, and the
    known values are moved to the right-hand side.
    """
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    allowed = {"velocity": system.vel_bc, "temperature": system.temp_bc}
    if kind not in allowed:
        raise FemError(f"unknown field kind {kind!r}")
    stray = np.setdiff1d(dofs, allowed[kind])
    if len(stray):
        raise FemError(f"Dirichlet value supplied for non-boundary {kind} dofs {stray[:10].tolist()}")
    matrix = sp.csr_matrix(matrix)
    rhs = np.array(rhs, dtype=float)
    if len(dofs) == 0:
        return matrix, rhs
    idx = dofs + offset
    g = np.zeros(matrix.shape[1])
    g[idx] = values
    rhs = rhs - matrix @ g
    keep = np.ones(matrix.shape[0])
    keep[idx] = 0.0
    K = sp.diags(keep)
    out = (K @ matrix @ K + sp.diags(1.0 - keep)).tocsr()
    rhs[idx] = values
    return out, rhs


# --------------------------------------------------------------------------
# inf-sup constant
# --------------------------------------------------------------------------

def schur_operator(system: FeSystem):
    """Dense-free pieces of S = B A^{-1} B^T on free velocity dofs."""
    free = system.vel_free
    A = system.A_u[free][:, free].tocsc()
    Bf = system.B[:, free].tocsr()
    return A, Bf


def estimate_inf_sup(system: FeSystem, tol: float = 1e-10, max_iter: int = 2000, seed: int = 0) -> float:
    """Smallest inf-sup value by inverse iteration on B A^-1 B^T x = lam M_p x.

    Iterates are projected onto zero-mean pressures, which removes the
    constants (always in the kernel of B^T when the velocity vanishes on the
    boundary).  A pair with spurious pressure modes returns ~0.
    """
    A, Bf = schur_operator(system)
    nf, npr = A.shape[0], system.n_p
    if nf == 0:
        return 0.0
    m = system.p_mean
    Mp = system.M_p
    try:
        luA = spla.splu(A)
    except RuntimeError as exc:
        raise InfSupConvergenceError(f"singular velocity block: {exc}") from exc
    # a small shift keeps the saddle operator invertible when B^T has a kernel
    # beyond the constants (spurious pressure modes); the Rayleigh quotient
    # below is taken with the unshifted operator
    shift = 1e-8
    Z = sp.bmat([[A, Bf.T], [Bf, -shift * Mp]], format="csc")
    lu = spla.splu(Z)

    def schur(x):
        return Bf @ luA.solve(Bf.T @ x)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(npr)
    x -= (m @ x) / m.sum()
    x /= np.sqrt(x @ (Mp @ x))
    lam_old = np.inf
    for _ in range(max_iter):
        rhs = np.concatenate([np.zeros(nf), Mp @ x])
        y = -lu.solve(rhs)[nf:nf + npr]
        y -= (m @ y) / m.sum()
        if not np.all(np.isfinite(y)):
            raise InfSupConvergenceError("inverse iteration produced non-finite values")
        x = y / np.sqrt(y @ (Mp @ y))
        lam = float(x @ schur(x))
        if abs(lam - lam_old) <= tol * max(abs(lam), 1e3 * shift):
            return float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
    raise InfSupConvergenceError(f"inverse iteration did not converge in {max_iter} iterations")


def dump_matrix_coo(matrix, path):
    """Write ``row col value`` lines (0-based) after a ``shape`` header."""
    A = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"shape {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {float(v)!r}\n")


def load_matrix_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        _, m, n, _ = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    if not len(data):
        return sp.csr_matrix((int(m), int(n)))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(int(m), int(n)))
