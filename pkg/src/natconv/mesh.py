"""Boundary-graded triangulations of rectangular cavities.

The cavity boundary is split into three parts: the hot wall ``GammaN``,
the cold wall ``GammaH`` (together the Dirichlet part Gamma_1 of the
temperature) and the insulated remainder ``Gamma2``.  Cells next to a
Gamma_1 wall are graded geometrically so that the first mesh line sits
exactly ``delta`` away from the wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA_N, GAMMA_H, GAMMA_2 = 0, 1, 2
TAG_NAMES = ("GammaN", "GammaH", "Gamma2")
SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    pass


class GradingError(MeshError):
    """Raised when the requested layer width cannot be embedded in the core grid."""


def tag_code(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag not in (GAMMA_N, GAMMA_H, GAMMA_2):
            raise MeshError(f"unknown boundary tag {tag!r}")
        return int(tag)
    try:
        return TAG_NAMES.index(tag)
    except ValueError:
        raise MeshError(f"unknown boundary tag {tag!r}") from None


@dataclass(frozen=True)
class CavityPreset:
    """Rectangle, gravity direction and the wall -> tag assignment.

    ``side_tags`` maps each of ``bottom/right/top/left`` to a tag name; it is
    filled in automatically for the two named presets.
    """

    kind: str = "HeatedSidewalls"
    width: float = 1.0
    height: float = 1.0
    xi: tuple = (0.0, -1.0)
    side_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "HeatedSidewalls":
            tags = {"left": "GammaN", "right": "GammaH", "bottom": "Gamma2", "top": "Gamma2"}
        elif self.kind == "RayleighBenard":
            tags = {"bottom": "GammaN", "top": "GammaH", "left": "Gamma2", "right": "Gamma2"}
        elif self.kind == "Custom":
            tags = dict(self.side_tags)
            if set(tags) != set(SIDES):
                raise MeshError(f"Custom preset needs a tag for each of {SIDES}")
        else:
            raise MeshError(f"unknown preset kind {self.kind!r}")
        tags = {side: TAG_NAMES[tag_code(t)] for side, t in tags.items()}
        object.__setattr__(self, "side_tags", tags)
        object.__setattr__(self, "xi", tuple(float(c) for c in self.xi))
        if len(self.xi) != 2 or abs(np.hypot(*self.xi) - 1.0) > 1e-12:
            raise MeshError(f"gravity direction must be a unit 2-vector, got {self.xi}")
        if self.width <= 0 or self.height <= 0:
            raise MeshError("cavity extents must be positive")
        if all(tags[s] == "Gamma2" for s in SIDES):
            raise MeshError("|Gamma_N u Gamma_H| must be positive")

    @property
    def gamma1_sides(self):
        return [s for s in SIDES if self.side_tags[s] != "Gamma2"]


def heated_sidewalls(width=1.0, height=1.0) -> CavityPreset:
    return CavityPreset("HeatedSidewalls", width, height)


def rayleigh_benard(width=1.0, height=1.0) -> CavityPreset:
    return CavityPreset("RayleighBenard", width, height)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with tagged boundary edges.

    ``delta`` is the wall-normal width of the first element layer along
    Gamma_1.  ``layer_diameter`` is the largest diameter among the elements
    touching Gamma_1; on an isotropic layer the two coincide.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    delta: float
    extents: tuple = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "edge_tags"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    @property
    def h_max(self) -> float:
        return float(self.diameters().max())

    def gamma1_vertices(self) -> np.ndarray:
        """Vertices lying on a Gamma_1 edge; corners shared with Gamma2 included."""
        mask = self.edge_tags != GAMMA_2
        return np.unique(self.boundary_edges[mask])

    def tagged_vertices(self, tag) -> np.ndarray:
        code = tag_code(tag)
        return np.unique(self.boundary_edges[self.edge_tags == code])

    def gamma1_elements(self) -> np.ndarray:
        on_wall = np.zeros(self.n_vertices, dtype=bool)
        on_wall[self.gamma1_vertices()] = True
        return np.flatnonzero(on_wall[self.triangles].any(axis=1))

    def layer_thickness(self) -> np.ndarray:
        """Wall-normal thickness of every Gamma_1-touching element.

        For an element touching several Gamma_1 lines the smallest of the
        per-line thicknesses is taken.
        """
        elems = self.gamma1_elements()
        g1_edges = self.boundary_edges[self.edge_tags != GAMMA_2]
        out = np.empty(len(elems))
        for k, e in enumerate(elems):
            tri = self.triangles[e]
            pts = self.vertices[tri]
            best = np.inf
            for a, b in g1_edges:
                if a not in tri and b not in tri:
                    continue
                t = self.vertices[b] - self.vertices[a]
                n = np.array([-t[1], t[0]]) / np.hypot(*t)
                dist = np.abs((pts - self.vertices[a]) @ n).max()
                best = min(best, dist)
            out[k] = best
        return out

    @property
    def layer_diameter(self) -> float:
        return float(self.diameters()[self.gamma1_elements()].max())

    def same_as(self, other: "Mesh") -> bool:
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.edge_tags, other.edge_tags)
            and self.delta == other.delta
            and tuple(self.extents) == tuple(other.extents)
        )


def delta_from_rayleigh(Ra: float, c_delta: float = 1.0) -> float:
    if Ra <= 0 or c_delta <= 0:
        raise ValueError("Ra and c_delta must be positive")
    return c_delta / Ra


def graded_axis(length, n_core, delta, n_layers, stretch, grade_lo, grade_hi):
    """Breakpoints of one axis, geometrically graded at the requested ends.

    Layer widths are ``delta * stretch**k``; layers stop once they would
    reach the nominal core spacing ``length / n_core`` or leave less than one
    core cell in the middle.  The remaining middle is
    split uniformly into roughly core-sized cells.
    """
    h_core = length / n_core
    if not (grade_lo or grade_hi):
        return np.linspace(0.0, length, n_core + 1)
    if delta > h_core * (1 + 1e-12):
        raise GradingError(f"delta={delta:g} exceeds the core spacing {h_core:g}")
    sides = int(grade_lo) + int(grade_hi)
    widths = [delta]
    for k in range(1, n_layers):
        w = delta * stretch**k
        # stop once the layer reaches core size or would eat the core
        if w >= h_core or sides * (sum(widths) + w) > length - h_core:
            break
        widths.append(w)
    widths = np.array(widths)
    lo = np.concatenate([[0.0], np.cumsum(widths)]) if grade_lo else np.array([0.0])
    hi = np.concatenate([(length - np.cumsum(widths))[::-1], [length]]) if grade_hi else np.array([])
    a = lo[-1]
    b = hi[0] if grade_hi else length
    middle = b - a
    if middle <= 0:
        raise GradingError("boundary layers overlap; reduce n_layers, stretch or delta")
    n_mid = max(1, int(round(middle / h_core)))
    core = np.linspace(a, b, n_mid + 1)
    pts = np.concatenate([lo[:-1], core, hi[1:]] if grade_hi else [lo[:-1], core])
    return pts


def generate_graded_mesh(preset: CavityPreset, n_core: int, delta: float,
                         n_layers: int = 1, stretch: float = 1.0) -> Mesh:
    """Structured triangulation graded towards every Gamma_1 wall.

    Every quad cell is split along its (x0,y0)-(x1,y1) diagonal.
    """
    if n_core < 2:
        raise MeshError("n_core must be >= 2")
    if delta <= 0:
        raise MeshError("delta must be positive")
    if n_layers < 1:
        raise MeshError("n_layers must be >= 1")
    if stretch < 1:
        raise MeshError("stretch must be >= 1")
    sides = set(preset.gamma1_sides)
    W, H = preset.width, preset.height
    if ("left" in sides or "right" in sides) and delta >= W / 2:
        raise GradingError("delta must be below half the cavity width")
    if ("bottom" in sides or "top" in sides) and delta >= H / 2:
        raise GradingError("delta must be below half the cavity height")
    xs = graded_axis(W, n_core, delta, n_layers, stretch, "left" in sides, "right" in sides)
    ys = graded_axis(H, n_core, delta, n_layers, stretch, "bottom" in sides, "top" in sides)
    return tensor_mesh(xs, ys, preset, delta)


def tensor_mesh(xs, ys, preset: CavityPreset, delta: float) -> Mesh:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    mx, my = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (my + 1) + j

    I, J = np.meshgrid(np.arange(mx), np.arange(my), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * len(I), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    i = np.arange(mx)
    j = np.arange(my)
    edges = {
        "bottom": np.column_stack([vid(i, 0), vid(i + 1, 0)]),
        "right": np.column_stack([vid(mx, j), vid(mx, j + 1)]),
        "top": np.column_stack([vid(i + 1, my), vid(i, my)])[::-1],
        "left": np.column_stack([vid(0, j + 1), vid(0, j)])[::-1],
    }
    bedges = np.vstack([edges[s] for s in SIDES])
    tags = np.concatenate([np.full(len(edges[s]), tag_code(preset.side_tags[s])) for s in SIDES])
    return Mesh(vertices, triangles, bedges, tags, float(delta),
                (float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1])))


@dataclass
class MeshReport:
    violations: list
    h_max: float
    delta: float
    layer_diameter: float
    n_elements: int
    min_angle: float

    @property
    def valid(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            lines = [f"{kind} at {idx}: {msg}" for kind, idx, msg in self.violations]
            raise MeshError("invalid mesh:\n  " + "\n  ".join(lines))


def _min_angle(mesh: Mesh) -> float:
    p = mesh.vertices[mesh.triangles]
    angles = []
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    return float(np.min(angles))


def validate_mesh(mesh: Mesh) -> MeshReport:
    violations = []
    areas = mesh.signed_areas()
    for k in np.flatnonzero(areas <= 0):
        violations.append(("orientation", int(k), f"signed area {areas[k]:.3e}"))

    # edges used by exactly one triangle form the true boundary
    tri = mesh.triangles
    all_edges = np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
    true_boundary = {tuple(e) for e in uniq[counts == 1]}
    seen = {}
    for k, (e, t) in enumerate(zip(mesh.boundary_edges, mesh.edge_tags)):
        key = tuple(sorted(int(v) for v in e))
        if t not in (GAMMA_N, GAMMA_H, GAMMA_2):
            violations.append(("tagging", k, f"invalid tag {t}"))
        if key in seen:
            violations.append(("tagging", k, f"edge {key} tagged twice (first at {seen[key]})"))
        seen[key] = k
        if key not in true_boundary:
            violations.append(("tagging", k, f"edge {key} is not on the boundary"))
    for key in sorted(true_boundary - set(seen)):
        violations.append(("tagging", key, "boundary edge without a tag"))

    g1 = mesh.edge_tags != GAMMA_2
    if not g1.any():
        violations.append(("gamma1-empty", -1, "|Gamma_N u Gamma_H| = 0"))
        layer_diameter = float("nan")
        thickness_max = float("nan")
    else:
        elems = mesh.gamma1_elements()
        thick = mesh.layer_thickness()
        for e, t in zip(elems, thick):
            if t > mesh.delta * (1 + 1e-9):
                violations.append(("layer", int(e), f"wall-normal thickness {t:.3e} > delta {mesh.delta:.3e}"))
        layer_diameter = float(mesh.diameters()[elems].max())
        thickness_max = float(thick.max())
    return MeshReport(violations, mesh.h_max, thickness_max, layer_diameter,
                      mesh.n_triangles, _min_angle(mesh))


def uniform_mesh(preset: CavityPreset, n: int) -> Mesh:
    """Uniform n x n diagonal-split mesh; its layer width is one cell."""
    xs = np.linspace(0.0, preset.width, n + 1)
    ys = np.linspace(0.0, preset.height, n + 1)
    sides = set(preset.gamma1_sides)
    delta = min([preset.width / n] * bool(sides & {"left", "right"})
                + [preset.height / n] * bool(sides & {"bottom", "top"}))
    return tensor_mesh(xs, ys, preset, delta)


# --------------------------------------------------------------------------
# plain-text serialization
#
#   mesh <n_vertices> <n_triangles> <n_boundary_edges>
#   delta <value>
#   extents <x0> <x1> <y0> <y1>
#   v <x> <y>                 one line per vertex
#   t <i> <j> <k>             one line per triangle, 0-based, counter-clockwise
#   e <i> <j> <tag-name>      one line per boundary edge
#
# Floats are written with repr(), which round-trips bit-exactly.
# --------------------------------------------------------------------------

def mesh_to_lines(mesh: Mesh) -> list:
    lines = [f"mesh {mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}",
             f"delta {float(mesh.delta)!r}",
             "extents " + " ".join(repr(float(c)) for c in mesh.extents)]
    lines += [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"t {a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [f"e {a} {b} {TAG_NAMES[t]}" for (a, b), t in zip(mesh.boundary_edges, mesh.edge_tags)]
    return lines


def mesh_from_lines(lines) -> tuple:
    """Parse a mesh block; returns the mesh and the number of lines consumed."""
    it = iter(enumerate(lines))
    try:
        _, head = next(it)
        kw, nv, nt, ne = head.split()
        if kw != "mesh":
            raise MeshError(f"expected 'mesh' header, got {head!r}")
        nv, nt, ne = int(nv), int(nt), int(ne)
        delta = float(next(it)[1].split()[1])
        extents = tuple(float(s) for s in next(it)[1].split()[1:])
        verts = np.empty((nv, 2))
        tris = np.empty((nt, 3), dtype=np.int64)
        edges = np.empty((ne, 2), dtype=np.int64)
        tags = np.empty(ne, dtype=np.int64)
        for k in range(nv):
            lno, s = next(it)
            f = s.split()
            if f[0] != "v":
                raise MeshError(f"line {lno + 1}: expected vertex record")
            verts[k] = float(f[1]), float(f[2])
        for k in range(nt):
            lno, s = next(it)
            f = s.split()
            if f[0] != "t":
                raise MeshError(f"line {lno + 1}: expected triangle record")
            tris[k] = int(f[1]), int(f[2]), int(f[3])
        for k in range(ne):
            lno, s = next(it)
            f = s.split()
            if f[0] != "e":
                raise MeshError(f"line {lno + 1}: expected boundary edge record")
            edges[k] = int(f[1]), int(f[2])
            tags[k] = tag_code(f[3])
    except (StopIteration, IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh block: {exc}") from None
    return Mesh(verts, tris, edges, tags, delta, extents), 3 + nv + nt + ne


def save_mesh(mesh: Mesh, path):
    with open(path, "w") as fh:
        fh.write("\n".join(mesh_to_lines(mesh)) + "\n")


def load_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [s for s in fh.read().splitlines() if s.strip() and not s.startswith("#")]
    return mesh_from_lines(lines)[0]
