"""Structured triangulations of the spec triangle.

The generator lays a barycentric lattice over O-A-B; grading pulls lattice
shells toward the Neumann vertex O by t -> t**s so the local mesh size near
the conical point scales like h**s.  Refinement is midpoint 4-to-1 and keeps
the coarse vertices, which is what the eigenvalue monotonicity checks rely
on.  Meshes are immutable after construction (arrays are write-protected).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .errors import ParamDomain
from .geometry import TriangleSpec

DIRICHLET = "Dirichlet"
NEUMANN_LOWER = "NeumannLower"
NEUMANN_UPPER = "NeumannUpper"

BOUNDARY_TAGS = (DIRICHLET, NEUMANN_LOWER, NEUMANN_UPPER)


@dataclass(eq=False)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    vertices: (V, 2) float array; cells: (C, 3) int array, counterclockwise;
    boundary_edges: list of (i, j, tag).  n and grading record how the
    structured generator was invoked (refinement doubles n).
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: list[tuple[int, int, str]]
    n: int
    grading: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cell_coords(self) -> np.ndarray:
        """(C, 3, 2) array of cell vertex coordinates."""
        return self.vertices[self.cells]

    def signed_areas(self) -> np.ndarray:
        p = self.cell_coords()
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def barycenters(self) -> np.ndarray:
        return self.cell_coords().mean(axis=1)

    def edge_lengths(self) -> np.ndarray:
        p = self.cell_coords()
        out = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            out.append(np.linalg.norm(p[:, a] - p[:, b], axis=1))
        return np.stack(out, axis=1)

    @property
    def h(self) -> float:
        """Mesh size: the longest edge."""
        if "h" not in self._cache:
            self._cache["h"] = float(self.edge_lengths().max())
        return self._cache["h"]

    def dirichlet_vertices(self) -> np.ndarray:
        idx = set()
        for i, j, tag in self.boundary_edges:
            if tag == DIRICHLET:
                idx.add(i)
                idx.add(j)
        return np.array(sorted(idx), dtype=np.int64)

    def boundary_vertices(self, tag: str) -> np.ndarray:
        idx = set()
        for i, j, t in self.boundary_edges:
            if t == tag:
                idx.add(i)
                idx.add(j)
        return np.array(sorted(idx), dtype=np.int64)


def default_grading(spec: TriangleSpec) -> float:
    """Grading exponent restoring second-order accuracy near the obtuse corner."""
    if spec.gamma <= math.pi / 2 + 1e-12:
        return 1.0
    omega = math.pi / spec.gamma
    return max(1.0, 2.0 / omega)


def generate(spec: TriangleSpec, n: int, grading: float = 1.0) -> Mesh:
    """Structured barycentric subdivision with n cells per side."""
    if n < 1:
        raise ParamDomain(f"n must be >= 1, got {n}")
    if grading < 1.0:
        raise ParamDomain(f"grading must be >= 1, got {grading}")

    A = np.array(spec.A)
    B = np.array(spec.B)
    index = {}
    verts = []
    for s in range(n + 1):          # s = i + j, lattice shell counted from O
        shell = (s / n) ** grading if s else 0.0
        for i in range(s + 1):
            j = s - i
            if s:
                p = shell * (i * A + j * B) / s
            else:
                p = np.zeros(2)
            index[(i, j)] = len(verts)
            verts.append(p)

    cells = []
    for s in range(n):
        for i in range(s + 1):
            j = s - i
            cells.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
            if i + j <= n - 2:
                cells.append((index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]))

    boundary = []
    for i in range(n):
        boundary.append((index[(i, 0)], index[(i + 1, 0)], NEUMANN_LOWER))
        boundary.append((index[(0, i)], index[(0, i + 1)], NEUMANN_UPPER))
        boundary.append((index[(n - i, i)], index[(n - i - 1, i + 1)], DIRICHLET))

    return Mesh(np.array(verts), np.array(cells), boundary, n, grading)


def refine(mesh: Mesh) -> Mesh:
    """Midpoint 4-to-1 subdivision; coarse vertices are kept in place."""
    verts = [tuple(v) for v in mesh.vertices]
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            p = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
            midpoint[key] = len(verts)
            verts.append((p[0], p[1]))
        return midpoint[key]

    cells = []
    for a, b, c in mesh.cells:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        cells.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])

    boundary = []
    for i, j, tag in mesh.boundary_edges:
        m = mid(i, j)
        boundary.append((i, m, tag))
        boundary.append((m, j, tag))

    return Mesh(np.array(verts), np.array(cells), boundary, 2 * mesh.n, mesh.grading)


@dataclass
class MeshReport:
    violations: list[str]
    min_angle: float
    max_aspect: float

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(mesh: Mesh, spec: TriangleSpec | None = None) -> MeshReport:
    """Check orientation, conformity and boundary tags; never raises."""
    violations: list[str] = []

    areas = mesh.signed_areas()
    bad = np.nonzero(areas <= 1e-14)[0]
    for c in bad[:20]:
        violations.append(f"cell {c} has non-positive area {areas[c]:.3e}")

    edge_count: dict[tuple[int, int], int] = {}
    for a, b, c in mesh.cells:
        for i, j in ((a, b), (b, c), (c, a)):
            key = (i, j) if i < j else (j, i)
            edge_count[key] = edge_count.get(key, 0) + 1
    boundary_keys = set()
    for i, j, tag in mesh.boundary_edges:
        key = (i, j) if i < j else (j, i)
        boundary_keys.add(key)
        if tag not in BOUNDARY_TAGS:
            violations.append(f"edge {key} has unknown tag {tag!r}")
        if edge_count.get(key, 0) != 1:
            violations.append(f"tagged edge {key} is shared by {edge_count.get(key, 0)} cells")
    for key, cnt in edge_count.items():
        if cnt == 1 and key not in boundary_keys:
            violations.append(f"boundary edge {key} is untagged")
        elif cnt > 2:
            violations.append(f"edge {key} is shared by {cnt} cells")

    if spec is not None:
        carriers = {
            DIRICHLET: spec.dirichlet_carrier(),
            NEUMANN_LOWER: spec.lower_carrier(),
            NEUMANN_UPPER: spec.upper_carrier(),
        }
        for i, j, tag in mesh.boundary_edges:
            base, normal = carriers[tag]
            m = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
            d = abs((m[0] - base[0]) * normal[0] + (m[1] - base[1]) * normal[1])
            if d > 1e-10:
                violations.append(f"edge ({i},{j}) tagged {tag} is {d:.2e} off its side")

    lengths = mesh.edge_lengths()
    p = mesh.cell_coords()
    min_angle = math.inf
    for a, b in ((0, 1), (1, 2), (2, 0)):
        c = 3 - a - b
        u = p[:, a] - p[:, c]
        v = p[:, b] - p[:, c]
        cosang = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        min_angle = min(min_angle, float(np.arccos(np.clip(cosang, -1, 1)).min()))
    with np.errstate(divide="ignore"):
        aspect = lengths.max(axis=1) / np.where(areas > 0, 2.0 * areas / lengths.max(axis=1), np.inf)
    return MeshReport(violations, math.degrees(min_angle), float(aspect.max()))


# ---------------------------------------------------------------------------
# Line-oriented text format (bit-exact round trip)
# ---------------------------------------------------------------------------

def write_text(mesh: Mesh, stream: TextIO) -> None:
    stream.write(f"vertices {mesh.num_vertices} cells {mesh.num_cells}\n")
    for x, y in mesh.vertices:
        stream.write(f"{float(x)!r} {float(y)!r}\n")
    for a, b, c in mesh.cells:
        stream.write(f"{a} {b} {c}\n")
    for i, j, tag in mesh.boundary_edges:
        stream.write(f"{i} {j} {tag}\n")
    stream.write(f"meta n {mesh.n} grading {mesh.grading!r}\n")


def read_text(stream: TextIO) -> Mesh:
    header = stream.readline().split()
    if len(header) != 4 or header[0] != "vertices" or header[2] != "cells":
        raise ParamDomain(f"bad mesh header: {' '.join(header)!r}")
    nv, nc = int(header[1]), int(header[3])
    verts = np.empty((nv, 2))
    for k in range(nv):
        xs, ys = stream.readline().split()
        verts[k] = (float(xs), float(ys))
    cells = np.empty((nc, 3), dtype=np.int64)
    for k in range(nc):
        cells[k] = [int(t) for t in stream.readline().split()]
    boundary: list[tuple[int, int, str]] = []
    n, grading = 0, 1.0
    for line in stream:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "meta":
            n, grading = int(parts[2]), float(parts[4])
            break
        boundary.append((int(parts[0]), int(parts[1]), parts[2]))
    return Mesh(verts, cells, boundary, n, grading)


def save(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_text(mesh, f)


def load(path) -> Mesh:
    with open(path, "r", encoding="utf-8") as f:
        return read_text(f)
