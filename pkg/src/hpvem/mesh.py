"""Polygonal meshes: topology derivation, shape-regularity reporting,
vertex patches, and centroid-fan refinement with hanging nodes.

A mesh is immutable once built; `refine` returns a new mesh whose
`parent_cells` array maps each new cell to the cell it came from.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import geometry


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


@dataclass(frozen=True)
class Edge:
    v0: int
    v1: int
    left: int             # cell traversing v0 -> v1
    right: int | None     # cell traversing v1 -> v0, None on the boundary

    @property
    def boundary(self) -> bool:
        return self.right is None


@dataclass
class VertexPatch:
    vertex: int
    cells: list[int]
    interior_edges: list[int]   # internal edges of the domain with this endpoint
    rim_edges: list[int]        # edges on the patch boundary
    is_boundary_vertex: bool


@dataclass
class CellShapeReport:
    cell: int
    inball_radius: float
    radius_ratio: float       # r_B / h_K, compared against gamma
    max_edge_ratio: float     # max over edges of h_K / h_e, vs gamma_tilde
    passes_a1: bool
    passes_a2: bool


@dataclass
class ValidationReport:
    gamma: float
    gamma_tilde: float
    cells: list[CellShapeReport]

    @property
    def passed(self) -> bool:
        return all(c.passes_a1 and c.passes_a2 for c in self.cells)


class PolygonalMesh:
    def __init__(self, vertices: np.ndarray, cells: list[list[int]],
                 parent_cells: np.ndarray | None = None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = [np.asarray(c, dtype=int) for c in cells]
        self.parent_cells = parent_cells
        self._check_cells()
        self._derive_topology()

    # -- construction --------------------------------------------------------
    def _check_cells(self):
        for ci, loop in enumerate(self.cells):
            verts = self.vertices[loop]
            if len(loop) < 3:
                raise MeshError(f"cell {ci} has fewer than 3 vertices")
            a = geometry.signed_area(verts)
            if a <= 0:
                raise MeshError(f"cell {ci} is not CCW oriented (signed area {a})")
            if not geometry.is_simple(verts):
                raise MeshError(f"cell {ci} is not a simple polygon")

    def _derive_topology(self):
        edge_of: dict[tuple[int, int], int] = {}
        edges: list[Edge] = []
        cell_edges: list[list[tuple[int, int]]] = []
        for ci, loop in enumerate(self.cells):
            entry = []
            m = len(loop)
            for i in range(m):
                a, b = int(loop[i]), int(loop[(i + 1) % m])
                key = (min(a, b), max(a, b))
                if key not in edge_of:
                    edge_of[key] = len(edges)
                    edges.append(Edge(a, b, ci, None))
                    entry.append((edge_of[key], +1))
                else:
                    ei = edge_of[key]
                    e = edges[ei]
                    if e.right is not None:
                        raise MeshError(f"edge {key} borders more than two cells")
                    if (a, b) != (e.v1, e.v0):
                        raise MeshError(
                            f"cells {e.left} and {ci} traverse edge {key} "
                            "in the same direction (orientation error)")
                    edges[ei] = Edge(e.v0, e.v1, e.left, ci)
                    entry.append((ei, -1))
            cell_edges.append(entry)
        self.edges = edges
        self.cell_edges = cell_edges
        self.boundary_flags = np.array([e.boundary for e in edges])
        self.n_cells = len(self.cells)
        self.n_vertices = len(self.vertices)
        self.n_edges = len(edges)
        bverts = set()
        for e in edges:
            if e.boundary:
                bverts.update((e.v0, e.v1))
        self.boundary_vertices = bverts

    # -- geometry accessors ---------------------------------------------------
    def cell_coords(self, ci: int) -> np.ndarray:
        return self.vertices[self.cells[ci]]

    def cell_area(self, ci: int) -> float:
        return geometry.signed_area(self.cell_coords(ci))

    def cell_diameter(self, ci: int) -> float:
        return geometry.diameter(self.cell_coords(ci))

    def edge_coords(self, ei: int) -> tuple[np.ndarray, np.ndarray]:
        e = self.edges[ei]
        return self.vertices[e.v0], self.vertices[e.v1]

    def edge_length(self, ei: int) -> float:
        a, b = self.edge_coords(ei)
        return float(np.hypot(*(b - a)))

    def edge_normal(self, ei: int) -> np.ndarray:
        """Unit normal pointing out of the edge's left cell."""
        a, b = self.edge_coords(ei)
        t = (b - a) / np.hypot(*(b - a))
        return np.array([t[1], -t[0]])

    def total_area(self) -> float:
        return sum(self.cell_area(ci) for ci in range(self.n_cells))

    # -- serialization --------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({
            "vertices": self.vertices.tolist(),
            "cells": [c.tolist() for c in self.cells],
        })

    @classmethod
    def from_json(cls, text: str) -> "PolygonalMesh":
        try:
            data = json.loads(text)
            vertices = np.array(data["vertices"], dtype=float)
            cells = [list(map(int, c)) for c in data["cells"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"mesh file does not parse: {exc}") from exc
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an array of 2-D points")
        return cls(vertices, cells)


def load_mesh(source: str) -> PolygonalMesh:
    """Load a mesh from a JSON file path, JSON text, or a generator spec
    like 'lshape(2)'."""
    src = source.strip()
    if src.startswith("{"):
        return PolygonalMesh.from_json(src)
    if os.path.isfile(src):
        with open(src) as fh:
            return PolygonalMesh.from_json(fh.read())
    if src.startswith("lshape(") and src.endswith(")"):
        return lshape_mesh(int(src[7:-1]))
    if src.startswith("square(") and src.endswith(")"):
        return square_mesh(int(src[7:-1]))
    raise MeshError(f"unrecognized mesh source {source!r}")


def square_mesh(n: int) -> PolygonalMesh:
    """n x n Cartesian grid of squares on (0, 1)^2."""
    xs = np.linspace(0.0, 1.0, n + 1)
    vid = lambda i, j: j * (n + 1) + i
    vertices = np.array([[xs[i], xs[j]] for j in range(n + 1) for i in range(n + 1)])
    cells = []
    for j in range(n):
        for i in range(n):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return PolygonalMesh(vertices, cells)


def lshape_mesh(n: int) -> PolygonalMesh:
    """L-shaped domain (-1,1)^2 minus the closed third quadrant, tiled by
    3 n^2 squares of side 1/n (n=2 gives the 12-square benchmark mesh)."""
    xs = np.linspace(-1.0, 1.0, 2 * n + 1)
    index = {}
    vertices = []
    cells = []

    def vid(i, j):
        if (i, j) not in index:
            index[(i, j)] = len(vertices)
            vertices.append([xs[i], xs[j]])
        return index[(i, j)]

    for j in range(2 * n):
        for i in range(2 * n):
            # drop cells inside the removed quadrant x <= 0, y <= 0
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (xs[j] + xs[j + 1])
            if cx < 0 and cy < 0:
                continue
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return PolygonalMesh(np.array(vertices), cells)


def validate(mesh: PolygonalMesh, gamma: float, gamma_tilde: float) -> ValidationReport:
    """Report-only check of the star-shapedness (A1) and edge-length (A2)
    mesh assumptions, cell by cell."""
    reports = []
    for ci in range(mesh.n_cells):
        verts = mesh.cell_coords(ci)
        _, r_b = geometry.kernel_chebyshev_ball(verts)
        h_k = mesh.cell_diameter(ci)
        ratio = r_b / h_k
        edge_ratio = max(h_k / mesh.edge_length(ei) for ei, _ in mesh.cell_edges[ci])
        reports.append(CellShapeReport(
            cell=ci,
            inball_radius=r_b,
            radius_ratio=ratio,
            max_edge_ratio=edge_ratio,
            passes_a1=ratio >= gamma,
            passes_a2=edge_ratio <= gamma_tilde,
        ))
    return ValidationReport(gamma, gamma_tilde, reports)


def vertex_patches(mesh: PolygonalMesh) -> list[VertexPatch]:
    """One patch per mesh vertex: the cells containing it, the internal
    edges emanating from it, and the patch-boundary edges."""
    cells_of_vertex: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    for ci, loop in enumerate(mesh.cells):
        for v in loop:
            cells_of_vertex[int(v)].append(ci)
    edges_of_vertex: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    for ei, e in enumerate(mesh.edges):
        edges_of_vertex[e.v0].append(ei)
        edges_of_vertex[e.v1].append(ei)
    patches = []
    for v in range(mesh.n_vertices):
        patch_cells = cells_of_vertex[v]
        cell_set = set(patch_cells)
        interior = [ei for ei in edges_of_vertex[v] if not mesh.edges[ei].boundary]
        for ei in interior:
            e = mesh.edges[ei]
            if e.left not in cell_set or e.right not in cell_set:
                raise MeshError(
                    f"edge {ei} at vertex {v} borders a cell outside the patch")
        rim = []
        for ci in patch_cells:
            for ei, _ in mesh.cell_edges[ci]:
                e = mesh.edges[ei]
                other = e.right if e.left == ci else e.left
                if e.boundary or other not in cell_set:
                    rim.append(ei)
        patches.append(VertexPatch(
            vertex=v,
            cells=patch_cells,
            interior_edges=interior,
            rim_edges=sorted(set(rim)),
            is_boundary_vertex=v in mesh.boundary_vertices,
        ))
    return patches


def refine(mesh: PolygonalMesh, marked: set[int]) -> PolygonalMesh:
    """Centroid-fan split of the marked cells (edge midpoints + centroid;
    quads split into 4 quads). Unmarked neighbors keep their shape and pick
    up hanging vertices on shared edges."""
    marked = set(int(m) for m in marked)
    vertices = [tuple(v) for v in mesh.vertices]
    midpoints: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in midpoints:
            midpoints[key] = len(vertices)
            vertices.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
        return midpoints[key]

    for ci in marked:
        loop = mesh.cells[ci]
        m = len(loop)
        for i in range(m):
            midpoint(int(loop[i]), int(loop[(i + 1) % m]))

    new_cells: list[list[int]] = []
    parents: list[int] = []
    for ci, loop in enumerate(mesh.cells):
        m = len(loop)
        if ci in marked:
            center = len(vertices)
            vertices.append(tuple(geometry.centroid(mesh.vertices[loop])))
            mids = [midpoint(int(loop[i]), int(loop[(i + 1) % m])) for i in range(m)]
            for i in range(m):
                new_cells.append([int(loop[i]), mids[i], center, mids[i - 1]])
                parents.append(ci)
        else:
            out: list[int] = []
            for i in range(m):
                a, b = int(loop[i]), int(loop[(i + 1) % m])
                out.append(a)
                key = (min(a, b), max(a, b))
                if key in midpoints:
                    out.append(midpoints[key])
            new_cells.append(out)
            parents.append(ci)
    return PolygonalMesh(np.array(vertices, dtype=float), new_cells,
                         parent_cells=np.array(parents, dtype=int))
