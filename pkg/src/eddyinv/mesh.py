"""Structured tetrahedral meshes of a layered box and the derived dof maps.

The box is cut into ``nx * ny * nz`` hexahedra and every hexahedron is
split into six tetrahedra sharing its main diagonal (Freudenthal/Kuhn
split).  The split is conforming across cells and nested under uniform
refinement, which the refined-data mode relies on.

Vertex numbering is lexicographic, ``i + (nx+1) * (j + (ny+1) * k)``.
Edges are oriented from the lower to the higher global vertex index.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import permutations

import numpy as np

AIR = 0
CONDUCTOR = 1

GAMMA = 0
GAMMA_D = 1

# local edge -> (local vertex a, local vertex b)
LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
# local face k is opposite local vertex k
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
# triangle edges in local face numbering
TRI_EDGES = np.array([[0, 1], [0, 2], [1, 2]])


class MeshError(ValueError):
    """Raised for inconsistent mesh parameters."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with region and boundary labels.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, positively oriented
    region : (nt,) int array, ``AIR`` or ``CONDUCTOR``
    edges : (ne, 2) int array, sorted vertex pairs
    tet_edges : (nt, 6) global edge index of each local edge
    tet_edge_signs : (nt, 6) +1 if the local edge direction matches the global one
    boundary_faces : (nb, 3) int array of vertex indices
    boundary_labels : (nb,) int array, ``GAMMA`` or ``GAMMA_D``
    boundary_face_tet : (nb,) the tet owning each boundary face
    interface_faces : (ni, 3) faces on the air/conductor interface
    """

    vertices: np.ndarray
    tets: np.ndarray
    region: np.ndarray
    edges: np.ndarray
    tet_edges: np.ndarray
    tet_edge_signs: np.ndarray
    boundary_faces: np.ndarray
    boundary_labels: np.ndarray
    boundary_face_tet: np.ndarray
    interface_faces: np.ndarray
    bounds: tuple
    divisions: tuple
    z_interface: float
    z_top: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def spacing(self) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return (hi - lo) / np.array(self.divisions)

    @property
    def gamma_faces(self) -> np.ndarray:
        return self.boundary_faces[self.boundary_labels == GAMMA]

    def mesh_hash(self) -> str:
        """Short content hash identifying vertices and connectivity."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.tets, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.region, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    def edge_lookup(self) -> dict:
        """Map sorted vertex pair -> global edge index."""
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    def cell_of_point(self, p) -> tuple[int, int, int]:
        lo = np.array([b[0] for b in self.bounds])
        idx = np.floor((np.asarray(p, float) - lo) / self.spacing).astype(int)
        return tuple(int(v) for v in np.clip(idx, 0, np.array(self.divisions) - 1))

    def tets_of_cell(self, cell) -> np.ndarray:
        nx, ny, _ = self.divisions
        i, j, k = cell
        c = i + nx * (j + ny * k)
        return np.arange(6 * c, 6 * c + 6)


def _plane_index(value: float, lo: float, hi: float, n: int, name: str) -> int:
    t = (value - lo) / (hi - lo) * n
    k = int(round(t))
    if abs(t - k) > 1e-9 * max(1, n) or not 0 <= k <= n:
        raise MeshError(
            f"{name}={value} is not aligned with a mesh plane "
            f"(z planes are {lo} + k*{(hi - lo) / n:g}, k=0..{n})"
        )
    return k


def build_box_mesh(bounds, divisions, z_interface: float, z_top: float) -> TetMesh:
    """Build a conforming 6-tets-per-hexahedron mesh of a box.

    Tets whose centroid lies above ``z_interface`` are tagged ``AIR``; the
    top plane ``z_top`` carries the measurement surface.
    """
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    divisions = tuple(int(n) for n in divisions)
    if len(bounds) != 3 or len(divisions) != 3:
        raise MeshError("bounds and divisions must have three entries")
    for (a, b), n in zip(bounds, divisions):
        if not b > a:
            raise MeshError(f"degenerate interval [{a}, {b}]")
        if n < 1:
            raise MeshError(f"divisions must be positive, got {divisions}")
    nx, ny, nz = divisions
    (x0, x1), (y0, y1), (z0, z1) = bounds
    if not z_interface < z_top:
        raise MeshError(f"z_interface={z_interface} must lie below z_top={z_top}")
    k_top = _plane_index(z_top, z0, z1, nz, "z_top")
    if k_top != nz:
        raise MeshError(f"z_top={z_top} must be the upper z bound {z1}")
    k_int = _plane_index(z_interface, z0, z1, nz, "z_interface")

    xs = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    ys = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    zs = z0 + (z1 - z0) * np.arange(nz + 1) / nz
    xs[-1], ys[-1], zs[-1] = x1, y1, z1
    zs[k_int] = z_interface
    zs[k_top] = z_top
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    sx, sy, sz = 1, nx + 1, (nx + 1) * (ny + 1)
    K, J, I = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (I + sy * J + sz * K).ravel()  # cell order: i fastest
    step = np.array([sx, sy, sz])
    tets = np.empty((len(base), 6, 4), dtype=np.int64)
    for t, perm in enumerate(permutations(range(3))):
        c1 = base + step[perm[0]]
        c2 = c1 + step[perm[1]]
        tets[:, t] = np.column_stack([base, c1, c2, base + sx + sy + sz])
    tets = tets.reshape(-1, 4)

    p = vertices[tets]
    vol6 = np.einsum("ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]))
    neg = vol6 < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()

    centroid_z = vertices[tets, 2].mean(axis=1)
    region = np.where(centroid_z > z_interface, AIR, CONDUCTOR)

    pairs = np.sort(tets[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    tet_edges = inv.reshape(-1, 6)
    tet_edge_signs = np.where(tets[:, LOCAL_EDGES[:, 0]] < tets[:, LOCAL_EDGES[:, 1]], 1, -1)

    faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    uf, finv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    finv = finv.ravel()
    owner = np.empty(len(uf), dtype=np.int64)
    owner[finv] = np.repeat(np.arange(len(tets)), 4)
    bmask = counts == 1
    boundary_faces = uf[bmask]
    boundary_face_tet = owner[bmask]
    tol = 1e-9 * (z1 - z0)
    on_top = np.all(np.abs(vertices[boundary_faces, 2] - z_top) < tol, axis=1)
    boundary_labels = np.where(on_top, GAMMA, GAMMA_D)
    on_int = np.all(np.abs(vertices[uf, 2] - z_interface) < tol, axis=1)
    interface_faces = uf[on_int & (counts == 2)]

    return TetMesh(
        vertices=_frozen(vertices),
        tets=_frozen(tets),
        region=_frozen(region),
        edges=_frozen(edges),
        tet_edges=_frozen(tet_edges),
        tet_edge_signs=_frozen(tet_edge_signs),
        boundary_faces=_frozen(boundary_faces),
        boundary_labels=_frozen(boundary_labels),
        boundary_face_tet=_frozen(boundary_face_tet),
        interface_faces=_frozen(interface_faces),
        bounds=bounds,
        divisions=divisions,
        z_interface=float(z_interface),
        z_top=float(z_top),
    )


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of the three unknown families.

    ``edge_to_free``, ``node_to_mult`` and ``node_to_cond`` hold -1 for
    entities that carry no unknown.
    """

    free_edges: np.ndarray
    edge_to_free: np.ndarray
    mult_nodes: np.ndarray
    node_to_mult: np.ndarray
    cond_nodes: np.ndarray
    node_to_cond: np.ndarray
    gamma_edges: np.ndarray
    gamma_face_edges: np.ndarray

    @property
    def n_free_edges(self) -> int:
        return len(self.free_edges)

    @property
    def n_mult(self) -> int:
        return len(self.mult_nodes)

    @property
    def n_cond(self) -> int:
        return len(self.cond_nodes)

    @property
    def n_state(self) -> int:
        return self.n_free_edges + self.n_mult

    @property
    def essential_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_to_free < 0)


def _renumber(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ids = np.flatnonzero(mask)
    inv = np.full(len(mask), -1, dtype=np.int64)
    inv[ids] = np.arange(len(ids))
    return _frozen(ids), _frozen(inv)


def build_dof_maps(mesh: TetMesh) -> DofMap:
    nv, ne = mesh.n_vertices, mesh.n_edges
    lookup = mesh.edge_lookup()

    def face_edges(faces):
        out = np.empty((len(faces), 3), dtype=np.int64)
        for f, tri in enumerate(faces):
            for k, (a, b) in enumerate(TRI_EDGES):
                out[f, k] = lookup[(int(tri[a]), int(tri[b]))]
        return out

    dface = mesh.boundary_faces[mesh.boundary_labels == GAMMA_D]
    essential = np.zeros(ne, dtype=bool)
    essential[face_edges(dface).ravel()] = True
    free_edges, edge_to_free = _renumber(~essential)

    air_face = mesh.region[mesh.boundary_face_tet] == AIR
    in_air = np.zeros(nv, dtype=bool)
    in_air[mesh.tets[mesh.region == AIR].ravel()] = True
    excl = np.zeros(nv, dtype=bool)
    excl[mesh.boundary_faces[(mesh.boundary_labels == GAMMA_D) & air_face].ravel()] = True
    excl[mesh.interface_faces.ravel()] = True
    mult_nodes, node_to_mult = _renumber(in_air & ~excl)

    in_cond = np.zeros(nv, dtype=bool)
    in_cond[mesh.tets[mesh.region == CONDUCTOR].ravel()] = True
    excl = np.zeros(nv, dtype=bool)
    excl[mesh.boundary_faces[~air_face].ravel()] = True
    excl[mesh.interface_faces.ravel()] = True
    cond_nodes, node_to_cond = _renumber(in_cond & ~excl)

    # boundary faces are already vertex-sorted, so tri edges point low -> high
    gfaces = mesh.gamma_faces
    gfe = face_edges(gfaces)
    gamma_edges = np.unique(gfe)
    local = np.searchsorted(gamma_edges, gfe)

    return DofMap(
        free_edges=free_edges,
        edge_to_free=edge_to_free,
        mult_nodes=mult_nodes,
        node_to_mult=node_to_mult,
        cond_nodes=cond_nodes,
        node_to_cond=node_to_cond,
        gamma_edges=_frozen(gamma_edges),
        gamma_face_edges=_frozen(local),
    )


def write_vtk(path, mesh: TetMesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "eddyinv mesh") -> None:
    """Write a legacy ASCII VTK unstructured grid (cell type 10)."""
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    nt = mesh.n_tets
    lines.append(f"CELLS {nt} {5 * nt}")
    lines += ["4 %d %d %d %d" % tuple(t) for t in mesh.tets.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["10"] * nt
    cell_data = {"region": mesh.region, **(cell_data or {})}
    lines.append(f"CELL_DATA {nt}")
    for name, vals in cell_data.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in np.asarray(vals).ravel()]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, vals in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in np.asarray(vals).ravel()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
