"""Lowest-order Nedelec and P1 element matrices and global assembly.

Whitney functions on a tet are ``N_ab = l_a grad(l_b) - l_b grad(l_a)`` for
the local edges in ``mesh.LOCAL_EDGES``; their curls ``2 grad(l_a) x grad(l_b)``
are constant per element.  All local routines work on batches of elements,
shape ``(n, 4, 3)`` for vertex coordinates; the single-element wrappers at
the bottom exist for testing and for callers outside the assembly loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import Factorization, nested_dissection
from .mesh import AIR, CONDUCTOR, LOCAL_EDGES, DofMap, TetMesh
from .quadrature import TET_POINTS, TET_WEIGHTS, TRI_POINTS, TRI_WEIGHTS


class DegenerateElementError(ValueError):
    def __init__(self, element: int, volume: float):
        super().__init__(f"element {element} is degenerate (volume {volume:.3e})")
        self.element = element


class SourcePlacementError(ValueError):
    def __init__(self, index: int, point):
        super().__init__(
            f"source point {index} at {tuple(point)} lies on an element "
            "boundary or outside the mesh; move the point or change the mesh"
        )
        self.index = index


@dataclass(frozen=True)
class Material:
    """Piecewise constant coefficients.

    ``mu`` may be a single value or an ``(air, conductor)`` pair.
    ``sigma0`` is the background conductivity of the conductor region.
    """

    mu: float | tuple = 1.0
    eps: float = 1.0
    sigma0: float = 1.0
    omega: float = 0.79

    def __post_init__(self):
        mu = np.broadcast_to(np.asarray(self.mu, float), (2,))
        if np.any(mu <= 0) or self.eps <= 0 or self.sigma0 < 0 or self.omega <= 0:
            raise ValueError(f"invalid material parameters {self}")

    def mu_of_region(self, region: np.ndarray) -> np.ndarray:
        mu = np.broadcast_to(np.asarray(self.mu, float), (2,))
        return np.where(region == AIR, mu[0], mu[1])


# ---------------------------------------------------------------------------
# batched element kernels

def tet_geometry(p: np.ndarray, ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Volumes ``(n,)`` and barycentric gradients ``(n, 4, 3)``."""
    jac = p[:, 1:] - p[:, :1]
    det = np.linalg.det(jac)
    vol = det / 6.0
    bad = np.flatnonzero(~(vol > 1e-14 * np.abs(jac).max(axis=(1, 2)) ** 3))
    if len(bad):
        k = int(bad[0])
        raise DegenerateElementError(int(ids[k]) if ids is not None else k, float(vol[k]))
    g = np.linalg.inv(jac)  # columns are grad(l_1..l_3)
    grads = np.empty((len(p), 4, 3))
    grads[:, 1:] = np.swapaxes(g, 1, 2)
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    return vol, grads


def whitney_curls(grads: np.ndarray) -> np.ndarray:
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return 2.0 * np.cross(grads[:, a], grads[:, b])


def whitney_values(grads: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Whitney functions at barycentric points: ``(n, nq, 6, 3)``."""
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    la, lb = bary[:, a], bary[:, b]  # (nq, 6)
    return (la[None, :, :, None] * grads[:, None, b, :]
            - lb[None, :, :, None] * grads[:, None, a, :])


def batch_curl_curl(vol, grads, mu) -> np.ndarray:
    c = whitney_curls(grads)
    return (np.asarray(vol) / np.asarray(mu))[:, None, None] * np.einsum("nik,njk->nij", c, c)


def batch_mass_moments(vol, grads) -> np.ndarray:
    """``W[n, a, i, j] = int l_a N_i . N_j`` so a linear weight gives ``sum_a w_a W[a]``."""
    N = whitney_values(grads, TET_POINTS)
    return vol[:, None, None, None] * np.einsum(
        "q,qa,nqik,nqjk->naij", TET_WEIGHTS, TET_POINTS, N, N)


def batch_edge_mass(vol, grads, weight) -> np.ndarray:
    return np.einsum("na,naij->nij", np.asarray(weight, float), batch_mass_moments(vol, grads))


def batch_grad_coupling(vol, grads, eps) -> np.ndarray:
    """``C[n, i, p] = int eps N_i . grad(l_p)``."""
    N = whitney_values(grads, TET_POINTS)
    mean_N = np.einsum("q,nqik->nik", TET_WEIGHTS, N)
    return (eps * vol)[:, None, None] * np.einsum("nik,npk->nip", mean_N, grads)


def batch_p1(vol, grads, coeff=1.0):
    coeff = np.broadcast_to(np.asarray(coeff, float), vol.shape)
    stiff = (coeff * vol)[:, None, None] * np.einsum("nak,nbk->nab", grads, grads)
    mass = (coeff * vol / 20.0)[:, None, None] * (np.ones((4, 4)) + np.eye(4))
    return stiff, mass


def face_tangential_mass(tri: np.ndarray) -> np.ndarray:
    """2D Whitney mass of a triangle, local edges (0,1), (0,2), (1,2).

    The tangential trace of a 3D Whitney function on a face is the 2D
    Whitney function built from the surface gradients of the face's
    barycentric coordinates.
    """
    tri = np.asarray(tri, float)
    J = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    G = J @ np.linalg.inv(J.T @ J)  # columns: surface grads of l_1, l_2
    area = 0.5 * np.linalg.norm(np.cross(J[:, 0], J[:, 1]))
    if not area > 0:
        raise DegenerateElementError(-1, area)
    grads = np.stack([-G[:, 0] - G[:, 1], G[:, 0], G[:, 1]])
    edges = ((0, 1), (0, 2), (1, 2))
    vals = np.stack([TRI_POINTS[:, a, None] * grads[b] - TRI_POINTS[:, b, None] * grads[a]
                     for a, b in edges], axis=1)  # (nq, 3, 3)
    return area * np.einsum("q,qik,qjk->ij", TRI_WEIGHTS, vals, vals)


# single-element wrappers

def local_curl_curl(verts, mu: float = 1.0) -> np.ndarray:
    vol, g = tet_geometry(np.asarray(verts, float)[None])
    return batch_curl_curl(vol, g, [mu])[0]


def local_edge_mass(verts, weight=(1.0, 1.0, 1.0, 1.0)) -> np.ndarray:
    vol, g = tet_geometry(np.asarray(verts, float)[None])
    return batch_edge_mass(vol, g, np.asarray(weight, float)[None])[0]


def local_grad_coupling(verts, eps: float = 1.0, region: int = AIR) -> np.ndarray:
    if region != AIR:
        raise ValueError("gradient coupling is only defined on air elements")
    vol, g = tet_geometry(np.asarray(verts, float)[None])
    return batch_grad_coupling(vol, g, eps)[0]


def local_p1(verts, coeff: float = 1.0):
    vol, g = tet_geometry(np.asarray(verts, float)[None])
    k, m = batch_p1(vol, g, coeff)
    return k[0], m[0]


def edge_incidence() -> np.ndarray:
    """Local signed incidence: ``grad(l_p) = sum_i G[i, p] N_i`` with local orientation."""
    G = np.zeros((6, 4))
    for i, (a, b) in enumerate(LOCAL_EDGES):
        G[i, a], G[i, b] = -1.0, 1.0
    return G


# ---------------------------------------------------------------------------
# global assembly

def _coo(rows, cols, vals, shape) -> sp.csr_matrix:
    m = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape)
    m.sum_duplicates()
    return m.tocsr()


@dataclass(eq=False)
class SaddleSystem:
    """``[[A, B^T], [B, 0]]`` over free edges then multiplier nodes."""

    matrix: sp.csc_matrix
    n_edges: int
    n_mult: int

    @property
    def A(self):
        return self.matrix[: self.n_edges, : self.n_edges]

    @property
    def B(self):
        return self.matrix[self.n_edges:, : self.n_edges]


class Discretization:
    """Sigma-independent assembled operators for one mesh and material.

    The conductivity enters only through the weighted edge mass on the
    conductor, stored as a linear map from nodal values to the CSR data
    array of a fixed sparsity pattern (``mass_operator``).
    """

    def __init__(self, mesh: TetMesh, dofmap: DofMap, material: Material):
        self.mesh = mesh
        self.dofmap = dofmap
        self.material = material
        p = mesh.vertices[mesh.tets]
        self.volumes, self.grads = tet_geometry(p, np.arange(mesh.n_tets))
        self.signs = mesh.tet_edge_signs.astype(float)
        self.free_of_tet = dofmap.edge_to_free[mesh.tet_edges]
        self.cond_tets = np.flatnonzero(mesh.region == CONDUCTOR)
        self.air_tets = np.flatnonzero(mesh.region == AIR)

    @property
    def n_free(self) -> int:
        return self.dofmap.n_free_edges

    def _edge_block(self, tets, local) -> sp.csr_matrix:
        """Assemble signed local 6x6 blocks over free edges."""
        ss = self.signs[tets][:, :, None] * self.signs[tets][:, None, :]
        f = self.free_of_tet[tets]
        r = np.broadcast_to(f[:, :, None], local.shape)
        c = np.broadcast_to(f[:, None, :], local.shape)
        keep = (r >= 0) & (c >= 0)
        n = self.n_free
        return _coo(r[keep], c[keep], (ss * local)[keep], (n, n))

    @cached_property
    def curl_curl(self) -> sp.csr_matrix:
        t = np.arange(self.mesh.n_tets)
        mu = self.material.mu_of_region(self.mesh.region)
        return self._edge_block(t, batch_curl_curl(self.volumes, self.grads, mu))

    @cached_property
    def curl_curl_unit(self) -> sp.csr_matrix:
        t = np.arange(self.mesh.n_tets)
        return self._edge_block(t, batch_curl_curl(self.volumes, self.grads, np.ones(len(t))))

    @cached_property
    def unit_edge_mass(self) -> sp.csr_matrix:
        t = np.arange(self.mesh.n_tets)
        return self._edge_block(t, batch_edge_mass(self.volumes, self.grads, np.ones((len(t), 4))))

    @cached_property
    def _moments(self) -> np.ndarray:
        t = self.cond_tets
        return batch_mass_moments(self.volumes[t], self.grads[t])

    @cached_property
    def mass_operator(self):
        """``(rows, cols, P)`` with ``M_w.data = P @ w_nodes`` for nodal weight ``w``."""
        t = self.cond_tets
        W = self._moments
        ss = self.signs[t][:, :, None] * self.signs[t][:, None, :]
        f = self.free_of_tet[t]
        r = np.broadcast_to(f[:, :, None], (len(t), 6, 6))
        c = np.broadcast_to(f[:, None, :], (len(t), 6, 6))
        keep = (r >= 0) & (c >= 0)
        n = self.n_free
        key = (r.astype(np.int64) * n + c)[keep]
        uniq, slot = np.unique(key, return_inverse=True)
        rows, cols = uniq // n, uniq % n
        # one P entry per (local entry, vertex)
        vals = (ss[:, None] * W)  # (nt, 4, 6, 6)
        vals = np.moveaxis(vals, 1, -1)[keep]  # (nkeep, 4)
        nodes = np.broadcast_to(self.mesh.tets[t][:, None, None, :], (len(t), 6, 6, 4))[keep]
        P = _coo(np.repeat(slot, 4), nodes.ravel(), vals.ravel(),
                 (len(uniq), self.mesh.n_vertices))
        return rows, cols, P

    def _pattern_matrix(self, data) -> sp.csr_matrix:
        rows, cols, _ = self.mass_operator
        n = self.n_free
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return sp.csr_matrix((data, cols, indptr), shape=(n, n))

    def weighted_mass(self, nodal_weight: np.ndarray) -> sp.csr_matrix:
        """Conductor edge mass with a piecewise-linear weight given at all vertices."""
        _, _, P = self.mass_operator
        return self._pattern_matrix(P @ np.asarray(nodal_weight))

    def sigma_nodal(self, sigma) -> np.ndarray:
        """Expand conductivity unknowns to all vertices (zero elsewhere)."""
        full = np.zeros(self.mesh.n_vertices, dtype=np.result_type(sigma, float))
        full[self.dofmap.cond_nodes] = sigma
        return full

    def sigma_mass(self, sigma) -> sp.csr_matrix:
        return self.weighted_mass(self.sigma_nodal(sigma))

    @cached_property
    def background_mass(self) -> sp.csr_matrix:
        return self.weighted_mass(np.full(self.mesh.n_vertices, self.material.sigma0))

    @cached_property
    def coupling(self) -> sp.csr_matrix:
        """``B[p, k] = int_air eps N_k . grad(l_p)`` over multiplier and free-edge unknowns."""
        t = self.air_tets
        C = batch_grad_coupling(self.volumes[t], self.grads[t], self.material.eps)
        C = C * self.signs[t][:, :, None]
        f = self.free_of_tet[t]
        m = self.dofmap.node_to_mult[self.mesh.tets[t]]
        r = np.broadcast_to(m[:, None, :], C.shape)
        c = np.broadcast_to(f[:, :, None], C.shape)
        keep = (r >= 0) & (c >= 0)
        return _coo(r[keep], c[keep], C[keep], (self.dofmap.n_mult, self.n_free))

    @cached_property
    def base_matrix(self) -> sp.csc_matrix:
        """Saddle matrix at sigma = 0."""
        A0 = (self.curl_curl - 1j * self.material.omega * self.background_mass).astype(complex)
        B = self.coupling
        return sp.bmat([[A0, B.T], [B, None]], format="csc")

    def state_system(self, sigma=None) -> SaddleSystem:
        if sigma is None or not np.any(sigma):
            S = self.base_matrix
        else:
            Ms = self.sigma_mass(sigma)
            n = self.dofmap.n_state
            Ms = sp.csr_matrix((Ms.data, Ms.indices, np.r_[Ms.indptr, np.full(n - self.n_free, Ms.indptr[-1])]),
                               shape=(n, n))
            S = (self.base_matrix - 1j * self.material.omega * Ms).tocsc()
        return SaddleSystem(S, self.n_free, self.dofmap.n_mult)

    @cached_property
    def ordering(self):
        # sigma only changes values inside the background-mass pattern
        return nested_dissection(self.base_matrix)

    def factorize(self, sigma=None) -> Factorization:
        return Factorization(self.state_system(sigma).matrix, self.ordering)

    @cached_property
    def discrete_gradient(self) -> sp.csr_matrix:
        """Global incidence ``G``: free-edge coefficients of grad of a nodal field."""
        e = self.mesh.edges
        ne = self.mesh.n_edges
        G = _coo(np.repeat(np.arange(ne), 2), e.ravel(),
                 np.tile([-1.0, 1.0], ne), (ne, self.mesh.n_vertices))
        return G[self.dofmap.free_edges]

    # -- conductor P1 operators over conductivity unknowns --------------------

    @cached_property
    def _p1_full(self):
        t = self.cond_tets
        k, m = batch_p1(self.volumes[t], self.grads[t])
        tv = self.mesh.tets[t]
        r = np.broadcast_to(tv[:, :, None], k.shape)
        c = np.broadcast_to(tv[:, None, :], k.shape)
        nv = self.mesh.n_vertices
        return _coo(r, c, k, (nv, nv)), _coo(r, c, m, (nv, nv))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        idx = self.dofmap.cond_nodes
        return self._p1_full[0][idx][:, idx].tocsr()

    @cached_property
    def mass(self) -> sp.csr_matrix:
        idx = self.dofmap.cond_nodes
        return self._p1_full[1][idx][:, idx].tocsr()

    def sigma_load(self, E: np.ndarray, F: np.ndarray) -> np.ndarray:
        """``l_n = int_c (E . F) l_n`` (unconjugated) for each conductivity unknown.

        ``E`` and ``F`` are full edge vectors.
        """
        rows, cols, P = self.mass_operator
        fe = self.dofmap.free_edges
        prod = E[fe[rows]] * F[fe[cols]]
        return (P.T @ prod)[self.dofmap.cond_nodes]

    # -- measurement surface ---------------------------------------------------

    @cached_property
    def gamma_mass(self) -> sp.csr_matrix:
        """Tangential L2(Gamma) mass over the observation edges."""
        faces = self.mesh.gamma_faces
        loc = self.dofmap.gamma_face_edges
        blocks = np.array([face_tangential_mass(self.mesh.vertices[f]) for f in faces])
        r = np.broadcast_to(loc[:, :, None], blocks.shape)
        c = np.broadcast_to(loc[:, None, :], blocks.shape)
        m = len(self.dofmap.gamma_edges)
        return _coo(r, c, blocks, (m, m))

    # -- sources ----------------------------------------------------------------

    def locate(self, point, tol: float = 1e-10) -> tuple[int, np.ndarray]:
        """Tet strictly containing ``point`` and its barycentric coordinates."""
        x = np.asarray(point, float)
        lo = np.array([b[0] for b in self.mesh.bounds])
        hi = np.array([b[1] for b in self.mesh.bounds])
        if np.any(x <= lo) or np.any(x >= hi):
            return -1, np.zeros(4)
        for t in self.mesh.tets_of_cell(self.mesh.cell_of_point(x)):
            p0 = self.mesh.vertices[self.mesh.tets[t, 0]]
            lam = np.empty(4)
            lam[1:] = self.grads[t, 1:] @ (x - p0)
            lam[0] = 1.0 - lam[1:].sum()
            if lam.min() > tol:
                return int(t), lam
            if lam.min() > -tol:
                return -1, lam
        return -1, np.zeros(4)

    def dipole_load(self, points, direction, omega: float | None = None) -> np.ndarray:
        """``l_j = i omega sum_p direction . curl N_j(x_p)`` over free edges."""
        omega = self.material.omega if omega is None else omega
        d = np.asarray(direction, float)
        load = np.zeros(self.n_free, dtype=complex)
        curls = whitney_curls(self.grads)
        for k, x in enumerate(np.atleast_2d(points)):
            t, _ = self.locate(x)
            if t < 0:
                raise SourcePlacementError(k, x)
            f = self.free_of_tet[t]
            keep = f >= 0
            np.add.at(load, f[keep], 1j * omega * self.signs[t, keep] * (curls[t, keep] @ d))
        return load

    def volume_load(self, func) -> np.ndarray:
        """``l_j = int f . N_j`` for a vectorised callable ``f(x) -> (n, 3)`` complex."""
        N = whitney_values(self.grads, TET_POINTS)  # (nt, nq, 6, 3)
        p = self.mesh.vertices[self.mesh.tets]
        xq = np.einsum("qa,nak->nqk", TET_POINTS, p)
        fx = np.asarray(func(xq.reshape(-1, 3), self.mesh.region.repeat(len(TET_WEIGHTS))),
                        complex).reshape(xq.shape)
        loc = np.einsum("q,nqk,nqik->ni", TET_WEIGHTS, fx, N) * self.volumes[:, None]
        loc *= self.signs
        f = self.free_of_tet
        keep = f >= 0
        load = np.zeros(self.n_free, dtype=complex)
        np.add.at(load, f[keep], loc[keep])
        return load

    # -- field evaluation -------------------------------------------------------

    def local_coefficients(self, E_full: np.ndarray) -> np.ndarray:
        """Signed per-tet edge coefficients ``(nt, 6)`` from a global edge field."""
        return E_full[self.mesh.tet_edges] * self.signs

    def evaluate(self, E_full: np.ndarray, bary: np.ndarray):
        """Field and curl at barycentric points in every tet."""
        c = self.local_coefficients(E_full)
        N = whitney_values(self.grads, bary)
        vals = np.einsum("ni,nqik->nqk", c, N)
        curl = np.einsum("ni,nik->nk", c, whitney_curls(self.grads))
        return vals, curl

    def cell_magnitude(self, E_full: np.ndarray) -> np.ndarray:
        vals, _ = self.evaluate(E_full, np.full((1, 4), 0.25))
        return np.sqrt(np.sum(np.abs(vals[:, 0]) ** 2, axis=1))

    def expand_edges(self, E_free: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mesh.n_edges, dtype=np.result_type(E_free, complex))
        full[self.dofmap.free_edges] = E_free
        return full
