"""Synthetic conductivity anomalies, observations and multiplicative noise."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eddy import Observation, solve_state, tangential_trace
from .fem import Discretization
from .mesh import MeshError, TetMesh, build_box_mesh, build_dof_maps


@dataclass(frozen=True)
class AnomalyBox:
    bounds: tuple  # ((x0, x1), (y0, y1), (z0, z1))
    sigma: float


@dataclass(frozen=True)
class AnomalySpec:
    boxes: tuple = ()
    sigma0: float = 1.0


@dataclass(frozen=True)
class DipoleSource:
    points: np.ndarray = field(repr=False)
    direction: tuple = (1.0, 0.0, 0.0)
    description: str = ""


def dipole_grid(count=(9, 9), spacing=0.4, origin=(-2.0, -2.0), z=0.1,
                offset=(0.0, 0.0, 0.0), direction=(1.0, 0.0, 0.0)) -> DipoleSource:
    """Points ``origin + spacing * (i, j)`` for ``i, j = 1..count``, shifted by ``offset``.

    With the default arguments this is the 81-dipole array at z = 0.1.  On
    meshes whose planes pass through the grid, a small ``offset`` moves the
    points off element boundaries.
    """
    nx, ny = count
    pts = np.array([(origin[0] + spacing * i, origin[1] + spacing * j, z)
                    for i in range(1, nx + 1) for j in range(1, ny + 1)], float)
    pts += np.asarray(offset, float)
    desc = (f"grid {nx}x{ny} spacing={spacing!r} origin={tuple(origin)} z={z!r} "
            f"offset={tuple(offset)} direction={tuple(direction)}")
    return DipoleSource(pts, tuple(direction), desc)


def _aligned(mesh: TetMesh, value: float, axis: int) -> bool:
    lo = mesh.bounds[axis][0]
    t = (value - lo) / mesh.spacing[axis]
    return abs(t - round(t)) < 1e-9 * max(1.0, abs(t))


def rasterize_anomaly(spec: AnomalySpec, mesh: TetMesh, dofmap) -> np.ndarray:
    """Nodal anomaly: box value at nodes strictly inside a box, zero elsewhere."""
    sigma = np.zeros(dofmap.n_cond)
    x = mesh.vertices[dofmap.cond_nodes]
    h = mesh.spacing
    for n, box in enumerate(spec.boxes):
        b = np.asarray(box.bounds, float)
        for axis in range(3):
            for v in b[axis]:
                if not _aligned(mesh, v, axis):
                    raise MeshError(f"anomaly box {n} face {'xyz'[axis]}={v} is not on a mesh plane")
        if b[2, 1] > mesh.z_interface + 1e-12 or np.any(b[:2, 0] < [bb[0] for bb in mesh.bounds[:2]]) \
                or np.any(b[:2, 1] > [bb[1] for bb in mesh.bounds[:2]]) or b[2, 0] < mesh.bounds[2][0]:
            raise MeshError(f"anomaly box {n} is not contained in the conductor")
        tol = 1e-9 * h
        inside = np.all((x > b[:, 0] + tol) & (x < b[:, 1] - tol), axis=1)
        sigma[inside] = box.sigma
    return sigma


def refine_mesh(mesh: TetMesh) -> TetMesh:
    return build_box_mesh(mesh.bounds, tuple(2 * n for n in mesh.divisions),
                          mesh.z_interface, mesh.z_top)


def restrict_to_coarse(fine_obs: Observation, fine: TetMesh, coarse: TetMesh,
                       coarse_gamma: np.ndarray) -> np.ndarray:
    """Coarse edge coefficients from a once-refined field on the surface.

    A coarse edge is the union of two fine edges through its midpoint, so
    its line-integral coefficient is the oriented sum of the two halves.
    """
    nx, ny, _ = coarse.divisions
    fnx, fny = 2 * nx, 2 * ny

    def ijk(v):
        return np.stack([v % (nx + 1), (v // (nx + 1)) % (ny + 1), v // ((nx + 1) * (ny + 1))], -1)

    def fid(c):
        return c[..., 0] + (fnx + 1) * (c[..., 1] + (fny + 1) * c[..., 2])

    lookup = {(int(a), int(b)): v for (a, b), v in zip(fine_obs.edges, fine_obs.values)}
    ce = coarse.edges[coarse_gamma]
    a, b = ijk(ce[:, 0]), ijk(ce[:, 1])
    fa, fb, fm = fid(2 * a), fid(2 * b), fid(a + b)
    out = np.empty(len(ce), dtype=complex)
    for n in range(len(ce)):
        total = 0j
        for p, q in ((fa[n], fm[n]), (fm[n], fb[n])):
            key = (min(p, q), max(p, q))
            total += lookup[key] if p < q else -lookup[key]
        out[n] = total
    return out


def generate_observation(disc: Discretization, spec: AnomalySpec, source: DipoleSource,
                         refine: bool = False) -> Observation:
    """Synthetic surface data for the anomaly ``spec``.

    With ``refine`` the field is computed on a once-refined mesh and
    restricted to the surface edges of ``disc.mesh``.
    """
    mesh = disc.mesh
    if refine:
        fine = refine_mesh(mesh)
        fdm = build_dof_maps(fine)
        fdisc = Discretization(fine, fdm, disc.material)
        sigma = rasterize_anomaly(spec, fine, fdm)
        st = solve_state(fdisc, fdisc.state_system(sigma),
                         fdisc.dipole_load(source.points, source.direction))
        fobs = tangential_trace(st, fine, fdm)
        values = restrict_to_coarse(fobs, fine, mesh, disc.dofmap.gamma_edges)
        edges = mesh.edges[disc.dofmap.gamma_edges].copy()
    else:
        sigma = rasterize_anomaly(spec, mesh, disc.dofmap)
        st = solve_state(disc, disc.state_system(sigma),
                         disc.dipole_load(source.points, source.direction))
        obs = tangential_trace(st, mesh, disc.dofmap)
        edges, values = obs.edges, obs.values
    meta = {"mesh_hash": mesh.mesh_hash(), "omega": repr(disc.material.omega),
            "source": source.description, "refined": str(bool(refine))}
    return Observation(edges, values, meta)


def add_noise(obs: Observation, delta: float, seed: int) -> Observation:
    """Scale each edge coefficient by ``1 + delta * xi``, ``xi ~ U[-1, 1]``.

    One real draw per edge scales both parts.  The draws come from numpy's
    PCG64 seeded with ``seed``, taken in the observation's edge order
    (ascending global edge index), so a given (seed, edge) always gets the
    same factor on the same mesh.
    """
    if delta < 0:
        raise ValueError("noise level must be nonnegative")
    meta = dict(obs.meta, noise_delta=repr(float(delta)), noise_seed=str(int(seed)))
    if delta == 0:
        return Observation(obs.edges.copy(), obs.values.copy(), meta)
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    xi = rng.uniform(-1.0, 1.0, size=len(obs))
    return Observation(obs.edges.copy(), obs.values * (1.0 + delta * xi), meta)
