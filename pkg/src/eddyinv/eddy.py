"""State, adjoint and linearised solves on the saddle-point system.

All three solves at a fixed conductivity share one ``Factorization``: the
adjoint form puts the unknown in the same slot as the state form and the
saddle matrix is complex symmetric, so no transpose solve is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import Discretization, SaddleSystem
from .linalg import Factorization
from .mesh import DofMap, TetMesh


@dataclass(eq=False)
class StateSolution:
    """Edge coefficients on every mesh edge (zero on essential edges) and multiplier."""

    E: np.ndarray
    phi: np.ndarray


@dataclass(eq=False)
class Observation:
    """Complex tangential edge coefficients on the measurement surface.

    ``edges`` are sorted global vertex pairs; ``meta`` carries the header
    fields of the observation file (mesh hash, omega, source).
    """

    edges: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def same_support(self, other: "Observation") -> bool:
        return self.edges.shape == other.edges.shape and np.array_equal(self.edges, other.edges)


class ObservationError(ValueError):
    pass


def _factor(disc: Discretization, system) -> Factorization:
    if isinstance(system, Factorization):
        return system
    if isinstance(system, SaddleSystem):
        return Factorization(system.matrix, disc.ordering)
    raise TypeError(f"expected SaddleSystem or Factorization, got {type(system).__name__}")


def _split(disc: Discretization, x: np.ndarray) -> StateSolution:
    n = disc.n_free
    return StateSolution(disc.expand_edges(x[:n]), x[n:].copy())


def solve_state(disc: Discretization, system, load: np.ndarray) -> StateSolution:
    """Solve the saddle system for an edge load given on free edges."""
    f = _factor(disc, system)
    rhs = np.zeros(f.n, dtype=complex)
    rhs[: disc.n_free] = load
    return _split(disc, f.solve(rhs))


def tangential_trace(state: StateSolution, mesh: TetMesh, dofmap: DofMap) -> Observation:
    g = dofmap.gamma_edges
    return Observation(mesh.edges[g].copy(), state.E[g].copy(), {"mesh_hash": mesh.mesh_hash()})


def misfit(obs_sim: Observation, obs_data: Observation, gamma_mass) -> float:
    """``1/2 ||n x (E_sim - E_data)||^2`` on the measurement surface."""
    if not obs_sim.same_support(obs_data):
        raise ObservationError("observations are supported on different edge sets")
    d = obs_sim.values - obs_data.values
    return 0.5 * float(np.real(np.vdot(d, gamma_mass @ d)))


def adjoint_load(disc: Discretization, state: StateSolution, obs: Observation) -> np.ndarray:
    """``r = M_Gamma conj(E_obs - E)`` injected into the free surface edges."""
    g = disc.dofmap.gamma_edges
    if len(obs) != len(g):
        raise ObservationError("observation does not match the measurement surface")
    r_gamma = disc.gamma_mass @ np.conj(obs.values - state.E[g])
    load = np.zeros(disc.n_free, dtype=complex)
    fe = disc.dofmap.edge_to_free[g]
    keep = fe >= 0
    load[fe[keep]] = r_gamma[keep]
    return load


def solve_adjoint(disc: Discretization, system, state: StateSolution,
                  obs: Observation) -> StateSolution:
    """Adjoint pair ``(F, psi)`` sharing the state matrix."""
    return solve_state(disc, system, adjoint_load(disc, state, obs))


def gateaux_load(disc: Discretization, E0: np.ndarray, sigma_b) -> np.ndarray:
    Mb = disc.sigma_mass(sigma_b)
    return 1j * disc.material.omega * (Mb @ E0[disc.dofmap.free_edges])


def solve_gateaux(disc: Discretization, system, state: StateSolution, sigma_b) -> np.ndarray:
    """Directional derivative of the edge field along ``sigma_b`` (full edge vector)."""
    return solve_state(disc, system, gateaux_load(disc, state.E, sigma_b)).E


def hcurl_norm(disc: Discretization, E_full: np.ndarray) -> float:
    """Discrete ``H(curl)`` norm ``(||E||^2 + ||curl E||^2)^{1/2}``."""
    Ef = E_full[disc.dofmap.free_edges]
    mass = disc.unit_edge_mass
    return float(np.sqrt(np.real(np.vdot(Ef, mass @ Ef) + np.vdot(Ef, disc.curl_curl_unit @ Ef))))


class SupportError(ValueError):
    pass


def interior_conductor_edges(disc: Discretization) -> np.ndarray:
    """Free edges whose every tet is a conductor and which avoid the conductor boundary."""
    mesh, dm = disc.mesh, disc.dofmap
    bad = np.zeros(mesh.n_edges, dtype=bool)
    bad[mesh.tet_edges[disc.air_tets].ravel()] = True
    on_bdry = np.ones(mesh.n_vertices, dtype=bool)
    on_bdry[dm.cond_nodes] = False
    bad |= on_bdry[mesh.edges].any(axis=1)
    return np.flatnonzero(~bad)


def nonradiating_source_test(disc: Discretization, v: np.ndarray) -> dict:
    """Solve with load ``a(v, N_j)`` at sigma = 0 and compare the solution to ``v``.

    ``v`` is a full edge vector supported on ``interior_conductor_edges``.
    Its zero extension satisfies the discrete equations, so the solution
    reproduces it and the surface trace vanishes.
    """
    allowed = np.zeros(disc.mesh.n_edges, dtype=bool)
    allowed[interior_conductor_edges(disc)] = True
    v = np.asarray(v, complex)
    if np.any(v[~allowed] != 0):
        raise SupportError("v must vanish outside the interior of the conductor")
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0:
        return {"v_norm": 0.0, "reproduction_error": 0.0, "trace_norm": 0.0, "trace_ratio": 0.0}
    system = disc.state_system(None)
    vf = v[disc.dofmap.free_edges]
    load = system.A @ vf
    st = solve_state(disc, system, load)
    trace = st.E[disc.dofmap.gamma_edges]
    tnorm = float(np.sqrt(np.real(np.vdot(trace, disc.gamma_mass @ trace))))
    return {
        "v_norm": vnorm,
        "reproduction_error": float(np.linalg.norm(st.E - v) / vnorm),
        "trace_norm": tnorm,
        "trace_ratio": tnorm / vnorm,
        "phi_norm": float(np.linalg.norm(st.phi)),
    }


# -- observation file ---------------------------------------------------------

def write_observation(path, obs: Observation) -> None:
    """ASCII ``v0 v1 re im`` lines after a ``#`` header; floats round-trip exactly."""
    meta = dict(obs.meta)
    lines = ["# eddyinv observation v1"]
    for key in ("mesh_hash", "omega", "source"):
        lines.append(f"# {key} {meta.pop(key, '')}")
    for key in sorted(meta):
        lines.append(f"# {key} {meta[key]}")
    lines.append(f"# count {len(obs)}")
    for (a, b), z in zip(obs.edges.tolist(), obs.values.tolist()):
        lines.append(f"{a} {b} {z.real!r} {z.imag!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_observation(path, expected_hash: str | None = None) -> Observation:
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(None, 1)
                if parts and parts[0] not in ("eddyinv",):
                    meta[parts[0]] = parts[1] if len(parts) > 1 else ""
                continue
            a, b, re, im = line.split()
            rows.append((int(a), int(b), float(re), float(im)))
    if expected_hash is not None and meta.get("mesh_hash") != expected_hash:
        raise ObservationError(
            f"observation mesh hash {meta.get('mesh_hash')!r} does not match {expected_hash!r}")
    if "count" in meta and int(meta.pop("count")) != len(rows):
        raise ObservationError("truncated observation file")
    edges = np.array([(a, b) for a, b, _, _ in rows], dtype=np.int64).reshape(-1, 2)
    values = np.array([complex(re, im) for _, _, re, im in rows])
    return Observation(edges, values, meta)
