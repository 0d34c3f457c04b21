"""Verification suites: adjoint gradient, manufactured solutions,
non-radiating sources, and the quadratic step model."""
from __future__ import annotations

import numpy as np

from .eddy import (hcurl_norm, interior_conductor_edges, nonradiating_source_test,
                   solve_adjoint, solve_gateaux, solve_state)
from .fem import Discretization, Material
from .inverse import evaluate, gradient_load, objective, quadratic_model, step_size
from .mesh import CONDUCTOR, build_box_mesh, build_dof_maps
from .quadrature import TET_POINTS, TET_WEIGHTS

GRADCHECK_TOL = 1e-4
MMS_RATE = (1.7, 2.3)
NONRADIATING_TOL = 1e-8
LINEARIZATION_RATIO = (3.5, 4.5)


def gradcheck(disc: Discretization, load, obs, alpha: float = 1e-6, pairs: int = 3,
              t: float = 1e-5, scale: float = 0.3, seed: int = 0) -> dict:
    """Central differences of the objective against ``gradient_load @ tau``."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(pairs):
        sigma = scale * rng.standard_normal(disc.dofmap.n_cond)
        tau = rng.standard_normal(disc.dofmap.n_cond)
        ev = evaluate(disc, load, obs, sigma, alpha)
        adj = solve_adjoint(disc, ev.factorization, ev.state, obs)
        exact = float(gradient_load(disc, ev.state.E, adj.E, sigma, alpha) @ tau)
        fd = (objective(disc, load, obs, sigma + t * tau, alpha)
              - objective(disc, load, obs, sigma - t * tau, alpha)) / (2 * t)
        rows.append({"adjoint": exact, "fd": fd, "rel_error": abs(fd - exact) / abs(fd)})
    worst = max(r["rel_error"] for r in rows)
    return {"suite": "gradcheck", "pairs": rows, "max_rel_error": worst,
            "tolerance": GRADCHECK_TOL, "passed": bool(worst <= GRADCHECK_TOL)}


class ManufacturedField:
    """``E = curl(psi e_z)`` with ``psi = cos(kx x') cos(ky y') sin(kz z')``.

    Tangential components vanish on the side and bottom walls, the
    tangential curl and normal component vanish on the top, and ``div E = 0``.
    Since ``curl curl E = kappa E``, the load is ``(kappa/mu - i omega sigma') E``.
    """

    def __init__(self, bounds):
        self.lo = np.array([b[0] for b in bounds], float)
        L = np.array([b[1] - b[0] for b in bounds], float)
        self.k = np.pi / L * np.array([1.0, 1.0, 0.5])
        self.kappa = float(np.sum(self.k ** 2))

    def _parts(self, x):
        s = (np.asarray(x, float) - self.lo) * self.k
        X, Y, Z = np.cos(s[..., 0]), np.cos(s[..., 1]), np.sin(s[..., 2])
        dX, dY, dZ = (-self.k[0] * np.sin(s[..., 0]), -self.k[1] * np.sin(s[..., 1]),
                      self.k[2] * np.cos(s[..., 2]))
        return X, Y, Z, dX, dY, dZ

    def field(self, x):
        X, Y, Z, dX, dY, dZ = self._parts(x)
        return np.stack([X * dY * Z, -dX * Y * Z, np.zeros_like(X)], -1)

    def curl(self, x):
        X, Y, Z, dX, dY, dZ = self._parts(x)
        kxy = self.k[0] ** 2 + self.k[1] ** 2
        return np.stack([dX * Y * dZ, X * dY * dZ, kxy * X * Y * Z], -1)

    def load(self, material: Material):
        mu = float(np.broadcast_to(np.asarray(material.mu, float), (2,))[0])

        def f(x, region):
            coef = self.kappa / mu - 1j * material.omega * np.where(region == CONDUCTOR,
                                                                  material.sigma0, 0.0)
            return coef[:, None] * self.field(x)

        return f


def hcurl_error(disc: Discretization, E_full, exact: ManufacturedField) -> float:
    vals, curl = disc.evaluate(E_full, TET_POINTS)
    p = disc.mesh.vertices[disc.mesh.tets]
    xq = np.einsum("qa,nak->nqk", TET_POINTS, p)
    e0 = np.sum(np.abs(exact.field(xq) - vals) ** 2, axis=-1)
    e1 = np.sum(np.abs(exact.curl(xq) - curl[:, None, :]) ** 2, axis=-1)
    return float(np.sqrt(np.sum(disc.volumes * ((e0 + e1) @ TET_WEIGHTS))))


def mms(levels=(4, 8, 16), bounds=((0, 1), (0, 1), (0, 1)), z_interface=0.5,
        material: Material | None = None) -> dict:
    """H(curl) errors of the forward solver under uniform refinement."""
    material = material or Material(mu=1.0, eps=1.0, sigma0=1.0, omega=0.79)
    exact = ManufacturedField(bounds)
    errors, sizes = [], []
    for n in levels:
        mesh = build_box_mesh(bounds, (n, n, n), z_interface, bounds[2][1])
        disc = Discretization(mesh, build_dof_maps(mesh), material)
        st = solve_state(disc, disc.state_system(None), disc.volume_load(exact.load(material)))
        errors.append(hcurl_error(disc, st.E, exact))
        sizes.append(disc.n_free)
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    ok = all(MMS_RATE[0] <= r <= MMS_RATE[1] for r in ratios)
    return {"suite": "mms", "levels": list(levels), "edge_unknowns": sizes,
            "errors": errors, "ratios": ratios, "range": list(MMS_RATE), "passed": bool(ok)}


def random_interior_field(disc: Discretization, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = np.zeros(disc.mesh.n_edges, dtype=complex)
    idx = interior_conductor_edges(disc)
    v[idx] = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
    return v


def nonradiating(disc: Discretization, seed: int = 0) -> dict:
    rep = nonradiating_source_test(disc, random_interior_field(disc, seed))
    ok = rep["trace_ratio"] <= NONRADIATING_TOL and rep["reproduction_error"] <= NONRADIATING_TOL
    return {"suite": "nonradiating", **rep, "tolerance": NONRADIATING_TOL, "passed": bool(ok)}


def linearization(disc: Discretization, load, sigma, direction,
                  gammas=(1e-2, 5e-3, 2.5e-3)) -> dict:
    """Defect of ``E0 + gamma E1`` against the perturbed state, in H(curl)."""
    f = disc.factorize(sigma)
    st = solve_state(disc, f, load)
    E1 = solve_gateaux(disc, f, st, direction)
    defects = []
    for g in gammas:
        Eg = solve_state(disc, disc.state_system(sigma + g * direction), load).E
        defects.append(hcurl_norm(disc, Eg - st.E - g * E1))
    ratios = [defects[i] / defects[i + 1] for i in range(len(defects) - 1)]
    ok = all(LINEARIZATION_RATIO[0] <= r <= LINEARIZATION_RATIO[1] for r in ratios)
    return {"gammas": list(gammas), "defects": defects, "ratios": ratios, "passed": bool(ok)}


def stepsize(disc: Discretization, load, obs, alpha: float = 1e-6, directions: int = 3,
             rel_eps: float = 1e-3, seed: int = 0, scale: float = 0.3) -> dict:
    """Three-point optimality of the quadratic-model step, plus the
    second-order defect of the linearisation used to build it."""
    rng = np.random.default_rng(seed)
    sigma = scale * rng.standard_normal(disc.dofmap.n_cond)
    ev = evaluate(disc, load, obs, sigma, alpha)
    rows = []
    for _ in range(directions):
        d = rng.standard_normal(disc.dofmap.n_cond)
        Eg = solve_gateaux(disc, ev.factorization, ev.state, d)
        gamma = step_size(disc, ev.state.E, obs, Eg, sigma, d, alpha)
        psi = quadratic_model(disc, ev.state.E, obs, Eg, sigma, d, alpha)
        eps = rel_eps * abs(gamma)
        vals = [psi(gamma - eps), psi(gamma), psi(gamma + eps)]
        rows.append({"gamma": gamma, "psi": vals,
                     "passed": bool(vals[1] <= vals[0] and vals[1] <= vals[2])})
    lin = linearization(disc, load, sigma, rng.standard_normal(disc.dofmap.n_cond))
    ok = all(r["passed"] for r in rows) and lin["passed"]
    return {"suite": "stepsize", "directions": rows, "linearization": lin, "passed": bool(ok)}
