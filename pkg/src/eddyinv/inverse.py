"""Adjoint gradients, the quadratic step rule and the NLCG driver.

The discrete objective is

    Phi(sigma) = 1/2 ||n x (E(sigma) - E_obs)||^2_Gamma + alpha/2 ||grad sigma||^2

over nodal conductivities vanishing on the conductor boundary.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .eddy import (Observation, misfit, solve_adjoint, solve_gateaux, solve_state,
                   tangential_trace)
from .fem import Discretization
from .linalg import Factorization

log = logging.getLogger(__name__)

L2 = "l2"
SOBOLEV = "sobolev"


class StagnationError(RuntimeError):
    pass


class InversionError(RuntimeError):
    def __init__(self, k: int, message: str):
        super().__init__(f"iteration {k}: {message}")
        self.k = k


@dataclass
class NlcgConfig:
    alpha: float = 1e-6
    gradient_kind: str = SOBOLEV
    max_iter: int = 100
    grad_tol: float = 1e-6
    restart_on_ascent: bool = True
    stagnation_tol: float = 1e-12
    stagnation_window: int = 3

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.gradient_kind not in (L2, SOBOLEV):
            raise ValueError(f"gradient_kind must be {L2!r} or {SOBOLEV!r}")


@dataclass
class IterationRecord:
    k: int
    objective: float
    misfit: float
    grad_norm: float
    beta: float
    gamma: float
    restarted: bool

    CSV_HEADER = "k,objective,misfit,grad_norm,beta,gamma,restarted"

    def csv_row(self) -> str:
        return (f"{self.k},{self.objective!r},{self.misfit!r},{self.grad_norm!r},"
                f"{self.beta!r},{self.gamma!r},{int(self.restarted)}")


def write_log(path, records) -> None:
    with open(path, "w") as fh:
        fh.write(IterationRecord.CSV_HEADER + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")


def regularizer(disc: Discretization, sigma, alpha: float) -> float:
    return 0.5 * alpha * float(sigma @ (disc.stiffness @ sigma))


@dataclass(eq=False)
class Evaluation:
    """Everything computed at one conductivity."""

    sigma: np.ndarray
    factorization: Factorization
    state: object
    misfit: float
    objective: float


def evaluate(disc: Discretization, load, obs: Observation, sigma, alpha: float) -> Evaluation:
    f = disc.factorize(sigma)
    st = solve_state(disc, f, load)
    mis = misfit(tangential_trace(st, disc.mesh, disc.dofmap), obs, disc.gamma_mass)
    return Evaluation(sigma, f, st, mis, mis + regularizer(disc, sigma, alpha))


def objective(disc: Discretization, load, obs: Observation, sigma, alpha: float) -> float:
    return evaluate(disc, load, obs, sigma, alpha).objective


def gradient_load(disc: Discretization, E: np.ndarray, F: np.ndarray, sigma, alpha: float) -> np.ndarray:
    """Directional-derivative load: ``alpha K sigma + omega Im(int (E . F) l_j)``.

    ``E`` and ``F`` are full edge vectors of the state and adjoint at ``sigma``.
    ``gradient_load @ tau`` is the derivative of the objective along ``tau``.
    """
    load = disc.material.omega * np.imag(disc.sigma_load(E, F))
    if alpha:
        load = load + alpha * (disc.stiffness @ sigma)
    return load


def _p1_factor(disc: Discretization, kind: str) -> Factorization:
    cache = disc.__dict__.setdefault("_p1_factors", {})
    if kind not in cache:
        op = disc.mass if kind == L2 else disc.stiffness + disc.mass
        cache[kind] = Factorization(op.tocsc())
    return cache[kind]


def gradient_l2(disc: Discretization, load) -> np.ndarray:
    """L2 Riesz representative: solves ``M g = load``."""
    return _p1_factor(disc, L2).solve(np.asarray(load, float))


def gradient_sobolev(disc: Discretization, load) -> np.ndarray:
    """H1 Riesz representative: solves ``(K + M) g = load``."""
    return _p1_factor(disc, SOBOLEV).solve(np.asarray(load, float))


def l2_norm(disc: Discretization, g) -> float:
    return math.sqrt(max(float(g @ (disc.mass @ g)), 0.0))


def quadratic_model(disc: Discretization, E_k, obs: Observation, E_g, sigma_k, d_k,
                    alpha: float) -> Callable[[float], float]:
    """Linearised objective along ``d_k`` as a function of the step."""
    g = disc.dofmap.gamma_edges
    r = E_k[g] - obs.values
    eg = E_g[g]
    M = disc.gamma_mass
    K = disc.stiffness

    def psi(gamma: float) -> float:
        d = r + gamma * eg
        s = sigma_k + gamma * d_k
        return 0.5 * float(np.real(np.vdot(d, M @ d))) + 0.5 * alpha * float(s @ (K @ s))

    return psi


def step_size(disc: Discretization, E_k, obs: Observation, E_g, sigma_k, d_k,
              alpha: float) -> float:
    """Exact minimiser of the quadratic model along ``d_k``."""
    g = disc.dofmap.gamma_edges
    r = E_k[g] - obs.values
    eg = E_g[g]
    M = disc.gamma_mass
    K = disc.stiffness
    Kd = K @ d_k
    num = float(np.real(np.vdot(eg, M @ r))) + alpha * float(sigma_k @ Kd)
    den = float(np.real(np.vdot(eg, M @ eg))) + alpha * float(d_k @ Kd)
    if not den > 0:
        raise StagnationError("quadratic model is flat along the search direction")
    return -num / den


def nlcg_run(disc: Discretization, load, obs: Observation, config: NlcgConfig,
             sigma_init=None, callback=None):
    """Fletcher-Reeves NLCG with the quadratic-model step.

    Returns the final conductivity and one ``IterationRecord`` per iteration.
    Each iteration factors the state matrix once and reuses it for the
    state, adjoint and linearised solves.
    """
    sigma = np.zeros(disc.dofmap.n_cond) if sigma_init is None else np.array(sigma_init, float)
    riesz = gradient_sobolev if config.gradient_kind == SOBOLEV else gradient_l2
    records: list[IterationRecord] = []
    d_prev = None
    gsq_prev = None
    g0 = None
    flat = 0
    for k in range(config.max_iter):
        try:
            ev = evaluate(disc, load, obs, sigma, config.alpha)
        except Exception as exc:
            raise InversionError(k, f"state solve failed: {exc}") from exc
        if not math.isfinite(ev.objective):
            raise InversionError(k, f"non-finite objective {ev.objective}")
        try:
            adj = solve_adjoint(disc, ev.factorization, ev.state, obs)
        except Exception as exc:
            raise InversionError(k, f"adjoint solve failed: {exc}") from exc
        gl = gradient_load(disc, ev.state.E, adj.E, sigma, config.alpha)
        g = riesz(disc, gl)
        gsq = float(g @ (disc.mass @ g))
        gnorm = math.sqrt(max(gsq, 0.0))
        if g0 is None:
            g0 = gnorm

        if records and abs(ev.objective - records[-1].objective) <= config.stagnation_tol:
            flat += 1
        else:
            flat = 0

        rec = IterationRecord(k, ev.objective, ev.misfit, gnorm, 0.0, 0.0, False)
        if gnorm == 0.0 or (k > 0 and gnorm <= config.grad_tol * g0) or flat >= config.stagnation_window:
            records.append(rec)
            log.info("stopping at k=%d (grad %.3e, flat %d)", k, gnorm, flat)
            break

        beta = gsq / gsq_prev if (d_prev is not None and gsq_prev > 0) else 0.0
        d = -g + beta * d_prev if beta else -g
        if config.restart_on_ascent and beta and float(gl @ d) >= 0:
            d, beta, rec.restarted = -g, 0.0, True
        rec.beta = beta
        try:
            E_g = solve_gateaux(disc, ev.factorization, ev.state, d)
            gamma = step_size(disc, ev.state.E, obs, E_g, sigma, d, config.alpha)
        except StagnationError:
            records.append(rec)
            log.info("stopping at k=%d: flat quadratic model", k)
            break
        rec.gamma = gamma
        records.append(rec)
        if callback is not None:
            callback(rec, sigma)
        log.info("k=%d obj=%.6e misfit=%.6e |g|=%.3e beta=%.3f gamma=%.3e",
                 k, rec.objective, rec.misfit, gnorm, beta, gamma)
        sigma = sigma + gamma * d
        d_prev, gsq_prev = d, gsq
    return sigma, records


__all__ = [
    "NlcgConfig", "IterationRecord", "nlcg_run", "gradient_load", "gradient_l2",
    "gradient_sobolev", "step_size", "quadratic_model", "objective", "evaluate",
    "regularizer", "write_log", "StagnationError", "InversionError",
]
