"""Command-line front end.

    eddyinv mesh    --config run.json [--out DIR]
    eddyinv forward --config run.json [--out DIR] [--seed N]
    eddyinv invert  --config run.json --obs observation.dat [--out DIR]
    eddyinv verify  --config run.json --suite gradcheck|mms|nonradiating|stepsize

Exit codes: 1 configuration, 2 mesh (including observation/mesh mismatch),
3 solver, 4 I/O, 5 verification suite failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np
from pydantic import ValidationError

from . import verify as verify_mod
from .config import RunConfig
from .data import add_noise, generate_observation, rasterize_anomaly
from .eddy import ObservationError, read_observation, solve_state, write_observation
from .fem import DegenerateElementError, Discretization, SourcePlacementError
from .inverse import InversionError, nlcg_run, objective, write_log
from .linalg import SingularSystemError, dump_matrix
from .mesh import MeshError, build_box_mesh, build_dof_maps, write_vtk

log = logging.getLogger("eddyinv")

EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER, EXIT_IO, EXIT_VERIFY = 1, 2, 3, 4, 5

SUITES = ("gradcheck", "mms", "nonradiating", "stepsize")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _setup(cfg: RunConfig):
    try:
        m = cfg.mesh
        mesh = build_box_mesh(m.bounds, m.divisions, m.z_interface, m.z_top)
        dofmap = build_dof_maps(mesh)
        disc = Discretization(mesh, dofmap, cfg.material_obj())
    except (MeshError, DegenerateElementError) as exc:
        raise CliError(EXIT_MESH, str(exc)) from exc
    return mesh, dofmap, disc


def _source_load(cfg, disc):
    src = cfg.source_obj()
    try:
        return src, disc.dipole_load(src.points, src.direction)
    except SourcePlacementError as exc:
        raise CliError(EXIT_MESH, str(exc)) from exc


def _outdir(cfg, args) -> str:
    out = args.out or cfg.output.directory
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.json"), "w") as fh:
            fh.write(cfg.dump() + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write to {out}: {exc}") from exc
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _sigma_points(mesh, dofmap, sigma):
    full = np.zeros(mesh.n_vertices)
    full[dofmap.cond_nodes] = sigma
    return full


def cmd_mesh(cfg: RunConfig, args) -> int:
    mesh, dofmap, disc = _setup(cfg)
    out = _outdir(cfg, args)
    summary = {"mesh_hash": mesh.mesh_hash(), "vertices": mesh.n_vertices, "tets": mesh.n_tets,
               "edges": mesh.n_edges, "free_edges": dofmap.n_free_edges,
               "multiplier_unknowns": dofmap.n_mult, "conductivity_unknowns": dofmap.n_cond,
               "gamma_edges": int(len(dofmap.gamma_edges))}
    if "vtk" in cfg.output.formats:
        write_vtk(os.path.join(out, "mesh.vtk"), mesh)
    _write_json(os.path.join(out, "mesh_summary.json"), summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_forward(cfg: RunConfig, args) -> int:
    mesh, dofmap, disc = _setup(cfg)
    src, load = _source_load(cfg, disc)
    spec = cfg.anomaly_spec()
    try:
        sigma = rasterize_anomaly(spec, mesh, dofmap)
    except MeshError as exc:
        raise CliError(EXIT_MESH, str(exc)) from exc
    out = _outdir(cfg, args)
    t0 = time.perf_counter()
    try:
        obs = generate_observation(disc, spec, src, refine=cfg.anomaly.refine_data)
        system = disc.state_system(sigma)
        state = solve_state(disc, system, load)
    except SourcePlacementError as exc:
        raise CliError(EXIT_MESH, str(exc)) from exc
    except SingularSystemError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    obs = add_noise(obs, cfg.noise.delta, cfg.noise.seed)
    obs_path = os.path.join(out, "observation.dat")
    try:
        write_observation(obs_path, obs)
        if "vtk" in cfg.output.formats:
            write_vtk(os.path.join(out, "forward.vtk"), mesh,
                      point_data={"sigma_exact": _sigma_points(mesh, dofmap, sigma)},
                      cell_data={"E_magnitude": disc.cell_magnitude(state.E)})
        if "mtx" in cfg.output.formats:
            dump_matrix(os.path.join(out, "state_matrix.mtx"), system.matrix)
        summary = {"mesh_hash": mesh.mesh_hash(), "edge_dofs": mesh.n_edges,
                   "free_edge_dofs": dofmap.n_free_edges, "multiplier_dofs": dofmap.n_mult,
                   "observation_edges": len(obs), "noise_delta": cfg.noise.delta,
                   "noise_seed": cfg.noise.seed, "wall_time": time.perf_counter() - t0}
        _write_json(os.path.join(out, "forward_summary.json"), summary)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    print(f"observation written to {obs_path} ({len(obs)} edges, "
          f"{dofmap.n_free_edges} free edge dofs)")
    return 0


def cmd_invert(cfg: RunConfig, args) -> int:
    if not args.obs:
        raise CliError(EXIT_CONFIG, "invert needs --obs")
    mesh, dofmap, disc = _setup(cfg)
    try:
        obs = read_observation(args.obs, expected_hash=mesh.mesh_hash())
    except ObservationError as exc:
        raise CliError(EXIT_MESH, str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read {args.obs}: {exc}") from exc
    if not np.array_equal(obs.edges, mesh.edges[dofmap.gamma_edges]):
        raise CliError(EXIT_MESH, "observation edges do not match the measurement surface")
    _, load = _source_load(cfg, disc)
    out = _outdir(cfg, args)
    nl = cfg.nlcg()
    t0 = time.perf_counter()
    try:
        sigma, records = nlcg_run(disc, load, obs, nl)
        final = objective(disc, load, obs, sigma, nl.alpha)
    except (InversionError, SingularSystemError) as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    wall = time.perf_counter() - t0
    try:
        if "csv" in cfg.output.formats:
            write_log(os.path.join(out, "iterations.csv"), records)
        if "vtk" in cfg.output.formats:
            write_vtk(os.path.join(out, "sigma.vtk"), mesh,
                      point_data={"sigma": _sigma_points(mesh, dofmap, sigma)})
        np.save(os.path.join(out, "sigma.npy"), sigma)
        summary = {"iterations": len(records), "initial_objective": records[0].objective,
                   "final_objective": final, "wall_time": wall,
                   "gradient_kind": nl.gradient_kind, "alpha": nl.alpha,
                   "sigma_max": float(sigma.max()), "sigma_min": float(sigma.min())}
        _write_json(os.path.join(out, "summary.json"), summary)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    print(json.dumps(summary, indent=2))
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    suite = args.suite
    if suite not in SUITES:
        raise CliError(EXIT_CONFIG, f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    out = _outdir(cfg, args)
    seed = cfg.noise.seed
    try:
        if suite == "mms":
            report = verify_mod.mms(material=cfg.material_obj())
        else:
            mesh, dofmap, disc = _setup(cfg)
            if suite == "nonradiating":
                report = verify_mod.nonradiating(disc, seed)
            else:
                src, load = _source_load(cfg, disc)
                obs = generate_observation(disc, cfg.anomaly_spec(), src)
                fn = verify_mod.gradcheck if suite == "gradcheck" else verify_mod.stepsize
                report = fn(disc, load, obs, alpha=cfg.inversion.alpha, seed=seed)
    except SingularSystemError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    try:
        _write_json(os.path.join(out, f"verify_{suite}.json"), report)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    print(f"{suite}: {'PASS' if report['passed'] else 'FAIL'}")
    return 0 if report["passed"] else EXIT_VERIFY


COMMANDS = {"mesh": cmd_mesh, "forward": cmd_forward, "invert": cmd_invert, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eddyinv", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="overrides noise.seed")
        if name == "invert":
            p.add_argument("--obs", required=True, help="observation file")
        if name == "verify":
            p.add_argument("--suite", required=True, choices=SUITES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = cfg.model_copy(update={"noise": cfg.noise.model_copy(update={"seed": args.seed})})
    except (ValidationError, json.JSONDecodeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
