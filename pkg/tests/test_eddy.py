import numpy as np
import pytest

from eddyinv.eddy import (Observation, ObservationError, SupportError, adjoint_load,
                          misfit, nonradiating_source_test, read_observation, solve_adjoint,
                          solve_gateaux, solve_state, tangential_trace, write_observation)
from eddyinv.verify import random_interior_field


def test_dipole_multiplier_vanishes(small_problem):
    disc, load, _ = small_problem
    st = solve_state(disc, disc.state_system(None), load)
    assert np.linalg.norm(st.phi) <= 1e-8 * np.linalg.norm(st.E)
    assert np.all(st.E[disc.dofmap.essential_edges] == 0)


def test_air_divergence_constraint(small_problem):
    disc, load, _ = small_problem
    system = disc.state_system(None)
    st = solve_state(disc, system, load)
    Ef = st.E[disc.dofmap.free_edges]
    assert np.linalg.norm(system.B @ Ef) <= 1e-9 * np.linalg.norm(system.B.toarray(), 2) * np.linalg.norm(Ef)


def test_trace_and_zero_misfit(small_problem):
    disc, load, obs = small_problem
    assert obs.same_support(Observation(obs.edges, obs.values))
    assert misfit(obs, obs, disc.gamma_mass) == 0.0
    shifted = Observation(obs.edges, obs.values * 1.01)
    expected = 0.5 * 1e-4 * np.real(np.vdot(obs.values, disc.gamma_mass @ obs.values))
    assert misfit(shifted, obs, disc.gamma_mass) == pytest.approx(expected, rel=1e-10)


def test_adjoint_reciprocity(small_problem, rng):
    disc, load, obs = small_problem
    sigma = 0.2 * rng.standard_normal(disc.dofmap.n_cond)
    f = disc.factorize(sigma)
    st = solve_state(disc, f, load)
    noisy = Observation(obs.edges, obs.values * (1 + 0.05 * rng.standard_normal(len(obs))))
    adj = solve_adjoint(disc, f, st, noisy)
    # symmetric operator: <adjoint load, E> equals <state load, F>
    r = adjoint_load(disc, st, noisy)
    fe = disc.dofmap.free_edges
    assert r @ st.E[fe] == pytest.approx(load @ adj.E[fe], rel=1e-9)


def test_gateaux_matches_difference(small_problem, rng):
    disc, load, _ = small_problem
    sigma = 0.2 * rng.standard_normal(disc.dofmap.n_cond)
    d = rng.standard_normal(disc.dofmap.n_cond)
    f = disc.factorize(sigma)
    st = solve_state(disc, f, load)
    E1 = solve_gateaux(disc, f, st, d)
    h = 1e-6
    Ep = solve_state(disc, disc.state_system(sigma + h * d), load).E
    Em = solve_state(disc, disc.state_system(sigma - h * d), load).E
    fd = (Ep - Em) / (2 * h)
    assert np.linalg.norm(fd - E1) <= 1e-6 * np.linalg.norm(E1)


def test_nonradiating_source(small_disc):
    rep = nonradiating_source_test(small_disc, random_interior_field(small_disc, 3))
    assert rep["trace_ratio"] <= 1e-8
    assert rep["reproduction_error"] <= 1e-8


def test_nonradiating_support_enforced(small_disc):
    v = np.zeros(small_disc.mesh.n_edges, dtype=complex)
    v[small_disc.dofmap.gamma_edges[5]] = 1.0
    with pytest.raises(SupportError):
        nonradiating_source_test(small_disc, v)


def test_observation_round_trip(tmp_path, small_problem):
    disc, _, obs = small_problem
    path = tmp_path / "obs.dat"
    write_observation(path, obs)
    back = read_observation(path, expected_hash=disc.mesh.mesh_hash())
    assert np.array_equal(back.edges, obs.edges)
    assert np.array_equal(back.values, obs.values)
    assert back.meta["omega"] == obs.meta["omega"]
    write_observation(tmp_path / "again.dat", back)
    assert (tmp_path / "again.dat").read_bytes() == path.read_bytes()


def test_observation_hash_rejected(tmp_path, small_problem):
    _, _, obs = small_problem
    path = tmp_path / "obs.dat"
    write_observation(path, obs)
    with pytest.raises(ObservationError):
        read_observation(path, expected_hash="0" * 16)


def test_truncated_observation_rejected(tmp_path, small_problem):
    _, _, obs = small_problem
    path = tmp_path / "obs.dat"
    write_observation(path, obs)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ObservationError):
        read_observation(path)


def test_trace_ordering(small_problem):
    disc, load, obs = small_problem
    st = solve_state(disc, disc.state_system(None), load)
    tr = tangential_trace(st, disc.mesh, disc.dofmap)
    assert np.array_equal(tr.edges, disc.mesh.edges[disc.dofmap.gamma_edges])
    assert tr.meta["mesh_hash"] == disc.mesh.mesh_hash()
