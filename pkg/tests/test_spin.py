import itertools
import time

import numpy as np
import pytest
from conftest import two_chains
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from ionmagic import IsingGroundState, frustration_report, ground_state, ising_energy
from ionmagic.spin import MAX_SPINS, classify_order, triple_asymmetry


def random_J(rng, n, scale=1.0):
    A = rng.normal(size=(n, n)) * scale
    J = A + A.T
    np.fill_diagonal(J, 0)
    return J


def brute_force(J):
    n = len(J)
    S = np.array(list(itertools.product((1, -1), repeat=n)))
    E = -0.25 * np.einsum("ki,ij,kj->k", S, J, S)
    return E.min(), S[np.isclose(E, E.min(), rtol=0, atol=1e-12 * np.abs(J).sum())]


def test_energy_definition():
    J = np.array([[0, 1.0, -2.0], [1.0, 0, 0.5], [-2.0, 0.5, 0]])
    s = np.array([1, -1, 1])
    pairs = sum(J[i, j] * s[i] * s[j] for i in range(3) for j in range(i + 1, 3))
    assert ising_energy(J, s) == pytest.approx(-0.5 * pairs)


def test_energy_ignores_diagonal():
    J = np.array([[7.0, 1.0], [1.0, -3.0]])
    assert ising_energy(J, [1, 1]) == -0.5


def test_energy_batch(rng):
    J = random_J(rng, 5)
    S = rng.choice([-1, 1], size=(8, 5))
    assert np.allclose(ising_energy(J, S), [ising_energy(J, s) for s in S])


def test_invalid_spins_rejected():
    with pytest.raises(ValueError):
        ising_energy(np.zeros((2, 2)), [1, 0])
    with pytest.raises(ValueError):
        ising_energy(np.zeros((2, 2)), [1, 1, 1])


def test_asymmetric_J_rejected():
    with pytest.raises(ValueError):
        ground_state(np.array([[0, 1.0], [0.0, 0]]))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-5, 5)), st.lists(st.sampled_from([-1, 1]), min_size=6, max_size=6))
def test_global_flip_symmetry(A, s):
    J = A + A.T
    assert ising_energy(J, s) == pytest.approx(ising_energy(J, -np.array(s)), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 7])
def test_ground_state_matches_brute_force(rng, n):
    for _ in range(5):
        J = random_J(rng, n)
        gs = ground_state(J)
        e, configs = brute_force(J)
        assert gs.energy == pytest.approx(e, abs=1e-12)
        # brute force lists both members of each flip pair
        assert 2 * gs.degeneracy == len(configs)
        assert np.all(gs.configurations[:, 0] == 1)


def test_four_spin_exhaustive_against_all_states():
    J = np.array([[0, 1, -2, 0.5], [1, 0, 1.5, -1], [-2, 1.5, 0, 0.25], [0.5, -1, 0.25, 0]])
    gs = ground_state(J)
    all_E = [ising_energy(J, s) for s in itertools.product((1, -1), repeat=4)]
    assert gs.energy == pytest.approx(min(all_E))


def test_single_spin_and_single_bond():
    gs = ground_state(np.zeros((1, 1)))
    assert gs.degeneracy == 1 and gs.energy == 0
    ferro = ground_state(np.array([[0, 1.0], [1.0, 0]]))
    assert ferro.configurations.tolist() == [[1, 1]] and ferro.degeneracy == 1
    anti = ground_state(np.array([[0, -1.0], [-1.0, 0]]))
    assert anti.configurations.tolist() == [[1, -1]]


def test_frustrated_triangle_has_three_ground_states():
    J = -(np.ones((3, 3)) - np.eye(3))
    gs = ground_state(J)
    assert gs.degeneracy == 3
    assert gs.extra_degeneracy == 2


def test_uncoupled_spins_fully_degenerate():
    gs = ground_state(np.zeros((5, 5)))
    assert gs.degeneracy == 16


def test_max_states_truncates_but_counts():
    gs = ground_state(np.zeros((6, 6)), max_states=5)
    assert gs.truncated and gs.degeneracy == 32 and len(gs.configurations) == 5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
def test_scaling_invariance(seed, k):
    J = random_J(np.random.default_rng(seed), 6)
    a, b = ground_state(J), ground_state(k * J)
    assert np.array_equal(a.configurations, b.configurations)
    assert b.energy == pytest.approx(k * a.energy, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    J = random_J(rng, 7)
    p = rng.permutation(7)
    a = ground_state(J)
    b = ground_state(J[np.ix_(p, p)])
    assert a.energy == pytest.approx(b.energy, rel=1e-12, abs=1e-12)
    assert a.degeneracy == b.degeneracy


def test_bipartite_antiferromagnet_is_unique():
    n = 8
    J = np.zeros((n, n))
    for i in range(n - 1):
        J[i, i + 1] = J[i + 1, i] = -1.0
    J[0, 3] = J[3, 0] = -0.5  # odd distance keeps the graph bipartite
    gs = ground_state(J)
    assert gs.degeneracy == 1
    assert classify_order(gs.configurations[0]) == "neel"


def test_size_bound():
    with pytest.raises(ValueError, match="26"):
        ground_state(np.zeros((MAX_SPINS + 1, MAX_SPINS + 1)))


def test_twenty_spins_fast(rng):
    J = random_J(rng, 20)
    t0 = time.perf_counter()
    gs = ground_state(J)
    assert time.perf_counter() - t0 < 60
    # a single spin flip never lowers the energy of a ground state
    s = gs.configurations[0].astype(float)
    for k in range(20):
        t = s.copy()
        t[k] *= -1
        assert ising_energy(J, t) >= gs.energy - 1e-12


def test_classify_order():
    assert classify_order([1, 1, 1]) == "ferromagnetic"
    assert classify_order([1, -1, 1, -1]) == "neel"
    assert classify_order([1, 1, -1]) == "other"
    assert classify_order([1, 1, -1, -1], chains=2) == "ferromagnetic/antialigned"
    assert classify_order([1, -1, 1, -1], chains=2) == "neel/aligned"
    assert classify_order([1, -1, -1, 1], chains=2) == "neel/antialigned"
    with pytest.raises(ValueError):
        classify_order([1, 1, 1], chains=2)


def test_estimator(rng):
    J = random_J(rng, 5)
    est = IsingGroundState().fit(J)
    assert est.energy_ == pytest.approx(brute_force(J)[0])
    assert est.predict(est.ground_states_).tolist() == pytest.approx([est.energy_] * len(est.ground_states_))
    assert clone(est).get_params() == {"rtol": 1e-12, "max_states": 4096}


def test_triple_asymmetry_zero_for_exact_triangles():
    # two chains of 2 with the second shifted by half a spacing: isosceles triangles
    X = np.array([[0, 0, -1.0], [0, 0, 1.0], [2, 0, 0.0], [2, 0, 2.0]])
    asym = triple_asymmetry(X, 2)
    assert asym[0] == pytest.approx(0, abs=1e-15)
    assert asym[1] == pytest.approx(0, abs=1e-15)


def test_frustration_report_on_synthetic_layout():
    spec = two_chains(2, d=20e-6)
    J = np.array(
        [
            [0, -1.0, -0.5, -0.5],
            [-1.0, 0, -0.5, -0.5],
            [-0.5, -0.5, 0, -1.0],
            [-0.5, -0.5, -1.0, 0],
        ]
    )
    rep = frustration_report(J, spec)
    assert rep.intra_max == 1.0 and rep.inter_max == 0.5 and rep.ratio == 2.0
    # antiferromagnetic on K4: every state with two up and two down is a minimum
    assert rep.ground_state.degeneracy == 2
    assert 0 < rep.unsatisfied_bond_fraction < 1
    with pytest.raises(ValueError):
        frustration_report(np.zeros((3, 3)), spec)
