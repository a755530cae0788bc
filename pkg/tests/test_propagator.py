import numpy as np
import pytest

from corpus import CORPUS, X, Z, cos_dephasing, random_state
from indivisim.liouvillian import KLocalLiouvillian, Lattice, LocalTerm, global_generator_at
from indivisim.propagator import (
    evolve,
    global_propagator,
    reference_state_evolution,
    rk4_evolve,
    slice_grid,
)
from indivisim.timefunc import TimeFunction
from indivisim.trotter import slt_product


def test_dephasing_closed_form():
    L, t = cos_dephasing()
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    for s in (0.5, np.pi / 2, 2.5, np.pi):
        rho = global_propagator(L, 0.0, s)(rho0)
        assert abs(rho[0, 1] - 0.5 * np.exp(-2 * np.sin(s))) < 1e-10
        assert abs(rho[0, 0] - 0.5) < 1e-12


@pytest.mark.parametrize("name", ["qubit_time_hamiltonian", "driven_damping", "negative_rate_pair"])
def test_matches_rk4(name):
    L, t = CORPUS[name]()
    gen = lambda s: global_generator_at(L, s).transfer
    ours = global_propagator(L, 0.0, t).transfer
    ref = rk4_evolve(gen, 0.0, t, 4000)
    assert np.abs(ours - ref).max() < 1e-10


def test_piecewise_rate_breakpoints():
    rate = TimeFunction.piecewise([(0, 0.3, TimeFunction.constant(0.5)),
                                   (0.3, 1.0, TimeFunction.constant(-0.2))])
    L = KLocalLiouvillian(Lattice(1, 2), [LocalTerm.gksl([0], 0.4 * X, [(Z, rate)])])
    g1 = global_generator_at(L, 0.1).transfer
    g2 = global_generator_at(L, 0.5).transfer
    from scipy.linalg import expm

    expect = expm(0.7 * g2) @ expm(0.3 * g1)
    assert np.abs(global_propagator(L, 0.0, 1.0).transfer - expect).max() < 1e-12


def test_composition_property():
    L, t = CORPUS["three_term_pair"]()
    whole = global_propagator(L, 0.0, t).transfer
    half = global_propagator(L, t / 2, t).transfer @ global_propagator(L, 0.0, t / 2).transfer
    assert np.abs(whole - half).max() < 1e-10


def test_single_term_product_is_exact():
    L, t = CORPUS["qubit_time_hamiltonian"]()
    grid = slice_grid(L, t, 5)
    assert np.abs(slt_product(grid).transfer - global_propagator(L, 0.0, t).transfer).max() < 1e-10


def test_reference_state_is_a_state():
    L, t = CORPUS["chain3_three_terms"]()
    rho = reference_state_evolution(L, random_state(8, np.random.default_rng(0)), t)
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.abs(rho - rho.conj().T).max() < 1e-10


def test_reference_rejects_bad_state():
    L, t = cos_dephasing()
    with pytest.raises(ValueError):
        reference_state_evolution(L, np.eye(2), t)


def test_evolve_zero_interval_and_bad_order():
    gen = lambda s: np.zeros((4, 4))
    assert np.array_equal(evolve(gen, 0.5, 0.5), np.eye(4))
    with pytest.raises(ValueError):
        evolve(gen, 1.0, 0.5)


def test_averaged_grid_is_first_order_close():
    L, t = CORPUS["negative_rate_pair"]()
    a = slice_grid(L, t, 64, averaged=True)
    b = slice_grid(L, t, 64)
    diff = max(np.abs(a.props[i][j].transfer - b.props[i][j].transfer).max()
               for i in range(L.K) for j in range(64))
    assert diff < 1e-4
