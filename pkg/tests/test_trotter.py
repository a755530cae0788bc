import numpy as np
import pytest
from hypothesis import given, strategies as st

from corpus import CORPUS, two_qubit_divisible
from indivisim.propagator import global_propagator, slice_grid
from indivisim.trotter import (
    BoundInputs,
    bound_diagnostics,
    steps_for_error,
    divisible_bound,
    empirical_slt_error,
    pair_split_check,
    slt_product,
    trotter_bound,
    trotter_exact,
)
from indivisim.divisibility import profile


def test_measured_bound_frozen_value():
    # independent high-precision evaluation: 51.657711340901577729
    b = BoundInputs(2, 1.5, 1.0, 10, n_tilde=3, n_hat=2)
    assert abs(trotter_bound(b, "measured") - 51.657711340901577729) < 1e-11


def test_tid_bound_frozen_value():
    # independent high-precision evaluation: 199.26577458376837832
    b = BoundInputs(2, 1.5, 1.0, 10, t_id=0.25, c_tilde=2)
    assert abs(trotter_bound(b, "tid") - 199.26577458376837832) < 1e-10


def test_step_count_frozen_values():
    v = steps_for_error(0.05, 2, 1.5, 1.0, t_id=0.25, c_tilde=2)
    lit = steps_for_error(0.05, 2, 1.5, 1.0, t_id=0.25, c_tilde=2, mode="literal")
    assert abs(v.raw - 3415.5849010890692594) < 1e-9 and v.m == 3416
    assert abs(lit.raw - 1707.7924505445346297) < 1e-9 and lit.m == 1708
    assert abs(v.eps_max - 3.7579413399254095718) < 1e-12
    assert v.eps_range_ok


def test_step_count_scaling():
    a = steps_for_error(0.1, 2, 1.0, 1.0).raw
    b = steps_for_error(0.05, 2, 1.0, 1.0).raw
    assert abs(b / a - 2) < 1e-12


def test_step_count_floor_and_errors():
    assert steps_for_error(1e9, 1, 1e-6, 1e-6).m == 1
    with pytest.raises(ValueError):
        steps_for_error(0.0, 1, 1.0, 1.0)


def test_bound_input_validation():
    with pytest.raises(ValueError):
        BoundInputs(2, 1.0, 1.0, 4, n_tilde=5)
    with pytest.raises(ValueError):
        BoundInputs(2, 1.0, 1.0, 4, c_tilde=3)
    with pytest.raises(ValueError):
        BoundInputs(2, 1.0, 1.0, 4, t_id=2.0)


@given(K=st.integers(1, 5), beta=st.floats(0.01, 5), t=st.floats(0.01, 5), m=st.integers(1, 1000))
def test_tid_form_reduces_to_divisible(K, beta, t, m):
    b = BoundInputs(K, beta, t, m)
    assert abs(trotter_bound(b, "tid") - divisible_bound(K, beta, t, m)) <= 1e-12 * divisible_bound(K, beta, t, m)


@given(K=st.integers(1, 4), beta=st.floats(0.05, 3), t=st.floats(0.05, 3),
       tid=st.floats(0, 1), c=st.sampled_from([0, 2, 4]), frac=st.floats(0.01, 1))
def test_validated_m_meets_eps(K, beta, t, tid, c, frac):
    tid = tid * t
    eps_max = steps_for_error(1.0, K, beta, t, tid, c).eps_max
    eps = frac * eps_max
    ch = steps_for_error(eps, K, beta, t, tid, c)
    assert ch.eps_range_ok
    bound = trotter_bound(BoundInputs(K, beta, t, ch.m, t_id=tid, c_tilde=c), "tid")
    assert bound <= eps * (1 + 1e-12)


def test_first_order_convergence():
    L, t = two_qubit_divisible()
    exact = global_propagator(L, 0.0, t)
    errs = [empirical_slt_error(L, t, m, exact=exact).lower for m in (8, 16, 32)]
    for a, b in zip(errs, errs[1:]):
        assert 1.7 <= a / b <= 2.3


def test_product_order_matters_for_noncommuting_terms():
    L, t = CORPUS["negative_rate_pair"]()
    grid = slice_grid(L, t, 1)
    assert trotter_exact(L, t) is None
    assert np.abs(slt_product(grid).transfer - global_propagator(L, 0, t).transfer).max() > 1e-3


def test_trotter_exact_detection():
    assert trotter_exact(*CORPUS["cos_dephasing"]()) == "single term"
    from corpus import Z
    from indivisim.liouvillian import KLocalLiouvillian, Lattice, LocalTerm

    L = KLocalLiouvillian(Lattice(2, 2), [LocalTerm.gksl([0], 0.3 * Z), LocalTerm.gksl([1], None, [(Z, -0.2)])])
    assert trotter_exact(L, 1.0) == "commuting terms (sampled)"


def test_pair_split_bound_holds_on_sample():
    L, t = CORPUS["three_term_pair"]()
    out = pair_split_check(L, 0, 2, 0.1, 0.4)
    assert out["holds"] and out["lhs"] > 0


def test_bound_diagnostics_shapes():
    L, t = CORPUS["negative_rate_pair"]()
    grid = slice_grid(L, t, 4)
    d = bound_diagnostics(grid, L, 1.1, profile(grid), pair_checks=2)
    assert len(d["P1"]) == 4 and len(d["P2"]) == 4
    assert all(c["holds"] for c in d["pair_split_checks"])
    assert d["partial_product_envelope"] >= 1
