import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corpus import Z, random_cptp_kraus, random_hptp_transfer, random_state
from indivisim.instrument import (
    CPnTPMap,
    NotHPTPError,
    UnreachableOutcome,
    apply_exact,
    dilate,
    hptp_split,
    is_hptp,
    trial_condition,
    trials_needed,
    wilson,
)
from indivisim.tensor import SuperOperator, psd_sqrt


def transpose_map():
    t = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            t[i * 2 + j, j * 2 + i] = 1.0
    return SuperOperator(2, t)


def test_split_of_transpose():
    sp = hptp_split(transpose_map())
    assert np.allclose(sorted(sp.eigenvalues), [-1, 1, 1, 1])
    diff = sp.positive.superop - sp.negative.superop
    assert np.abs(diff.transfer - transpose_map().transfer).max() < 1e-12


def test_split_rejects_non_tp():
    with pytest.raises(NotHPTPError):
        hptp_split(SuperOperator.identity(2) * 0.5)


def test_negative_dephasing_split_kraus():
    # lambda = e^{-2G} > 1: T0 = (1+lam)/2 I.I, T1 = (lam-1)/2 Z.Z
    lam = math.exp(0.8)
    s = SuperOperator(2, np.diag([1, lam, lam, 1]).astype(complex))
    sp = hptp_split(s)
    assert abs(sp.positive.g - (1 + lam) / 2) < 1e-12
    assert abs(sp.negative.g - (lam - 1) / 2) < 1e-12
    expect_neg = SuperOperator.from_kraus([math.sqrt((lam - 1) / 2) * Z])
    assert np.abs(sp.negative.superop.transfer - expect_neg.transfer).max() < 1e-12


def check_dilation(instr):
    u = instr.unitary
    assert np.abs(u.conj().T @ u - np.eye(len(u))).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([2, 4]))
def test_split_dilate_reconstructs(seed, d):
    rng = np.random.default_rng(seed)
    s = random_hptp_transfer(d, rng)
    assert is_hptp(s)
    sp = hptp_split(s)
    rho = random_state(d, rng)
    total = np.zeros((d, d), dtype=complex)
    for x, sign in ((0, 1), (1, -1)):
        part = sp.part(x)
        if not part.kraus:
            continue
        instr = dilate(part)
        check_dilation(instr)
        assert instr.gauge_scalar >= 1
        total += sign * apply_exact(instr, rho).scaled_output
    assert np.abs(total - s(rho)).max() < 1e-10


def test_projector_slot_example():
    part = CPnTPMap(2, (np.diag([1.0, 0.0]),))
    out = apply_exact(dilate(part), np.eye(2) / 2)
    assert abs(out.p1 - 0.5) < 1e-14
    assert np.abs(out.post_state - np.diag([1.0, 0.0])).max() < 1e-14


def test_unreachable_outcome():
    part = CPnTPMap(2, (np.diag([1.0, 0.0]),))
    with pytest.raises(UnreachableOutcome):
        apply_exact(dilate(part), np.diag([0.0, 1.0]))


def test_completion_choice_does_not_change_outputs():
    rng = np.random.default_rng(3)
    sp = hptp_split(random_hptp_transfer(2, rng))
    rho = random_state(2, rng)
    a = apply_exact(dilate(sp.positive), rho)
    b = apply_exact(dilate(sp.positive, completion="qr"), rho)
    assert abs(a.p1 - b.p1) < 1e-12 and np.abs(a.post_state - b.post_state).max() < 1e-10


def test_k_inf_completes_gauge():
    rng = np.random.default_rng(4)
    part = CPnTPMap(2, tuple(0.5 * k for k in random_cptp_kraus(2, 2, rng)))
    instr = dilate(part)
    assert instr.gauge_scalar == 1.0
    gauge = part.gauge
    assert np.abs(instr.k_inf @ instr.k_inf - (np.eye(2) - gauge)).max() < 1e-12
    assert np.abs(instr.k_inf - psd_sqrt(np.eye(2) - gauge)).max() < 1e-14


def test_embedded_application_matches_kron():
    rng = np.random.default_rng(5)
    sp = hptp_split(random_hptp_transfer(2, rng))
    instr = dilate(sp.positive)
    rho = random_state(8, rng)
    out = apply_exact(instr, rho, support=[2], n_sites=3, d=2)
    direct = sum(np.kron(np.eye(4), k) @ rho @ np.kron(np.eye(4), k).conj().T for k in sp.positive.kraus)
    assert np.abs(out.scaled_output - direct).max() < 1e-10


def test_wilson_frozen_values():
    w = wilson(30, 100, 1.96)
    assert abs(w.estimate - 0.30739896149520038212) < 1e-15
    assert abs(w.half_width - 0.088451422832919194939) < 1e-15
    lo, hi = wilson(0, 10, 4.42).interval
    assert lo == 0.0 and hi <= 1.0


def test_trials_needed_brute_force():
    n = trials_needed(0.01, 4.42)
    assert n == 48861
    scan = [k for k in range(48000, 49001) if trial_condition(k, 0.01, 4.42)]
    assert scan[0] == n


@given(eps=st.floats(0.002, 0.3), z=st.floats(0.5, 5))
def test_trials_needed_is_minimal(eps, z):
    n = trials_needed(eps, z)
    assert trial_condition(n, eps, z)
    assert n == 1 or not trial_condition(n - 1, eps, z)
    # the condition bounds the worst-case half-width
    assert wilson(n // 2, n, z).half_width <= eps + 1e-12
