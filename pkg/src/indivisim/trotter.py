"""First-order product formula, its error bounds, and empirical error checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .liouvillian import KLocalLiouvillian, embedded_generator_at
from .propagator import DEFAULT_TOL, SliceGrid, evolve, global_propagator
from .tensor import SuperOperator, embed_local, one_to_one_norm

PRODUCT_ORDER = "slice-major; within a slice ascending term index, term 1 applied first"


@dataclass(frozen=True)
class BoundInputs:
    K: int
    beta: float
    t: float
    m: int
    n_tilde: int = 0
    n_hat: int = 0
    t_id: float = 0.0
    c_tilde: int = 0

    def __post_init__(self):
        if self.K < 1 or self.beta < 0 or self.m < 1:
            raise ValueError("need K >= 1, beta >= 0, m >= 1")
        if not 0 <= self.n_tilde <= self.m or not 0 <= self.n_hat <= self.K:
            raise ValueError("indivisibility counts out of range")
        if not 0 <= self.t_id <= self.t * (1 + 1e-12):
            raise ValueError("t_id must lie in [0, t]")
        if self.c_tilde < 0 or self.c_tilde % 2:
            raise ValueError("C~ must be a non-negative even integer")


def _prefactor(K: int, beta: float, t: float, m: int) -> float:
    return K * K * beta * beta * t * t / m


def tid_exponent_coefficient(K: int, c_tilde: int) -> float:
    return 3 + (3 + c_tilde) * K + c_tilde * K * K


def trotter_bound(b: BoundInputs, form: str = "measured") -> float:
    if b.beta == 0:
        return 0.0
    dt_beta = b.beta * b.t / b.m
    if form == "measured":
        expo = 3 + b.K * (2 + b.n_tilde) + b.K * min(b.m, b.K * b.n_tilde) + b.n_hat
        return _prefactor(b.K, b.beta, b.t, b.m) * math.exp(expo * dt_beta)
    if form == "tid":
        expo = tid_exponent_coefficient(b.K, b.c_tilde) * dt_beta
        expo += (b.K + b.K**2) * b.t_id * b.beta
        return _prefactor(b.K, b.beta, b.t, b.m) * math.exp(expo)
    raise ValueError(f"unknown bound form {form!r}")


def divisible_bound(K: int, beta: float, t: float, m: int) -> float:
    """Markovian-limit form: all indivisibility measures zero."""
    return _prefactor(K, beta, t, m) * math.exp((3 + 3 * K) * beta * t / m)


@dataclass(frozen=True)
class StepChoice:
    m: int
    eps_range_ok: bool
    mode: str
    raw: float  # the unrounded step-count expression
    eps_max: float


def steps_for_error(
    eps: float,
    K: int,
    beta: float,
    t: float,
    t_id: float = 0.0,
    c_tilde: int = 0,
    mode: str = "validated",
) -> StepChoice:
    """Step count guaranteeing the tid-form bound stays below ``eps``.

    ``literal`` keeps the printed coefficient 2K; ``validated`` uses
    2K^2, the coefficient the substitution argument actually needs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mode not in ("validated", "literal"):
        raise ValueError(f"unknown mode {mode!r}")
    x = (K + K * K) * t_id * beta
    coeff = 2 * K * K if mode == "validated" else 2 * K
    raw = coeff * beta**2 * t**2 * math.exp(x) / eps
    m = max(1, math.ceil(raw))
    if beta == 0:
        eps_max = math.inf
    else:
        eps_max = 2 * K * K * beta * t * math.log(2) * math.exp(x) / tid_exponent_coefficient(K, c_tilde)
    return StepChoice(m, eps <= eps_max, mode, raw, eps_max)


# -- products and empirical errors ------------------------------------------

def slt_product(grid: SliceGrid) -> SuperOperator:
    n, d = grid.n_sites, grid.d
    dim = d**n
    cache: dict[int, np.ndarray] = {}

    def embedded(p: SuperOperator, support) -> np.ndarray:
        key = id(p)
        if key not in cache:
            cache[key] = embed_local(p, support, n, d).transfer
        return cache[key]

    total = np.eye(dim * dim, dtype=complex)
    for j in range(grid.m):
        for i in range(grid.K):
            total = embedded(grid.props[i][j], grid.supports[i]) @ total
    return SuperOperator(dim, total)


@dataclass(frozen=True)
class ErrorEstimate:
    lower: float
    upper: float


def empirical_slt_error(
    L: KLocalLiouvillian,
    t: float,
    m: int | None = None,
    tol: float = DEFAULT_TOL,
    grid: SliceGrid | None = None,
    exact: SuperOperator | None = None,
    restarts: int = 32,
) -> ErrorEstimate:
    from .propagator import slice_grid

    if grid is None:
        if m is None:
            raise ValueError("need m or a grid")
        grid = slice_grid(L, t, m, tol=tol)
    if exact is None:
        exact = global_propagator(L, 0.0, t, tol)
    diff = exact - slt_product(grid)
    est = one_to_one_norm(diff, restarts=restarts)
    return ErrorEstimate(est.lower, est.upper)


# -- bound diagnostics -------------------------------------------------------

def _norm(s: SuperOperator) -> float:
    return one_to_one_norm(s, restarts=16).lower


def _commutator(a: SuperOperator, b: SuperOperator) -> SuperOperator:
    return SuperOperator(a.dim, a.transfer @ b.transfer - b.transfer @ a.transfer)


def pair_split_check(
    L: KLocalLiouvillian,
    a: int,
    b: int,
    s: float,
    t: float,
    grid: int = 7,
    tol: float = DEFAULT_TOL,
) -> dict:
    """Compare ||T_{K+L} - T_K T_L|| with its commutator bound for terms a, b."""
    ka = lambda r: embedded_generator_at(L, a, r).transfer
    kb = lambda r: embedded_generator_at(L, b, r).transfer
    bps = L.breakpoints()
    const_a, const_b = L.terms[a].is_constant, L.terms[b].is_constant
    t_sum = evolve(lambda r: ka(r) + kb(r), s, t, tol, bps, constant=const_a and const_b)
    t_a = evolve(ka, s, t, tol, bps, constant=const_a)
    t_b = evolve(kb, s, t, tol, bps, constant=const_b)
    lhs = _norm(SuperOperator(L.dim, t_sum - t_a @ t_b))
    times = np.linspace(s, t, grid)
    gens_a = [SuperOperator(L.dim, ka(float(r))) for r in times]
    gens_b = [SuperOperator(L.dim, kb(float(r))) for r in times]
    comm = 0.0
    for u_idx, ga in enumerate(gens_a):
        for gb in gens_b[u_idx:]:
            comm = max(comm, _norm(_commutator(ga, gb)))
    sup_a = max(_norm(g) for g in gens_a)
    sup_b = max(_norm(g) for g in gens_b)
    rhs = 0.5 * (t - s) ** 2 * comm * math.exp((t - s) * (3 * sup_a + 2 * sup_b))
    return {"terms": [a, b], "s": s, "t": t, "lhs": lhs, "rhs": rhs, "commutator_sup": comm,
            "holds": lhs <= rhs + 10 * tol}


def commutator_sup(L: KLocalLiouvillian, t: float, grid: int = 5) -> list:
    """Pairwise sup over sampled time pairs of ||[L_a(u), L_b(r)]||."""
    times = np.linspace(0.0, t, grid)
    gens = [[embedded_generator_at(L, i, float(r)) for r in times] for i in range(L.K)]
    out = []
    for a in range(L.K):
        for b in range(a + 1, L.K):
            best = 0.0
            for ga in gens[a]:
                for gb in gens[b]:
                    c = _commutator(ga, gb)
                    if np.max(np.abs(c.transfer)) > 0:
                        best = max(best, _norm(c))
            out.append({"terms": [a, b], "sup": best})
    return out


def bound_diagnostics(
    grid: SliceGrid,
    L: KLocalLiouvillian,
    beta_value: float,
    profile,
    tol: float = DEFAULT_TOL,
    pair_checks: int = 4,
    seed: int = 0,
) -> dict:
    t, m, K = grid.t, grid.m, grid.K
    dt = t / m
    n, d = grid.n_sites, grid.d
    dim = d**n
    p1 = []
    partial = np.eye(dim * dim, dtype=complex)
    for j in range(m):
        for i in range(K):
            partial = embed_local(grid.props[i][j], grid.supports[i], n, d).transfer @ partial
        p1.append(_norm(SuperOperator(dim, partial)))
    p2 = [
        _norm(global_propagator(L, t * j / m, t * (j + 1) / m, tol)) for j in range(m)
    ]
    n_tilde = profile.n_tilde
    envelope = math.exp((min(K * n_tilde, m) + n_tilde) * K * beta_value * dt)
    cor5 = K * beta_value**2 * dt**2 * math.exp((3 + 2 * K) * beta_value * dt)
    rng = np.random.default_rng(seed)
    checks = []
    if K >= 2:
        for _ in range(pair_checks):
            a, b = sorted(rng.choice(K, size=2, replace=False).tolist())
            s0 = float(rng.uniform(0, t))
            s1 = float(rng.uniform(s0, t))
            checks.append(pair_split_check(L, a, b, s0, s1, tol=tol))
    return {
        "P1": p1,
        "P2": p2,
        "partial_product_envelope": envelope,
        "slice_error_bound": cor5,
        "commutator_sup": commutator_sup(L, t),
        "pair_split_checks": checks,
    }


def trotter_exact(L: KLocalLiouvillian, t: float, grid: int = 5, atol: float = 1e-12) -> str | None:
    """Reason the product formula is exact for every m, or None.

    Exact for a single term, and when every pair of embedded generators
    commutes at all sampled time pairs.
    """
    if L.K == 1:
        return "single term"
    times = np.linspace(0.0, t, grid)
    pts = sorted(set(times.tolist()) | {p for p in L.breakpoints() if 0 <= p <= t})
    gens = [[embedded_generator_at(L, i, float(r)).transfer for r in pts] for i in range(L.K)]
    for a in range(L.K):
        for b in range(a + 1, L.K):
            for ga in gens[a]:
                for gb in gens[b]:
                    if np.max(np.abs(ga @ gb - gb @ ga)) > atol:
                        return None
    return "commuting terms (sampled)"
