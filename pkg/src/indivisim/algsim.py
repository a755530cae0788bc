"""Circuit decomposition of the product formula and its emulated execution.

Every non-CP slice propagator is split into two CP parts; choosing one part
per non-CP slot gives ``2**n`` circuits built only from channels and
CP-not-TP maps, and the signed sum of their outputs reproduces the product.
Circuit ``r`` takes part ``(r >> n) & 1`` at the ``n``-th non-CP slot
(slots counted in execution order from 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .divisibility import DivisibilityProfile, estimate_tid, profile
from .instrument import (
    DEFAULT_Z,
    CPnTPMap,
    DilatedInstrument,
    HPTPSplit,
    UnreachableOutcome,
    WilsonEstimate,
    apply_exact,
    dilate,
    hptp_split,
    trials_needed,
    wilson,
)
from .liouvillian import KLocalLiouvillian, beta
from .propagator import DEFAULT_TOL, SliceGrid, reference_state_evolution, slice_grid
from .tensor import SuperOperator, apply_local, trace_norm
from .trotter import (
    PRODUCT_ORDER,
    BoundInputs,
    steps_for_error,
    trotter_bound,
    trotter_exact,
)

BIT_ORDER = "n-th non-CP slot (execution order, 0-based) reads bit n of r, least significant first"
VECTORIZATION = "column-stacking: vec(|i><j|) at index j*D + i"


class CapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Caps:
    max_non_cp: int = 16
    max_circuits: int = 65536
    max_shots: float = 1e9
    max_dim: int = 64
    max_m: int = 20000
    postselection_floor: float = 1e-6

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# -- circuits ----------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    gamma: int  # 0-based execution index
    slice: int  # 1-based
    term: int  # 0-based
    support: tuple
    channel: SuperOperator | None = field(default=None, repr=False)
    split: HPTPSplit | None = field(default=None, repr=False)
    instruments: tuple = field(default=(), repr=False)
    ordinal: int | None = None

    @property
    def is_instrument(self) -> bool:
        return self.ordinal is not None


@dataclass(frozen=True)
class CircuitSpec:
    r: int
    slots: tuple = field(repr=False)
    n_sites: int = 1
    d: int = 2

    @property
    def n_instruments(self) -> int:
        return sum(1 for s in self.slots if s.is_instrument)

    @property
    def parity(self) -> int:
        return bin(self.r).count("1") % 2

    @property
    def sign(self) -> int:
        return -1 if self.parity else 1

    def part(self, ordinal: int) -> int:
        return (self.r >> ordinal) & 1


def build_slots(prof: DivisibilityProfile, grid: SliceGrid) -> tuple:
    slots = []
    ordinal = 0
    split_cache: dict[int, tuple] = {}
    for j in range(grid.m):
        for i in range(grid.K):
            p = grid.props[i][j]
            gamma = j * grid.K + i
            if not prof.mask[i][j]:
                slots.append(Slot(gamma, j + 1, i, grid.supports[i], channel=p))
                continue
            key = id(p)
            if key not in split_cache:
                sp = hptp_split(p)
                split_cache[key] = (sp, (dilate(sp.positive), dilate(sp.negative)))
            sp, instr = split_cache[key]
            slots.append(Slot(gamma, j + 1, i, grid.supports[i], split=sp, instruments=instr,
                              ordinal=ordinal))
            ordinal += 1
    return tuple(slots)


def enumerate_circuits(
    prof: DivisibilityProfile, grid: SliceGrid, max_non_cp: int = 16
) -> list[CircuitSpec]:
    n = prof.n_total
    if n > max_non_cp:
        raise CapExceeded(f"{n} non-CP slots exceed the cap of {max_non_cp} ({2 ** n} circuits)")
    slots = build_slots(prof, grid)
    return [CircuitSpec(r, slots, grid.n_sites, grid.d) for r in range(2**n)]


# -- execution ---------------------------------------------------------------

@dataclass
class SlotRecord:
    gamma: int
    slice: int
    term: int
    ordinal: int
    part: int
    gauge: float
    norm: float
    estimate: WilsonEstimate | None = None

    @property
    def norm_used(self) -> float:
        return self.estimate.estimate if self.estimate is not None else self.norm

    def to_dict(self) -> dict:
        out = {"gamma": self.gamma + 1, "slice": self.slice, "term": self.term,
               "ordinal": self.ordinal, "part": self.part, "G": self.gauge, "N": self.norm}
        if self.estimate is not None:
            out["wilson"] = self.estimate.to_dict()
        return out


@dataclass
class CircuitResult:
    r: int
    parity: int
    mode: str
    terminal_state: np.ndarray | None
    ledger: list
    unreachable: bool = False
    trials: int = 0

    @property
    def gauge_product(self) -> float:
        return math.prod(rec.gauge for rec in self.ledger)

    @property
    def success_probability(self) -> float:
        return math.prod(rec.norm for rec in self.ledger)

    @property
    def weight(self) -> float:
        """G_r times the (estimated, in sampled mode) normalization product."""
        if self.unreachable:
            return 0.0
        return self.gauge_product * math.prod(rec.norm_used for rec in self.ledger)

    @property
    def exact_weight(self) -> float:
        if self.unreachable:
            return 0.0
        return self.gauge_product * self.success_probability

    @property
    def state(self) -> np.ndarray:
        """rho^(r)(t) in exact mode, phi^(r)(t) in sampled mode."""
        return self.weight * self.terminal_state if not self.unreachable else 0.0 * self.terminal_state

    def to_dict(self) -> dict:
        return {"r": self.r, "parity": self.parity, "mode": self.mode,
                "unreachable": self.unreachable, "trials": self.trials,
                "G_r": self.gauge_product, "P_success": self.success_probability,
                "weight": self.weight, "ledger": [rec.to_dict() for rec in self.ledger]}


def _exact_pass(spec: CircuitSpec, rho0):
    rho = np.asarray(rho0, dtype=complex)
    ledger = []
    for slot in spec.slots:
        if not slot.is_instrument:
            rho = apply_local(slot.channel, rho, slot.support, spec.n_sites, spec.d)
            continue
        x = spec.part(slot.ordinal)
        instr: DilatedInstrument = slot.instruments[x]
        rec = SlotRecord(slot.gamma, slot.slice, slot.term, slot.ordinal, x, instr.gauge_scalar, 0.0)
        ledger.append(rec)
        try:
            out = apply_exact(instr, rho, slot.support, spec.n_sites, spec.d)
        except UnreachableOutcome:
            return rho, ledger, True
        rec.norm = out.p1
        rho = out.post_state
    return rho, ledger, False


def run_circuit_exact(spec: CircuitSpec, rho0) -> CircuitResult:
    rho, ledger, unreachable = _exact_pass(spec, rho0)
    return CircuitResult(spec.r, spec.parity, "exact", rho, ledger, unreachable)


def run_circuit_sampled(
    spec: CircuitSpec,
    rho0,
    slot_tolerance: float,
    z: float,
    rng: np.random.Generator,
    trial_cap: float = 1e9,
) -> CircuitResult:
    """Estimate each slot's keep probability from simulated shots.

    A trial runs the slots in order and restarts at the first outcome 2, so
    slot ``k`` is only reached after outcome 1 at every earlier slot. Shots
    are drawn in batches as chained binomials, which has the same law as
    per-shot Bernoulli draws. States propagate exactly.
    """
    rho, ledger, unreachable = _exact_pass(spec, rho0)
    result = CircuitResult(spec.r, spec.parity, "sampled", rho, ledger, unreachable)
    if not ledger:
        return result
    p = np.array([rec.norm for rec in ledger])
    if unreachable:
        raise CapExceeded(
            f"circuit {spec.r}: slot {ledger[-1].gamma + 1} is unreachable; "
            f"P(C_r) bracket [{min(p) ** len(ledger):.3g}, {max(p) ** len(ledger):.3g}]"
        )
    need = trials_needed(slot_tolerance, z)
    reach_prob = np.cumprod(np.concatenate([[1.0], p[:-1]]))
    if need / max(reach_prob[-1], 1e-300) > trial_cap:
        lo, hi = float(p.min()) ** len(p), float(p.max()) ** len(p)
        raise CapExceeded(
            f"circuit {spec.r}: about {need / reach_prob[-1]:.3g} trials needed, cap {trial_cap:.3g}; "
            f"P(C_r) bracket [{lo:.3g}, {hi:.3g}]"
        )
    reached = np.zeros(len(p), dtype=np.int64)
    kept = np.zeros(len(p), dtype=np.int64)
    total = 0
    while True:
        # rough reach rates from counts so far; exact values only bound the cap check
        est = np.where(reached > 0, (kept + 1) / (reached + 2), 1.0)
        reach_est = np.cumprod(np.concatenate([[1.0], est[:-1]]))
        deficit = np.maximum(need - reached, 0)
        batch = int(np.ceil(np.max(deficit / reach_est)))
        batch = max(batch, 1)
        if total + batch > trial_cap:
            raise CapExceeded(f"circuit {spec.r}: trial cap {trial_cap:.3g} exceeded")
        n = batch
        for k in range(len(p)):
            reached[k] += n
            n = int(rng.binomial(n, p[k])) if n else 0
            kept[k] += n
        total += batch
        widths = [wilson(kept[k], reached[k], z).half_width if reached[k] else math.inf
                  for k in range(len(p))]
        if max(widths) <= slot_tolerance:
            break
    for k, rec in enumerate(ledger):
        rec.estimate = wilson(int(kept[k]), int(reached[k]), z)
    result.trials = total
    return result


# -- reconstruction ----------------------------------------------------------

@dataclass
class Reconstruction:
    state: np.ndarray
    expectation: float | None
    error_report: dict


def reconstruct(results: Sequence[CircuitResult], observable=None) -> Reconstruction:
    results = sorted(results, key=lambda res: res.r)
    count = len(results)
    if count == 0 or count & (count - 1) or [res.r for res in results] != list(range(count)):
        raise ValueError("results must cover every circuit index 0 .. 2^n - 1 exactly once")
    n = count.bit_length() - 1
    state = np.zeros_like(results[0].terminal_state)
    for res in results:
        if res.unreachable:
            continue
        state = state + (-1) ** res.parity * res.weight * res.terminal_state
    expectation = None
    if observable is not None:
        a = np.asarray(observable, dtype=complex)
        total = 0.0
        for res in results:
            if not res.unreachable:
                total += (-1) ** res.parity * res.weight * float(np.real(np.trace(a @ res.terminal_state)))
        expectation = total
    per_circuit = []
    for res in results:
        dev = max((abs(rec.norm - rec.norm_used) for rec in res.ledger), default=0.0)
        width = max((rec.estimate.half_width for rec in res.ledger if rec.estimate), default=0.0)
        per_circuit.append({
            "r": res.r,
            "G_r": res.gauge_product,
            "max_abs_N_error": dev,
            "max_half_width": width,
            "bound_realized": res.gauge_product * n * dev,
            "bound_budgeted": res.gauge_product * n * width,
        })
    worst_real = max(c["bound_realized"] for c in per_circuit)
    worst_budget = max(c["bound_budgeted"] for c in per_circuit)
    agg = 2 ** (n - 1) if n else 0
    report = {
        "n_non_cp": n,
        "aggregation_factor": agg,
        "aggregation_factor_triangle": 2**n if n else 0,
        "algorithmic_bound_realized": agg * worst_real,
        "algorithmic_bound_budgeted": agg * worst_budget,
        "algorithmic_bound_triangle": (2**n if n else 0) * worst_budget,
        "per_circuit": per_circuit,
    }
    return Reconstruction(state, expectation, report)


# -- planning ----------------------------------------------------------------

def random_states(dim: int, count: int, rng: np.random.Generator, ensemble: str = "pure") -> np.ndarray:
    if ensemble == "pure":
        v = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.einsum("ni,nj->nij", v, v.conj())
    if ensemble == "hilbert-schmidt":
        g = rng.normal(size=(count, dim, dim)) + 1j * rng.normal(size=(count, dim, dim))
        rho = g @ g.conj().transpose(0, 2, 1)
        return rho / np.trace(rho, axis1=1, axis2=2)[:, None, None]
    raise ValueError(f"unknown ensemble {ensemble!r}")


def classical_gauge_estimate(
    part: CPnTPMap, samples: int, rng: np.random.Generator, ensemble: str = "pure"
) -> float:
    """Mean output trace of the sub-normalized part over random input states."""
    if samples < 1:
        raise ValueError("need at least one sample")
    g = part.g
    gauge = part.gauge / (g if g > 1.0 else 1.0)
    rhos = random_states(part.dim, samples, rng, ensemble)
    traces = np.real(np.einsum("ij,nji->n", gauge, rhos))
    return float(np.mean(traces))


@dataclass
class SimulationPlan:
    epsilon: float
    eps_T: float
    eps_A: float
    z: float
    m: int
    m_source: str
    m_validated: int
    m_literal: int
    eps_range_ok: bool
    beta: dict
    tid: dict
    K: int
    t: float
    n_total: int
    n_circuits: int
    G: float
    slot_tolerance: float | None
    trials_per_estimator: int
    total_shots: float
    expected_shots: float
    min_success_estimate: float
    eps_T_certified: float
    trotter_exact: str | None
    aggregation: str
    feasible: bool
    limiting: list
    caps: Caps
    profile: DivisibilityProfile = field(repr=False)
    grid: SliceGrid = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "eps_T": self.eps_T,
            "eps_A": self.eps_A,
            "z": self.z,
            "m": self.m,
            "m_source": self.m_source,
            "m_validated": self.m_validated,
            "m_literal": self.m_literal,
            "eps_range_ok": self.eps_range_ok,
            "beta": self.beta,
            "t_id": self.tid,
            "K": self.K,
            "t": self.t,
            "N_total": self.n_total,
            "circuits": self.n_circuits if self.n_total <= 62 else None,
            "log2_circuits": self.n_total,
            "G": self.G,
            "slot_tolerance": self.slot_tolerance,
            "trials_per_estimator": self.trials_per_estimator,
            "total_shots": self.total_shots,
            "expected_shots": self.expected_shots,
            "min_success_estimate": self.min_success_estimate,
            "eps_T_certified": self.eps_T_certified,
            "trotter_exact": self.trotter_exact,
            "aggregation": self.aggregation,
            "feasible": self.feasible,
            "limiting": list(self.limiting),
            "caps": self.caps.to_dict(),
            "profile": self.profile.to_dict(),
        }


def make_plan(
    L: KLocalLiouvillian,
    t: float,
    epsilon: float,
    z: float = DEFAULT_Z,
    caps: Caps = Caps(),
    m: int | None = None,
    split: float = 0.5,
    aggregation: str = "half",
    m_sequence=(16, 32, 64, 128),
    beta_mode: str = "full-space",
    gauge_samples: int = 1000,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> SimulationPlan:
    """Budget a simulation to total error ``epsilon``.

    ``split`` is the Trotter share of the budget. ``aggregation`` chooses
    the circuit-count factor in the per-estimator tolerance: ``half`` uses
    2^(n-1), ``triangle`` uses 2^n.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    if aggregation not in ("half", "triangle"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    eps_T, eps_A = split * epsilon, (1 - split) * epsilon
    limiting = []
    if L.dim > caps.max_dim:
        limiting.append("dimension")

    b = beta(L, t, mode=beta_mode)
    tid = estimate_tid(L, t, m_sequence)
    K = L.K
    choice = steps_for_error(eps_T, K, b.value, t, tid.tid, tid.c_tilde, mode="validated")
    literal = steps_for_error(eps_T, K, b.value, t, tid.tid, tid.c_tilde, mode="literal")
    exact_reason = trotter_exact(L, t)

    if m is not None:
        m_used, source = int(m), "user"
    elif exact_reason is not None:
        m_used, source = 1, "trotter-exact"
    else:
        m_used, source = choice.m, "step-formula"
        if m_used > caps.max_m:
            m_used, source = caps.max_m, "step-formula-clipped"

    grid = slice_grid(L, t, m_used, tol=tol)
    prof = profile(grid)
    n = prof.n_total

    if exact_reason is not None:
        eps_T_cert = 0.0
    else:
        measured = trotter_bound(
            BoundInputs(K, b.value, t, m_used, prof.n_tilde, prof.n_hat, 0.0, 0), "measured")
        tid_form = trotter_bound(
            BoundInputs(K, b.value, t, m_used, 0, 0, min(tid.tid, t), tid.c_tilde), "tid")
        eps_T_cert = min(measured, tid_form)
    if eps_T_cert > eps_T:
        limiting.append("trotter_error")

    G, slot_tol, n_t = 1.0, None, 0
    min_success, expected = 1.0, 0.0
    if n > caps.max_non_cp:
        limiting.append("non_cp_slots")
    if 2**n > caps.max_circuits:
        limiting.append("circuits")
    if n > 0 and "non_cp_slots" not in limiting:
        slots = build_slots(prof, grid)
        inst = [s for s in slots if s.is_instrument]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
        cache: dict[int, tuple] = {}
        per_slot_est = []
        for s in inst:
            key = id(s.split)
            if key not in cache:
                cache[key] = tuple(
                    classical_gauge_estimate(s.split.part(x), gauge_samples, rng) for x in (0, 1))
            per_slot_est.append(cache[key])
            G *= max(s.instruments[0].gauge_scalar, s.instruments[1].gauge_scalar)
        factor = 2 ** (n - 1) if aggregation == "half" else 2**n
        slot_tol = eps_A / (G * n * factor)
        n_t = trials_needed(slot_tol, z)
        min_success = math.prod(min(e) for e in per_slot_est)
        # trials to reach the deepest slot N_T times, averaged over circuits
        expected = 0.0
        for r in range(2**n):
            reach = 1.0
            for k, est in enumerate(per_slot_est[:-1]):
                reach *= est[(r >> k) & 1]
            expected += n_t / max(reach, 1e-300)
    total_shots = float(n_t * 2**n) if n else 0.0
    if total_shots > caps.max_shots:
        limiting.append("shots")
    if n > 0 and min_success < caps.postselection_floor:
        limiting.append("postselection")

    return SimulationPlan(
        epsilon=epsilon, eps_T=eps_T, eps_A=eps_A, z=z, m=m_used, m_source=source,
        m_validated=choice.m, m_literal=literal.m, eps_range_ok=choice.eps_range_ok,
        beta=b.to_dict(), tid=tid.to_dict(), K=K, t=t, n_total=n, n_circuits=2**n, G=G,
        slot_tolerance=slot_tol, trials_per_estimator=n_t, total_shots=total_shots,
        expected_shots=expected, min_success_estimate=min_success,
        eps_T_certified=eps_T_cert, trotter_exact=exact_reason, aggregation=aggregation,
        feasible=not limiting, limiting=limiting, caps=caps, profile=prof, grid=grid,
    )


# -- end to end --------------------------------------------------------------

@dataclass
class SimulationResult:
    mode: str
    seed: int | None
    results: list
    reconstruction: Reconstruction
    total_trials: int


def circuit_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def simulate(
    plan: SimulationPlan,
    rho0,
    observable=None,
    mode: str = "exact",
    seed: int = 0,
) -> SimulationResult:
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    specs = enumerate_circuits(plan.profile, plan.grid, plan.caps.max_non_cp)
    if len(specs) > plan.caps.max_circuits:
        raise CapExceeded(f"{len(specs)} circuits exceed the cap of {plan.caps.max_circuits}")
    results = []
    total = 0
    for spec in specs:
        if mode == "exact" or spec.n_instruments == 0:
            res = run_circuit_exact(spec, rho0)
            res.mode = mode
        else:
            res = run_circuit_sampled(spec, rho0, plan.slot_tolerance, plan.z,
                                      circuit_rng(seed, spec.r), plan.caps.max_shots - total)
        total += res.trials
        results.append(res)
    return SimulationResult(mode, seed if mode == "sampled" else None, results,
                            reconstruct(results, observable), total)


def verify_against_reference(
    L: KLocalLiouvillian,
    rho0,
    observable,
    t: float,
    plan: SimulationPlan,
    mode: str = "exact",
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    sim: SimulationResult | None = None,
) -> dict:
    if L.dim > plan.caps.max_dim:
        return {"pass": False, "reason": "dimension cap exceeded"}
    if sim is None:
        sim = simulate(plan, rho0, observable, mode, seed)
    ref = reference_state_evolution(L, rho0, t, tol)
    diff = ref - sim.reconstruction.state
    one_norm = trace_norm(diff)
    deviation = 0.5 * one_norm
    threshold = plan.eps_T + (plan.eps_A if mode == "sampled" else 10 * tol)
    out = {
        "mode": mode,
        "seed": seed if mode == "sampled" else None,
        "trace_distance": deviation,
        "one_norm": one_norm,
        "threshold": threshold,
        "pass": bool(deviation <= threshold),
        "total_trials": sim.total_trials,
        "algorithmic_error": sim.reconstruction.error_report,
    }
    if observable is not None:
        a = np.asarray(observable, dtype=complex)
        ref_exp = float(np.real(np.trace(a @ ref)))
        out["expectation"] = sim.reconstruction.expectation
        out["expectation_reference"] = ref_exp
        out["expectation_error"] = abs(sim.reconstruction.expectation - ref_exp)
    return out


def conventions(beta_mode: str = "full-space", step_mode: str = "validated") -> dict:
    return {
        "vectorization": VECTORIZATION,
        "bit_order": BIT_ORDER,
        "product_order": PRODUCT_ORDER,
        "beta_mode": beta_mode,
        "step_mode": step_mode,
        "ancilla_initial_level": 0,
    }
