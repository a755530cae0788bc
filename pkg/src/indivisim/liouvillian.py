"""k-local time-local master equations and the scalar bound inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import (
    DimensionError,
    SuperOperator,
    as_matrix,
    embed_local,
    one_to_one_norm,
    spectral_norm,
)
from .timefunc import ONE, TimeDomainError, TimeFunction

MAX_GLOBAL_DIM = 64


class QuadratureError(RuntimeError):
    pass


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    n_sites: int
    d: int
    max_dim: int = MAX_GLOBAL_DIM

    def __post_init__(self):
        if self.n_sites < 1:
            raise ModelError("lattice needs at least one site")
        if self.d < 2:
            raise ModelError("local dimension must be at least 2")
        if self.d**self.n_sites > self.max_dim:
            raise ModelError(
                f"global dimension {self.d ** self.n_sites} exceeds cap {self.max_dim}"
            )

    @property
    def dim(self) -> int:
        return self.d**self.n_sites


@dataclass(frozen=True)
class TimeOperator:
    """Matrix-valued function ``sum_k f_k(s) M_k``."""

    components: tuple = ()

    def __post_init__(self):
        comps = tuple((f, as_matrix(m)) for f, m in self.components)
        if not comps:
            raise ModelError("time operator needs at least one component")
        shape = comps[0][1].shape
        if any(m.shape != shape for _, m in comps):
            raise DimensionError("time operator components differ in shape")
        for _, m in comps:
            m.flags.writeable = False
        object.__setattr__(self, "components", comps)

    @classmethod
    def static(cls, matrix) -> "TimeOperator":
        return cls(((ONE, matrix),))

    @property
    def shape(self) -> tuple[int, int]:
        return self.components[0][1].shape

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f, _ in self.components)

    def breakpoints(self) -> set[float]:
        pts: set[float] = set()
        for f, _ in self.components:
            pts.update(f.breakpoints())
        return pts

    def __call__(self, s: float) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        for f, m in self.components:
            out += f(s) * m
        return out


@dataclass(frozen=True)
class Lindblad:
    op: TimeOperator
    rate: TimeFunction


@dataclass(frozen=True)
class LocalTerm:
    """One strictly local generator, either GKSL-form or a raw superoperator.

    Rates are sign-unconstrained. A raw term holds transfer matrices on the
    support space as a :class:`TimeOperator`.
    """

    support: tuple
    hamiltonian: TimeOperator | None = None
    lindblads: tuple = ()
    raw: TimeOperator | None = None

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(x) for x in self.support))
        object.__setattr__(self, "lindblads", tuple(self.lindblads))
        if self.raw is not None and (self.hamiltonian is not None or self.lindblads):
            raise ModelError("a term is either GKSL-form or raw, not both")
        if self.raw is None and self.hamiltonian is None and not self.lindblads:
            raise ModelError("empty term")

    @property
    def form(self) -> str:
        return "raw" if self.raw is not None else "gksl"

    @property
    def dim(self) -> int:
        if self.raw is not None:
            return int(round(math.sqrt(self.raw.shape[0])))
        if self.hamiltonian is not None:
            return self.hamiltonian.shape[0]
        return self.lindblads[0].op.shape[0]

    @property
    def is_constant(self) -> bool:
        if self.raw is not None:
            return self.raw.is_constant
        ok = self.hamiltonian is None or self.hamiltonian.is_constant
        return ok and all(l.op.is_constant and l.rate.is_constant for l in self.lindblads)

    def breakpoints(self) -> set[float]:
        pts: set[float] = set()
        for op in self._operators():
            pts |= op.breakpoints()
        for l in self.lindblads:
            pts.update(l.rate.breakpoints())
        return pts

    def _operators(self):
        if self.raw is not None:
            yield self.raw
        if self.hamiltonian is not None:
            yield self.hamiltonian
        for l in self.lindblads:
            yield l.op

    @classmethod
    def gksl(cls, support, hamiltonian=None, lindblads=()) -> "LocalTerm":
        """Convenience builder: plain matrices become static operators,
        plain numbers become constant rates."""
        h = hamiltonian
        if h is not None and not isinstance(h, TimeOperator):
            h = TimeOperator.static(h)
        ls = []
        for op, rate in lindblads:
            if not isinstance(op, TimeOperator):
                op = TimeOperator.static(op)
            if not isinstance(rate, TimeFunction):
                rate = TimeFunction.constant(rate)
            ls.append(Lindblad(op, rate))
        return cls(support, h, tuple(ls))


@dataclass(frozen=True)
class KLocalLiouvillian:
    lattice: Lattice
    terms: tuple
    k: int | None = None
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.k is None:
            k = max((len(t.support) for t in self.terms), default=1)
            object.__setattr__(self, "k", k)

    @property
    def K(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def breakpoints(self) -> set[float]:
        pts: set[float] = set()
        for t in self.terms:
            pts |= t.breakpoints()
        return pts


# -- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    ok: bool
    issues: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "issues": [{"term": i, "check": c, "detail": d} for i, c, d in self.issues],
        }


def validate_model(
    L: KLocalLiouvillian, t_max: float, n_grid: int = 101, tol: float = 1e-10, seed: int = 0
) -> ValidationReport:
    issues: list = []
    lat = L.lattice
    if L.K < 1:
        issues.append((None, "term-count", "model has no terms"))
    if L.K > lat.n_sites ** L.k:
        issues.append((None, "term-count", f"K = {L.K} exceeds N^k = {lat.n_sites ** L.k}"))
    times = np.linspace(0.0, t_max, n_grid)
    rng = np.random.default_rng(seed)
    for idx, term in enumerate(L.terms):
        sup = term.support
        if len(sup) > L.k:
            issues.append((idx, "locality", f"support size {len(sup)} exceeds k = {L.k}"))
        if len(set(sup)) != len(sup) or any(x < 0 or x >= lat.n_sites for x in sup):
            issues.append((idx, "support", f"support {list(sup)} invalid for {lat.n_sites} sites"))
            continue
        dz = lat.d ** len(sup)
        shapes_ok = all(op.shape[0] == op.shape[1] for op in term._operators())
        if term.raw is not None:
            shapes_ok = shapes_ok and term.raw.shape[0] == dz * dz
        else:
            shapes_ok = shapes_ok and all(op.shape[0] == dz for op in term._operators())
        if not shapes_ok:
            issues.append((idx, "dimension", f"operator sizes do not match d^|support| = {dz}"))
            continue
        if term.form == "gksl" and len(term.lindblads) > dz * dz:
            issues.append(
                (idx, "lindblad-count", f"{len(term.lindblads)} operators exceeds d^(2k) = {dz * dz}")
            )
        try:
            for s in times:
                if term.hamiltonian is not None:
                    h = term.hamiltonian(s)
                    dev = float(np.max(np.abs(h - h.conj().T)))
                    if dev > tol * max(1.0, spectral_norm(h)):
                        issues.append((idx, "hermiticity", f"H(t={s:.6g}) non-Hermitian by {dev:.3g}"))
                        break
                for l in term.lindblads:
                    l.rate(s)
                if term.raw is not None:
                    g = term.raw(s)
                    a = rng.normal(size=(dz, dz)) + 1j * rng.normal(size=(dz, dz))
                    out = (g @ a.reshape(-1, order="F")).reshape((dz, dz), order="F")
                    leak = abs(np.trace(out))
                    if leak > tol * max(1.0, float(np.linalg.norm(g, 2))) * np.linalg.norm(a):
                        issues.append(
                            (idx, "trace-annihilation", f"tr(L[A]) = {leak:.3g} at t = {s:.6g}")
                        )
                        break
        except TimeDomainError as exc:
            issues.append((idx, "time-domain", str(exc)))
    return ValidationReport(not issues, issues)


# -- generators --------------------------------------------------------------

def gksl_transfer(h, lindblads: Sequence[tuple[np.ndarray, float]], dim: int) -> np.ndarray:
    eye = np.eye(dim)
    t = np.zeros((dim * dim, dim * dim), dtype=complex)
    if h is not None:
        t += -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op, rate in lindblads:
        if rate == 0.0:
            continue
        ldl = op.conj().T @ op
        t += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye))
    return t


def _check_time(s: float) -> None:
    if s < 0 or not math.isfinite(s):
        raise TimeDomainError(f"time {s} outside domain")


def generator_at(term: LocalTerm, s: float) -> SuperOperator:
    """Generator of one term on its support space at time ``s``."""
    _check_time(s)
    if term.raw is not None:
        return SuperOperator.from_transfer(term.raw(s))
    h = term.hamiltonian(s) if term.hamiltonian is not None else None
    ls = [(l.op(s), l.rate(s)) for l in term.lindblads]
    return SuperOperator(term.dim, gksl_transfer(h, ls, term.dim))


def global_generator_at(L: KLocalLiouvillian, s: float) -> SuperOperator:
    lat = L.lattice
    total = np.zeros((lat.dim**2, lat.dim**2), dtype=complex)
    for term in L.terms:
        total += embed_local(generator_at(term, s), term.support, lat.n_sites, lat.d).transfer
    return SuperOperator(lat.dim, total)


def embedded_generator_at(L: KLocalLiouvillian, i: int, s: float) -> SuperOperator:
    term = L.terms[i]
    return embed_local(generator_at(term, s), term.support, L.lattice.n_sites, L.lattice.d)


# -- averaged generators -----------------------------------------------------

def _adaptive_simpson(f, a: float, b: float, rtol: float, max_depth: int = 50) -> np.ndarray:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    # absolute floor keeps near-cancelling integrals from demanding infinite depth
    peak = max(np.linalg.norm(fa), np.linalg.norm(fm), np.linalg.norm(fb))
    scale = max(np.linalg.norm(whole), 1e-3 * (b - a) * peak, 1e-300)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        err = np.linalg.norm(left + right - whole)
        if err <= 15 * rtol * scale * (b - a) / total_len:
            return left + right + (left + right - whole) / 15.0
        if depth >= max_depth:
            raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]")
        return rec(a, m, fa, flm, fm, left, depth + 1) + rec(m, b, fm, frm, fb, right, depth + 1)

    total_len = b - a
    return rec(a, b, fa, fm, fb, whole, 0)


def _split_points(a: float, b: float, breakpoints) -> list[float]:
    inner = sorted(p for p in breakpoints if a < p < b)
    return [a] + inner + [b]


def averaged_generator(
    term: LocalTerm, j: int, m: int, t: float, rtol: float = 1e-10
) -> SuperOperator:
    """Time average of the generator over slice ``j`` (1-based) of ``m``."""
    if not 1 <= j <= m:
        raise ValueError(f"slice index {j} outside 1..{m}")
    a, b = t * (j - 1) / m, t * j / m
    if term.is_constant or b == a:
        return generator_at(term, a)
    pts = _split_points(a, b, term.breakpoints())
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        # one-sided values at the ends: a jump sits exactly on a breakpoint
        eps = 1e-13 * (hi - lo)
        f = lambda s, lo=lo, hi=hi: generator_at(term, min(max(s, lo + eps), hi - eps)).transfer
        total = total + _adaptive_simpson(f, lo, hi, rtol)
    return SuperOperator(term.dim, total / (b - a))


# -- bound inputs ------------------------------------------------------------

@dataclass(frozen=True)
class BetaReport:
    value: float
    mode: str
    term: int | None
    time: float | None
    upper: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "mode": self.mode,
            "argmax_term": self.term,
            "argmax_time": self.time,
            "certified_upper": self.upper,
        }


def _sample_times(L: KLocalLiouvillian, t: float, grid: int) -> np.ndarray:
    pts = set(np.linspace(0.0, t, grid).tolist())
    for p in L.breakpoints():
        # both one-sided values of a possible jump
        pts.update(q for q in (p - 1e-12 * t, p, p + 1e-12 * t) if 0 <= q <= t)
    return np.array(sorted(pts))


def beta(
    L: KLocalLiouvillian,
    t: float,
    mode: str = "full-space",
    grid: int = 21,
    refine: bool = True,
    restarts: int = 32,
) -> BetaReport:
    """sup over sampled times of max_i ||L_i(s)||_{1->1} (optimized lower estimate).

    With ``refine`` a golden-section search brackets the best grid sample to
    add further samples around the maximum.
    """
    if mode not in ("full-space", "local-space"):
        raise ValueError(f"unknown beta mode {mode!r}")
    if grid < 2:
        raise ValueError("grid needs at least two points")
    lat = L.lattice

    def norm(i: int, s: float):
        g = generator_at(L.terms[i], s)
        if mode == "full-space":
            g = embed_local(g, L.terms[i].support, lat.n_sites, lat.d)
        return one_to_one_norm(g, restarts=restarts)

    times = _sample_times(L, t, grid)
    best, best_term, best_time, best_upper = 0.0, None, None, 0.0
    for i, term in enumerate(L.terms):
        samples = times[:1] if term.is_constant else times
        vals = []
        for s in samples:
            est = norm(i, float(s))
            vals.append(est.lower)
            best_upper = max(best_upper, est.upper)
        k = int(np.argmax(vals))
        if refine and not term.is_constant and len(samples) > 2:
            lo = float(samples[max(k - 1, 0)])
            hi = float(samples[min(k + 1, len(samples) - 1)])
            s_star, v_star = _golden_max(lambda s: norm(i, s).lower, lo, hi)
            if v_star > vals[k]:
                vals.append(v_star)
                samples = np.append(samples, s_star)
                k = len(vals) - 1
        if vals[k] > best:
            best, best_term, best_time = vals[k], i, float(samples[k])
    return BetaReport(best, mode, best_term, best_time, best_upper)


def _golden_max(f, lo: float, hi: float, iters: int = 30):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def beta_tilde(L: KLocalLiouvillian, t: float, grid: int = 101) -> float:
    """sup over sampled times of the largest Lindblad-operator spectral norm."""
    if any(term.form == "raw" for term in L.terms):
        raise ModelError("beta_tilde needs every term in GKSL form")
    times = _sample_times(L, t, grid)
    best = 0.0
    for term in L.terms:
        for l in term.lindblads:
            samples = times[:1] if l.op.is_constant else times
            for s in samples:
                best = max(best, spectral_norm(l.op(float(s))))
    return best
