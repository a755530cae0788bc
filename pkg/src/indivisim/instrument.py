"""Measure-and-postselect realization of Hermiticity- and trace-preserving maps.

An HPTP map is split into two completely positive parts through the
spectral decomposition of its Choi matrix. Each part is rescaled to a
sub-normalized gauge, completed to a channel with one extra Kraus operator,
and dilated to a unitary on ancilla (x) system. Keeping ancilla outcomes
other than the last one realizes the part up to a known scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    DimensionError,
    SuperOperator,
    choi_output_trace,
    herm_eig,
    partial_trace,
    psd_sqrt,
    to_choi,
)

COMPLETION_PIVOT = 1e-8
DEFAULT_Z = 4.42


class NotHPTPError(ValueError):
    pass


class UnreachableOutcome(RuntimeError):
    """Outcome 1 has (numerically) zero probability; the post state is undefined."""


def is_hptp(s: SuperOperator, tol: float = 1e-9) -> bool:
    choi = to_choi(s)
    j = choi.matrix
    if np.max(np.abs(j - j.conj().T)) > tol * max(1.0, abs(np.trace(j))):
        return False
    return bool(np.max(np.abs(choi_output_trace(choi) - np.eye(s.dim))) <= tol)


@dataclass(frozen=True)
class CPnTPMap:
    dim: int
    kraus: tuple = ()

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        for k in ks:
            if k.shape != (self.dim, self.dim):
                raise DimensionError(f"Kraus operator of shape {k.shape} for dim {self.dim}")
            k.flags.writeable = False
        object.__setattr__(self, "kraus", ks)

    @property
    def gauge(self) -> np.ndarray:
        g = np.zeros((self.dim, self.dim), dtype=complex)
        for k in self.kraus:
            g += k.conj().T @ k
        return 0.5 * (g + g.conj().T)

    @property
    def g(self) -> float:
        if not self.kraus:
            return 0.0
        return float(max(np.linalg.eigvalsh(self.gauge)[-1], 0.0))

    @property
    def subnormalized(self) -> bool:
        return self.g <= 1.0

    @property
    def superop(self) -> SuperOperator:
        return SuperOperator.from_kraus(self.kraus, self.dim)

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for k in self.kraus:
            out += k @ rho @ k.conj().T
        return out

    def scaled(self, factor: float) -> "CPnTPMap":
        """Map multiplied by ``factor`` >= 0."""
        r = math.sqrt(factor)
        return CPnTPMap(self.dim, tuple(r * k for k in self.kraus))


@dataclass(frozen=True)
class HPTPSplit:
    original: SuperOperator
    positive: CPnTPMap
    negative: CPnTPMap
    eigenvalues: tuple = field(default=(), repr=False)

    def part(self, x: int) -> CPnTPMap:
        return self.negative if x else self.positive


def hptp_split(s: SuperOperator, tol: float = 1e-9) -> HPTPSplit:
    """Write ``s = T0 - T1`` with T0, T1 completely positive."""
    if not is_hptp(s, tol):
        raise NotHPTPError("map is not Hermiticity- and trace-preserving")
    d = s.dim
    j = to_choi(s).matrix
    w, v = herm_eig(0.5 * (j + j.conj().T))
    cutoff = 1e-12 * float(np.sum(np.abs(w)))
    pos, neg = [], []
    for lam, vec_ in zip(w, v.T):
        # J[(a, i), (b, j)] convention: a Kraus op K has Choi vector K.reshape(-1)
        k = vec_.reshape(d, d)
        if lam > cutoff:
            pos.append(math.sqrt(lam) * k)
        elif lam < -cutoff:
            neg.append(math.sqrt(-lam) * k)
    return HPTPSplit(s, CPnTPMap(d, tuple(pos)), CPnTPMap(d, tuple(neg)), tuple(w))


# -- dilation ----------------------------------------------------------------

def complete_isometry(v: np.ndarray, pivot: float = COMPLETION_PIVOT) -> np.ndarray:
    """Extend orthonormal columns to a unitary by Gram-Schmidt on e_0, e_1, ..."""
    n, k = v.shape
    cols = [v[:, c] for c in range(k)]
    q = v.copy()
    for idx in range(n):
        if len(cols) == n:
            break
        e = np.zeros(n, dtype=complex)
        e[idx] = 1.0
        w = e - q @ (q.conj().T @ e)
        w = w - q @ (q.conj().T @ w)
        norm = np.linalg.norm(w)
        if norm > pivot:
            cols.append(w / norm)
            q = np.column_stack(cols)
    if len(cols) != n:
        raise np.linalg.LinAlgError("unitary completion failed")
    return np.column_stack(cols)


def complete_isometry_qr(v: np.ndarray, seed: int = 0) -> np.ndarray:
    """Alternative completion from a random complement; used to check independence."""
    n, k = v.shape
    rng = np.random.default_rng(seed)
    extra = rng.normal(size=(n, n - k)) + 1j * rng.normal(size=(n, n - k))
    extra -= v @ (v.conj().T @ extra)
    qx, _ = np.linalg.qr(extra)
    return np.column_stack([v, qx])


@dataclass(frozen=True)
class DilatedInstrument:
    unitary: np.ndarray = field(repr=False)
    dim: int
    ancilla_dim: int
    gauge_scalar: float
    k_inf: np.ndarray = field(repr=False)
    source: CPnTPMap = field(repr=False)

    @property
    def p1(self) -> np.ndarray:
        """Projector on ancilla levels 0..d_x-1 (the keep outcome)."""
        proj = np.zeros(self.ancilla_dim)
        proj[: self.ancilla_dim - 1] = 1.0
        return np.kron(np.diag(proj), np.eye(self.dim))

    @property
    def p2(self) -> np.ndarray:
        proj = np.zeros(self.ancilla_dim)
        proj[-1] = 1.0
        return np.kron(np.diag(proj), np.eye(self.dim))


def dilate(part: CPnTPMap, completion: str = "gram-schmidt", tol: float = 1e-10) -> DilatedInstrument:
    d = part.dim
    g = part.g
    gauge_scalar = g if g > 1.0 else 1.0
    kraus = [k / math.sqrt(gauge_scalar) for k in part.kraus]
    gauge = part.gauge / gauge_scalar
    k_inf = psd_sqrt(np.eye(d) - gauge, tol=tol)
    v = np.vstack(kraus + [k_inf]) if kraus else k_inf.copy()
    if completion == "gram-schmidt":
        u = complete_isometry(v)
    elif completion == "qr":
        u = complete_isometry_qr(v)
    else:
        raise ValueError(f"unknown completion {completion!r}")
    return DilatedInstrument(u, d, len(kraus) + 1, gauge_scalar, k_inf, part)


# -- application -------------------------------------------------------------

@dataclass(frozen=True)
class InstrumentOutput:
    p1: float
    post_state: np.ndarray
    scaled_output: np.ndarray


def _embed_and_order(rho: np.ndarray, support, n_sites: int, d: int):
    rest = [x for x in range(n_sites) if x not in support]
    order = list(support) + rest
    t = rho.reshape([d] * (2 * n_sites)).transpose(order + [x + n_sites for x in order])
    return t.reshape(d**n_sites, d**n_sites), order


def _restore_order(rho: np.ndarray, order, n_sites: int, d: int) -> np.ndarray:
    inv = list(np.argsort(order))
    t = rho.reshape([d] * (2 * n_sites)).transpose(inv + [x + n_sites for x in inv])
    return t.reshape(d**n_sites, d**n_sites)


def apply_exact(
    instr: DilatedInstrument,
    rho,
    support=None,
    n_sites: int | None = None,
    d: int | None = None,
) -> InstrumentOutput:
    """Run ancilla preparation, the dilation unitary, and the keep projector.

    With ``support``/``n_sites``/``d`` the instrument acts on the listed
    sites of a larger register; the remaining sites ride along untouched.
    """
    rho = np.asarray(rho, dtype=complex)
    order = None
    if support is not None:
        rho, order = _embed_and_order(rho, support, n_sites, d)
    dim = rho.shape[0]
    rest = dim // instr.dim
    if instr.dim * rest != dim:
        raise DimensionError("instrument dimension does not divide the state dimension")
    a = instr.ancilla_dim
    anc0 = np.zeros((a, a))
    anc0[0, 0] = 1.0
    u = np.kron(instr.unitary, np.eye(rest)) if rest > 1 else instr.unitary
    p1 = np.kron(instr.p1, np.eye(rest)) if rest > 1 else instr.p1
    full = np.kron(anc0, rho)
    kept = p1 @ u @ full @ u.conj().T @ p1
    unnorm = partial_trace(kept, [a, dim], keep=[1])
    prob = float(np.real(np.trace(unnorm)))
    scaled = instr.gauge_scalar * unnorm
    if order is not None:
        scaled = _restore_order(scaled, order, n_sites, d)
        unnorm = _restore_order(unnorm, order, n_sites, d)
    if prob < 1e-14:
        raise UnreachableOutcome(f"outcome-1 probability {prob:.3g} is numerically zero")
    post = unnorm / prob
    return InstrumentOutput(min(max(prob, 0.0), 1.0), post, scaled)


def sample_outcome(instr: DilatedInstrument, rho, rng: np.random.Generator, **where):
    """One shot: returns (1, post_state) with probability p1, else (2, None)."""
    try:
        out = apply_exact(instr, rho, **where)
    except UnreachableOutcome:
        return 2, None
    if rng.random() < out.p1:
        return 1, out.post_state
    return 2, None


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class WilsonEstimate:
    n1: int
    nt: int
    z: float

    def __post_init__(self):
        if self.nt < 1 or not 0 <= self.n1 <= self.nt or self.z <= 0:
            raise ValueError(f"invalid Wilson inputs n1={self.n1}, nt={self.nt}, z={self.z}")

    @property
    def p_hat(self) -> float:
        return self.n1 / self.nt

    @property
    def estimate(self) -> float:
        z2 = self.z * self.z
        return (self.p_hat + z2 / (2 * self.nt)) / (1 + z2 / self.nt)

    @property
    def half_width(self) -> float:
        z2, n, p = self.z * self.z, self.nt, self.p_hat
        return self.z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)

    @property
    def interval(self) -> tuple[float, float]:
        c, e = self.estimate, self.half_width
        return max(0.0, c - e), min(1.0, c + e)

    def to_dict(self) -> dict:
        lo, hi = self.interval
        return {"n1": self.n1, "nt": self.nt, "z": self.z, "p_hat": self.p_hat,
                "estimate": self.estimate, "half_width": self.half_width,
                "lower": lo, "upper": hi}


def wilson(n1: int, nt: int, z: float = DEFAULT_Z) -> WilsonEstimate:
    return WilsonEstimate(int(n1), int(nt), float(z))


def trial_condition(nt: int, eps: float, z: float) -> bool:
    return nt * nt / (nt + z * z) >= z * z / (4 * eps * eps)


def trials_needed(eps: float, z: float = DEFAULT_Z) -> int:
    """Smallest N_T with N_T^2 / (N_T + z^2) >= z^2 / (4 eps^2)."""
    if eps <= 0 or z <= 0:
        raise ValueError("eps and z must be positive")
    c = z * z / (4 * eps * eps)
    n = max(1, math.ceil((c + math.sqrt(c * c + 4 * c * z * z)) / 2))
    while not trial_condition(n, eps, z):
        n += 1
    while n > 1 and trial_condition(n - 1, eps, z):
        n -= 1
    return n
