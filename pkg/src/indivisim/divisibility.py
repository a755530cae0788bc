"""Channel checks on slice propagators and the indivisibility counts built on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .liouvillian import KLocalLiouvillian
from .propagator import DEFAULT_TOL, SliceGrid, slice_grid
from .tensor import SuperOperator, choi_output_trace, to_choi

CP_TOL = 1e-9


def choi_min_eig(s: SuperOperator) -> float:
    j = to_choi(s).matrix
    return float(np.linalg.eigvalsh(0.5 * (j + j.conj().T))[0])


def check_channel(s: SuperOperator, tol: float = CP_TOL) -> bool:
    """True iff ``s`` is completely positive and trace preserving.

    CP: smallest Choi eigenvalue >= -tol * |tr J|. TP: the output-factor
    partial trace of J equals the identity within tol.
    """
    choi = to_choi(s)
    j = choi.matrix
    if np.max(np.abs(j - j.conj().T)) > tol * max(1.0, abs(np.trace(j))):
        return False
    scale = max(abs(np.trace(j)), 1.0)
    lam = np.linalg.eigvalsh(0.5 * (j + j.conj().T))[0]
    if lam < -tol * scale:
        return False
    tp_err = np.max(np.abs(choi_output_trace(choi) - np.eye(s.dim)))
    return bool(tp_err <= tol)


def seq_count(mask_row) -> int:
    """Number of CP -> non-CP transitions along one term's slices."""
    row = [bool(x) for x in mask_row]
    return sum(1 for a, b in zip(row, row[1:]) if not a and b)


@dataclass(frozen=True)
class DivisibilityProfile:
    m: int
    mask: tuple  # mask[i][j] is True when Ch(T^j_i) = 1
    per_term: tuple  # N~^m_i
    per_slice: tuple  # N^^m_j
    intervals: tuple  # C^m_i
    leading_indivisible: tuple = field(default=())  # terms whose first slice is non-CP

    @property
    def K(self) -> int:
        return len(self.mask)

    @property
    def n_tilde(self) -> int:
        return max(self.per_term, default=0)

    @property
    def n_hat(self) -> int:
        return max(self.per_slice, default=0)

    @property
    def n_total(self) -> int:
        return sum(self.per_term)

    @property
    def c_tilde(self) -> int:
        return 2 * max(self.intervals, default=0)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "N_tilde_per_term": list(self.per_term),
            "N_hat_per_slice": list(self.per_slice),
            "N_tilde": self.n_tilde,
            "N_hat": self.n_hat,
            "N_total": self.n_total,
            "C_per_term": list(self.intervals),
            "C_tilde": self.c_tilde,
            "leading_indivisible_terms": list(self.leading_indivisible),
            "non_cp_slots": [[i, j + 1] for i, row in enumerate(self.mask) for j, x in enumerate(row) if x],
        }


def profile_from_mask(mask) -> DivisibilityProfile:
    mask = tuple(tuple(bool(x) for x in row) for row in mask)
    m = len(mask[0]) if mask else 0
    per_term = tuple(sum(row) for row in mask)
    per_slice = tuple(sum(row[j] for row in mask) for j in range(m))
    intervals = tuple(seq_count(row) for row in mask)
    leading = tuple(i for i, row in enumerate(mask) if row and row[0])
    return DivisibilityProfile(m, mask, per_term, per_slice, intervals, leading)


def profile(grid: SliceGrid, tol: float = CP_TOL) -> DivisibilityProfile:
    cache: dict[int, bool] = {}
    mask = []
    for row in grid.props:
        out = []
        for p in row:
            # constant terms reuse one propagator object across slices
            key = id(p)
            if key not in cache:
                cache[key] = not check_channel(p, tol)
            out.append(cache[key])
        mask.append(out)
    return profile_from_mask(mask)


@dataclass(frozen=True)
class TidEstimate:
    t: float
    m_sequence: tuple
    tid_per_term: tuple
    c_per_term: tuple
    history: tuple  # (m, tid_per_term, c_per_term) for every m
    converged: bool
    tol: float

    @property
    def tid(self) -> float:
        return max(self.tid_per_term, default=0.0)

    @property
    def c_tilde(self) -> int:
        return 2 * max(self.c_per_term, default=0)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "m_sequence": list(self.m_sequence),
            "t_id": self.tid,
            "t_id_per_term": list(self.tid_per_term),
            "C_per_term": list(self.c_per_term),
            "C_tilde": self.c_tilde,
            "converged": self.converged,
            "tol": self.tol,
            "history": [
                {"m": m, "t_id_per_term": list(a), "C_per_term": list(c)} for m, a, c in self.history
            ],
        }


def estimate_tid(
    L: KLocalLiouvillian,
    t: float,
    m_sequence=(16, 32, 64, 128),
    tol: float = 0.02,
    cp_tol: float = CP_TOL,
    integrator_tol: float = DEFAULT_TOL,
) -> TidEstimate:
    """Finite-m estimates of the indivisible time and interval counts.

    Converged when the last two estimates of every term's indivisible time
    differ by less than ``tol * t``; otherwise the flag is False.
    """
    seq = tuple(int(m) for m in m_sequence)
    if len(seq) < 3 or any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValueError("m_sequence needs at least 3 strictly increasing counts")
    history = []
    for m in seq:
        prof = profile(slice_grid(L, t, m, tol=integrator_tol), cp_tol)
        tids = tuple(n * t / m for n in prof.per_term)
        history.append((m, tids, prof.intervals))
    last, prev = history[-1][1], history[-2][1]
    converged = all(abs(a - b) < tol * t for a, b in zip(last, prev))
    return TidEstimate(
        t=t,
        m_sequence=seq,
        tid_per_term=history[-1][1],
        c_per_term=history[-1][2],
        history=tuple(history),
        converged=converged,
        tol=tol,
    )
