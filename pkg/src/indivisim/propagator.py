"""Time-ordered propagators, slice grids, and a Runge-Kutta reference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .liouvillian import (
    KLocalLiouvillian,
    LocalTerm,
    averaged_generator,
    generator_at,
    global_generator_at,
)
from .tensor import SuperOperator, expm, unvec, vec

Generator = Callable[[float], np.ndarray]

DEFAULT_TOL = 1e-10
MAX_LEVEL = 14


class ConvergenceError(RuntimeError):
    pass


def exp_midpoint(gen: Generator, s: float, t: float, n: int) -> np.ndarray:
    """Product of ``n`` exponential-midpoint substeps over ``[s, t]``."""
    h = (t - s) / n
    out = None
    for k in range(n):
        step = expm(h * gen(s + (k + 0.5) * h))
        out = step if out is None else step @ out
    return out


def _evolve_smooth(gen: Generator, s: float, t: float, tol: float) -> np.ndarray:
    # Romberg table over halvings; the midpoint rule is symmetric, so its
    # error expands in even powers of the step.
    prev_row = [exp_midpoint(gen, s, t, 1)]
    for level in range(1, MAX_LEVEL + 1):
        row = [exp_midpoint(gen, s, t, 2**level)]
        for j in range(1, level + 1):
            row.append(row[j - 1] + (row[j - 1] - prev_row[j - 1]) / (4**j - 1))
        if np.linalg.norm(row[-1] - prev_row[-1]) < tol:
            return row[-1]
        prev_row = row
    raise ConvergenceError(
        f"propagator over [{s}, {t}] did not reach tol {tol:g} after {2 ** MAX_LEVEL} substeps"
    )


def evolve(
    gen: Generator,
    s: float,
    t: float,
    tol: float = DEFAULT_TOL,
    breakpoints: Iterable[float] = (),
    constant: bool = False,
) -> np.ndarray:
    """Transfer matrix of the time-ordered propagator T(t, s).

    ``gen`` returns the generator transfer matrix at a time. Intervals are
    split at ``breakpoints`` so each piece is integrated on a smooth
    generator. A ``constant`` generator is exponentiated directly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t < s or s < 0:
        raise ValueError(f"need 0 <= s <= t, got s={s}, t={t}")
    if t == s:
        side = gen(s).shape[0]
        return np.eye(side, dtype=complex)
    if constant:
        return expm((t - s) * gen(s))
    pts = [s] + sorted(p for p in set(breakpoints) if s < p < t) + [t]
    out = None
    for a, b in zip(pts, pts[1:]):
        piece = _evolve_smooth(gen, a, b, tol)
        out = piece if out is None else piece @ out
    return out


def rk4_evolve(gen: Generator, s: float, t: float, steps: int) -> np.ndarray:
    """Classical RK4 on dT/dt = L(t) T; used only as an independent check."""
    h = (t - s) / steps
    side = gen(s).shape[0]
    y = np.eye(side, dtype=complex)
    for k in range(steps):
        r = s + k * h
        l0, lm, l1 = gen(r), gen(r + 0.5 * h), gen(r + h)
        k1 = l0 @ y
        k2 = lm @ (y + 0.5 * h * k1)
        k3 = lm @ (y + 0.5 * h * k2)
        k4 = l1 @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def term_propagator(term: LocalTerm, s: float, t: float, tol: float = DEFAULT_TOL) -> SuperOperator:
    gen = lambda r: generator_at(term, r).transfer
    out = evolve(gen, s, t, tol, term.breakpoints(), constant=term.is_constant)
    return SuperOperator(term.dim, out)


def global_propagator(
    L: KLocalLiouvillian, s: float, t: float, tol: float = DEFAULT_TOL
) -> SuperOperator:
    gen = lambda r: global_generator_at(L, r).transfer
    constant = all(term.is_constant for term in L.terms)
    out = evolve(gen, s, t, tol, L.breakpoints(), constant=constant)
    return SuperOperator(L.dim, out)


@dataclass(frozen=True)
class SliceGrid:
    """Local slice propagators ``props[i][j]`` for term ``i``, slice ``j`` (0-based)."""

    t: float
    m: int
    props: tuple
    supports: tuple
    averaged: bool
    n_sites: int
    d: int

    @property
    def dt(self) -> float:
        return self.t / self.m

    @property
    def K(self) -> int:
        return len(self.props)

    def __getitem__(self, key) -> SuperOperator:
        i, j = key
        return self.props[i][j]


def slice_grid(
    L: KLocalLiouvillian,
    t: float,
    m: int,
    averaged: bool = False,
    tol: float = DEFAULT_TOL,
) -> SliceGrid:
    if m < 1:
        raise ValueError("m must be at least 1")
    dt = t / m
    props = []
    for term in L.terms:
        row = []
        if term.is_constant:
            p = SuperOperator(term.dim, expm(dt * generator_at(term, 0.0).transfer))
            row = [p] * m
        else:
            for j in range(1, m + 1):
                if averaged:
                    g = averaged_generator(term, j, m, t)
                    row.append(SuperOperator(term.dim, expm(dt * g.transfer)))
                else:
                    row.append(term_propagator(term, t * (j - 1) / m, t * j / m, tol))
        props.append(tuple(row))
    return SliceGrid(
        t=t,
        m=m,
        props=tuple(props),
        supports=tuple(term.support for term in L.terms),
        averaged=averaged,
        n_sites=L.lattice.n_sites,
        d=L.lattice.d,
    )


def reference_state_evolution(
    L: KLocalLiouvillian, rho0, t: float, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """rho(t) from the global propagator; the oracle for end-to-end checks."""
    rho0 = np.asarray(rho0, dtype=complex)
    if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-9 or abs(np.trace(rho0) - 1) > 1e-9:
        raise ValueError("initial state must be Hermitian with unit trace")
    prop = global_propagator(L, 0.0, t, tol)
    return unvec(prop.transfer @ vec(rho0), L.dim)
