"""Dense operator and superoperator algebra.

Conventions used throughout the package:

* vectorization is column stacking, ``vec(|i><j|)`` sits at index ``j*D + i``;
* a :class:`SuperOperator` stores the transfer matrix ``S`` with
  ``vec(S(X)) = S @ vec(X)``, so ``vec(A X B) = kron(B.T, A) @ vec(X)``;
* the Choi matrix is ``J = sum_ij S(|i><j|) (x) |i><j|`` (output factor first);
* multi-site spaces are ordered site-lexicographically, site 0 most significant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

HERM_TOL = 1e-10
PSD_TOL = 1e-10


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d array, got shape {m.shape}")
    return m


def _square(a) -> np.ndarray:
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def _side_to_dim(side: int) -> int:
    dim = int(round(np.sqrt(side)))
    if dim * dim != side:
        raise DimensionError(f"transfer side {side} is not a perfect square")
    return dim


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on D x D operators held as a D^2 x D^2 transfer matrix."""

    dim: int
    transfer: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = _square(self.transfer)
        if t.shape[0] != self.dim * self.dim:
            raise DimensionError(
                f"transfer of side {t.shape[0]} does not match dim {self.dim}"
            )
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "transfer", t)

    @classmethod
    def from_transfer(cls, transfer) -> "SuperOperator":
        t = _square(transfer)
        return cls(_side_to_dim(t.shape[0]), t)

    @classmethod
    def identity(cls, dim: int) -> "SuperOperator":
        return cls(dim, np.eye(dim * dim, dtype=complex))

    @classmethod
    def zero(cls, dim: int) -> "SuperOperator":
        return cls(dim, np.zeros((dim * dim, dim * dim), dtype=complex))

    @classmethod
    def left(cls, a) -> "SuperOperator":
        """X -> a X"""
        a = _square(a)
        return cls(a.shape[0], np.kron(np.eye(a.shape[0]), a))

    @classmethod
    def right(cls, b) -> "SuperOperator":
        """X -> X b"""
        b = _square(b)
        return cls(b.shape[0], np.kron(b.T, np.eye(b.shape[0])))

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray], dim: int | None = None) -> "SuperOperator":
        kraus = [as_matrix(k) for k in kraus]
        if not kraus:
            if dim is None:
                raise DimensionError("empty Kraus list needs an explicit dim")
            return cls.zero(dim)
        d = kraus[0].shape[1]
        t = sum(np.kron(k.conj(), k) for k in kraus)
        return cls(d, t)

    def __call__(self, a) -> np.ndarray:
        return apply_superop(self, a)

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        _check_same_dim(self, other)
        return SuperOperator(self.dim, self.transfer @ other.transfer)

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        _check_same_dim(self, other)
        return SuperOperator(self.dim, self.transfer + other.transfer)

    def __sub__(self, other: "SuperOperator") -> "SuperOperator":
        _check_same_dim(self, other)
        return SuperOperator(self.dim, self.transfer - other.transfer)

    def __mul__(self, scalar) -> "SuperOperator":
        return SuperOperator(self.dim, scalar * self.transfer)

    __rmul__ = __mul__

    def adjoint(self) -> "SuperOperator":
        """Hilbert-Schmidt adjoint."""
        return SuperOperator(self.dim, self.transfer.conj().T)


def _check_same_dim(a: SuperOperator, b: SuperOperator) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"superoperator dims differ: {a.dim} vs {b.dim}")


@dataclass(frozen=True)
class ChoiMatrix:
    dim: int
    matrix: np.ndarray = field(repr=False)


# -- basic algebra -----------------------------------------------------------

def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Sequence) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, as_matrix(m))
    return out


def vec(m) -> np.ndarray:
    return as_matrix(m).reshape(-1, order="F")


def unvec(v, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != dim * dim:
        raise DimensionError(f"vector of length {v.size} cannot be unvec'd to {dim}x{dim}")
    return v.reshape((dim, dim), order="F")


def apply_superop(s: SuperOperator, a) -> np.ndarray:
    a = _square(a)
    if a.shape[0] != s.dim:
        raise DimensionError(f"operator of side {a.shape[0]} vs superoperator dim {s.dim}")
    return unvec(s.transfer @ vec(a), s.dim)


def partial_trace(m, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``.

    The kept factors stay in their original order.
    """
    m = _square(m)
    dims = [int(d) for d in dims]
    n = len(dims)
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"dims {dims} do not multiply to side {m.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep {keep} out of range for {n} factors")
    t = m.reshape(dims + dims)
    row = list(range(n))
    col = [i + n if i in keep else i for i in range(n)]
    out_idx = keep + [k + n for k in keep]
    t = np.einsum(t, row + col, out_idx)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return np.asarray(t).reshape(d_keep, d_keep)


def is_hermitian(m, tol: float = HERM_TOL) -> bool:
    m = _square(m)
    scale = max(1.0, float(np.linalg.norm(m, 2))) if m.size else 1.0
    return float(np.max(np.abs(m - m.conj().T), initial=0.0)) <= tol * scale


def herm_eig(m, tol: float = HERM_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    m = _square(m)
    if not is_hermitian(m, tol):
        raise NotHermitianError(
            f"matrix deviates from Hermitian by {np.max(np.abs(m - m.conj().T)):.3g}"
        )
    h = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(h)
    return w, v


def expm(m) -> np.ndarray:
    return scipy.linalg.expm(_square(m))


def psd_sqrt(m, tol: float = PSD_TOL) -> np.ndarray:
    w, v = herm_eig(m)
    if w.size and w[0] < -tol:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3g} below -{tol:g}")
    w = np.clip(w, 0.0, None)
    r = (v * np.sqrt(w)) @ v.conj().T
    return 0.5 * (r + r.conj().T)


def trace_norm(a) -> float:
    return float(np.sum(np.linalg.svd(as_matrix(a), compute_uv=False)))


def spectral_norm(a) -> float:
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


# -- Choi-Jamiolkowski ---------------------------------------------------------

def to_choi(s: SuperOperator) -> ChoiMatrix:
    d = s.dim
    # transfer[b*d + a, j*d + i] = S(|i><j|)[a, b]  ->  J[(a, i), (b, j)]
    t = s.transfer.reshape(d, d, d, d)
    j = t.transpose(1, 3, 0, 2).reshape(d * d, d * d)
    return ChoiMatrix(d, j)


def from_choi(j: ChoiMatrix) -> SuperOperator:
    d = j.dim
    m = _square(j.matrix)
    if m.shape[0] != d * d:
        raise DimensionError(f"Choi matrix of side {m.shape[0]} does not match dim {d}")
    t = m.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
    return SuperOperator(d, t)


def choi_output_trace(j: ChoiMatrix) -> np.ndarray:
    """Trace over the output factor; equals the identity for trace-preserving maps."""
    return partial_trace(j.matrix, [j.dim, j.dim], keep=[1])


# -- (1->1) norm ---------------------------------------------------------------

@dataclass(frozen=True)
class NormEstimate:
    lower: float
    upper: float


def _batched_trace_norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.svd(x, compute_uv=False).sum(axis=-1)


def one_to_one_norm(
    s: SuperOperator,
    restarts: int = 32,
    tol: float = 1e-9,
    max_iter: int = 500,
    seed: int = 0,
) -> NormEstimate:
    """Bracket the trace-norm induced norm of ``s``.

    The lower value maximizes ``||S(psi phi^dag)||_1`` over unit vectors by
    alternating updates: the polar factor of the current output fixes a
    unitary ``U``, then (psi, phi) jump to the top singular pair of
    ``S^dag(U)^dag``. Each step is monotone. All restarts run batched.
    The upper value is ``sqrt(D) * ||transfer||_2``.
    """
    d = s.dim
    t = s.transfer
    upper = float(np.sqrt(d) * spectral_norm(t))
    if upper == 0.0:
        return NormEstimate(0.0, 0.0)
    rng = np.random.default_rng(seed)
    shape = (restarts, d)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    phi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    # deterministic basis starts help on structured maps
    n_basis = min(restarts, d)
    psi[:n_basis] = np.eye(d)[:n_basis]
    phi[:n_basis] = np.eye(d)[:n_basis]
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    phi /= np.linalg.norm(phi, axis=1, keepdims=True)

    t_adj = t.conj().T
    best = np.zeros(restarts)
    for _ in range(max_iter):
        x = np.einsum("ri,rj->rij", psi, phi.conj())
        vx = x.transpose(0, 2, 1).reshape(restarts, d * d)
        y = (vx @ t.T).reshape(restarts, d, d).transpose(0, 2, 1)
        u, sv, vh = np.linalg.svd(y)
        value = sv.sum(axis=1)
        polar = u @ vh
        vu = polar.transpose(0, 2, 1).reshape(restarts, d * d)
        m = (vu @ t_adj.T).reshape(restarts, d, d).transpose(0, 2, 1)
        # maximize phi^dag M^dag psi ... i.e. top singular pair of M^dag
        mh = m.conj().transpose(0, 2, 1)
        u2, _, vh2 = np.linalg.svd(mh)
        phi = u2[:, :, 0]
        psi = vh2[:, 0, :].conj()
        improved = value - best
        best = np.maximum(best, value)
        if np.all(improved <= tol * np.maximum(1.0, best)):
            break
    x = np.einsum("ri,rj->rij", psi, phi.conj())
    vx = x.transpose(0, 2, 1).reshape(restarts, d * d)
    y = (vx @ t.T).reshape(restarts, d, d).transpose(0, 2, 1)
    best = np.maximum(best, _batched_trace_norm(y))
    lower = float(best.max())
    return NormEstimate(min(lower, upper), upper)


# -- local <-> global ----------------------------------------------------------

def _check_support(support: Sequence[int], n_sites: int) -> list[int]:
    support = [int(s) for s in support]
    if len(set(support)) != len(support):
        raise DimensionError(f"support {support} has repeated sites")
    if any(s < 0 or s >= n_sites for s in support):
        raise DimensionError(f"support {support} out of range for {n_sites} sites")
    return support


def embed_local(s: SuperOperator, support: Sequence[int], n_sites: int, d: int) -> SuperOperator:
    """Lift a map on the support sites to the full lattice (identity elsewhere)."""
    support = _check_support(support, n_sites)
    k = len(support)
    if s.dim != d**k:
        raise DimensionError(f"local dim {s.dim} != d^|support| = {d**k}")
    rest = [x for x in range(n_sites) if x not in support]
    n = n_sites
    big = np.kron(s.transfer, np.eye(d ** (2 * (n - k)), dtype=complex))
    # axis layout after kron: out(cZ, rZ, cR, rR) x in(cZ, rZ, cR, rR)
    big = big.reshape([d] * (4 * n))
    layout = (
        [("c", x) for x in support]
        + [("r", x) for x in support]
        + [("c", x) for x in rest]
        + [("r", x) for x in rest]
    )
    target = [("c", x) for x in range(n)] + [("r", x) for x in range(n)]
    pos = {key: i for i, key in enumerate(layout)}
    perm_half = [pos[key] for key in target]
    perm = perm_half + [p + 2 * n for p in perm_half]
    big = big.transpose(perm).reshape(d ** (2 * n), d ** (2 * n))
    return SuperOperator(d**n, big)


def embed_operator(a, support: Sequence[int], n_sites: int, d: int) -> np.ndarray:
    """Lift an operator on the support sites to the full lattice."""
    support = _check_support(support, n_sites)
    a = _square(a)
    k = len(support)
    if a.shape[0] != d**k:
        raise DimensionError(f"operator side {a.shape[0]} != d^|support| = {d**k}")
    rest = [x for x in range(n_sites) if x not in support]
    big = np.kron(a, np.eye(d ** (n_sites - k))).reshape([d] * (2 * n_sites))
    layout = support + rest
    pos = {site: i for i, site in enumerate(layout)}
    perm = [pos[x] for x in range(n_sites)]
    perm = perm + [p + n_sites for p in perm]
    return big.transpose(perm).reshape(d**n_sites, d**n_sites)


def apply_local(s: SuperOperator, rho, support: Sequence[int], n_sites: int, d: int) -> np.ndarray:
    """Apply a support-space map to a full-space operator without embedding it."""
    support = _check_support(support, n_sites)
    rho = _square(rho)
    k = len(support)
    if s.dim != d**k or rho.shape[0] != d**n_sites:
        raise DimensionError("local map or operator has the wrong dimension")
    rest = [x for x in range(n_sites) if x not in support]
    order = support + rest
    t = rho.reshape([d] * (2 * n_sites))
    t = t.transpose(order + [x + n_sites for x in order])
    dz, dr = d**k, d ** (n_sites - k)
    t = t.reshape(dz, dr, dz, dr).transpose(0, 2, 1, 3).reshape(dz, dz, dr * dr)
    # column-stacked vec of each (dz x dz) block
    blocks = t.transpose(1, 0, 2).reshape(dz * dz, dr * dr)
    out = s.transfer @ blocks
    out = out.reshape(dz, dz, dr, dr).transpose(1, 2, 0, 3)
    out = out.reshape([d] * (2 * n_sites))
    inv = np.argsort(order)
    out = out.transpose(list(inv) + [x + n_sites for x in inv])
    return out.reshape(d**n_sites, d**n_sites)
