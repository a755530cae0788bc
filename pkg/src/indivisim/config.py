"""JSON model descriptions: schema, parsing, and conversion to library objects."""

from __future__ import annotations

import json
from functools import reduce
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .liouvillian import (
    KLocalLiouvillian,
    Lattice,
    Lindblad,
    LocalTerm,
    ModelError,
    TimeOperator,
    validate_model,
)
from .timefunc import TimeFunction

SCHEMA_VERSION = 1

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class ConfigError(ValueError):
    """Carries a list of (path, reason) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {r}" for p, r in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


Entry = Union[float, list[float]]
MatrixLiteral = list[list[Entry]]


def _entry(x) -> complex:
    if isinstance(x, list):
        return complex(x[0], x[1])
    return complex(x)


def _check_matrix(rows):
    for i, row in enumerate(rows):
        if len(row) != len(rows):
            raise ValueError(f"row {i} has {len(row)} entries, expected {len(rows)} (square matrix)")
        for j, x in enumerate(row):
            if isinstance(x, list) and len(x) != 2:
                raise ValueError(f"entry [{i}][{j}] must be a [re, im] pair, got {len(x)} numbers")
    return rows


def to_matrix(rows) -> np.ndarray:
    return np.array([[_entry(x) for x in row] for row in rows], dtype=complex)


class TimeFn(_Strict):
    kind: Literal["constant", "polynomial", "sinusoid", "tanh", "piecewise", "table"]
    params: dict = Field(default_factory=dict)

    def build(self) -> TimeFunction:
        return TimeFunction.from_dict({"kind": self.kind, "params": self.params})


class Component(_Strict):
    matrix: MatrixLiteral
    coeff: TimeFn | float = 1.0

    @field_validator("matrix")
    @classmethod
    def _sq(cls, v):
        return _check_matrix(v)


class ComposedOperator(_Strict):
    components: list[Component] = Field(min_length=1)


class RawComponent(_Strict):
    transfer: MatrixLiteral
    coeff: TimeFn | float = 1.0

    @field_validator("transfer")
    @classmethod
    def _sq(cls, v):
        return _check_matrix(v)


class RawGenerator(_Strict):
    components: list[RawComponent] = Field(min_length=1)


class LindbladSpec(_Strict):
    matrix: Union[MatrixLiteral, ComposedOperator]
    rate: TimeFn | float

    @field_validator("matrix")
    @classmethod
    def _sq(cls, v):
        return _check_matrix(v) if isinstance(v, list) else v


class TermSpec(_Strict):
    support: list[int] = Field(min_length=1)
    hamiltonian: Union[MatrixLiteral, ComposedOperator, None] = None
    lindblads: list[LindbladSpec] = Field(default_factory=list)
    raw_generator: RawGenerator | None = None

    @field_validator("hamiltonian")
    @classmethod
    def _sq(cls, v):
        return _check_matrix(v) if isinstance(v, list) else v


class LatticeSpec(_Strict):
    sites: int = Field(ge=1)
    local_dim: int = Field(default=2, ge=2)


class ModelConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    lattice: LatticeSpec
    terms: list[TermSpec] = Field(min_length=1)
    horizon: float = Field(gt=0)
    locality: int | None = None
    initial_state: Union[Literal["zero", "maximally_mixed"], MatrixLiteral] = "zero"
    observable: Union[str, MatrixLiteral, None] = None


def _coeff(c) -> TimeFunction:
    return c.build() if isinstance(c, TimeFn) else TimeFunction.constant(float(c))


def _operator(spec) -> TimeOperator:
    if isinstance(spec, ComposedOperator):
        return TimeOperator(tuple((_coeff(c.coeff), to_matrix(c.matrix)) for c in spec.components))
    return TimeOperator.static(to_matrix(spec))


def _semantic_errors(cfg: ModelConfig) -> list:
    errs = []
    if cfg.schema_version != SCHEMA_VERSION:
        errs.append(("schema_version", f"unsupported version {cfg.schema_version}"))
    n, d = cfg.lattice.sites, cfg.lattice.local_dim
    for i, term in enumerate(cfg.terms):
        base = f"terms.{i}"
        bad = [x for x in term.support if not 0 <= x < n]
        if bad:
            errs.append((f"{base}.support", f"sites {bad} outside the {n}-site lattice (zero-based)"))
        if len(set(term.support)) != len(term.support):
            errs.append((f"{base}.support", "repeated site"))
        has_gksl = term.hamiltonian is not None or term.lindblads
        if term.raw_generator is not None and has_gksl:
            errs.append((base, "give either a GKSL term or raw_generator, not both"))
        if term.raw_generator is None and not has_gksl:
            errs.append((base, "empty term"))
    if isinstance(cfg.observable, str):
        s = cfg.observable.upper()
        if d != 2 or len(s) != n or any(c not in PAULI for c in s):
            errs.append(("observable", f"Pauli string must have {n} letters from IXYZ on qubits"))
    return errs


def parse_config(text: str) -> ModelConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", f"syntax error: {exc.msg}")]) from exc
    try:
        cfg = ModelConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(
            [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in exc.errors()]
        ) from exc
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def build_model(cfg: ModelConfig) -> KLocalLiouvillian:
    terms = []
    errs = []
    for i, spec in enumerate(cfg.terms):
        try:
            if spec.raw_generator is not None:
                raw = TimeOperator(tuple(
                    (_coeff(c.coeff), to_matrix(c.transfer)) for c in spec.raw_generator.components))
                terms.append(LocalTerm(spec.support, raw=raw))
            else:
                h = _operator(spec.hamiltonian) if spec.hamiltonian is not None else None
                ls = tuple(Lindblad(_operator(l.matrix), _coeff(l.rate)) for l in spec.lindblads)
                terms.append(LocalTerm(spec.support, h, ls))
        except (ModelError, ValueError) as exc:
            errs.append((f"terms.{i}", str(exc)))
    if errs:
        raise ConfigError(errs)
    try:
        lat = Lattice(cfg.lattice.sites, cfg.lattice.local_dim)
    except ModelError as exc:
        raise ConfigError([("lattice", str(exc))]) from exc
    model = KLocalLiouvillian(lat, terms, k=cfg.locality)
    report = validate_model(model, cfg.horizon)
    if not report.ok:
        raise ConfigError(
            [(f"terms.{i}" if i is not None else "terms", f"{check}: {detail}")
             for i, check, detail in report.issues])
    return model


def initial_state(cfg: ModelConfig) -> np.ndarray:
    dim = cfg.lattice.local_dim ** cfg.lattice.sites
    if cfg.initial_state == "zero":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    if cfg.initial_state == "maximally_mixed":
        return np.eye(dim, dtype=complex) / dim
    rho = to_matrix(cfg.initial_state)
    if rho.shape != (dim, dim):
        raise ConfigError([("initial_state", f"expected a {dim}x{dim} matrix")])
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9 or abs(np.trace(rho) - 1) > 1e-9:
        raise ConfigError([("initial_state", "must be Hermitian with unit trace")])
    if np.linalg.eigvalsh(rho)[0] < -1e-9:
        raise ConfigError([("initial_state", "must be positive semidefinite")])
    return rho


def observable(cfg: ModelConfig) -> np.ndarray | None:
    if cfg.observable is None:
        return None
    if isinstance(cfg.observable, str):
        return reduce(np.kron, [PAULI[c] for c in cfg.observable.upper()])
    dim = cfg.lattice.local_dim ** cfg.lattice.sites
    a = to_matrix(cfg.observable)
    if a.shape != (dim, dim):
        raise ConfigError([("observable", f"expected a {dim}x{dim} matrix")])
    if np.max(np.abs(a - a.conj().T)) > 1e-9:
        raise ConfigError([("observable", "must be Hermitian")])
    return a


def load(path: str):
    """Read a config file and return (config, model, rho0, observable)."""
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    return cfg, build_model(cfg), initial_state(cfg), observable(cfg)
