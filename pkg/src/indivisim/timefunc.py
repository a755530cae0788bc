"""Serializable scalar functions of time used for rates and coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

KINDS = ("constant", "polynomial", "sinusoid", "tanh", "piecewise", "table")


class TimeDomainError(ValueError):
    pass


@dataclass(frozen=True)
class TimeFunction:
    """One member of the declared family, evaluable on ``[0, t_max]``.

    ``params`` layout per kind:

    constant    ``(value,)``
    polynomial  ``(c0, c1, ...)`` ascending powers
    sinusoid    ``(amp, freq, phase)`` -> ``amp * sin(freq * s + phase)``
    tanh        ``(amp, rate, offset)`` -> ``amp * tanh(rate * (s - offset))``
    table       ``(t0, ..., tn, v0, ..., vn)`` linear interpolation
    piecewise   ``pieces`` holds ``(start, end, TimeFunction)`` triples
    """

    kind: str
    params: tuple = ()
    pieces: tuple = ()
    t_max: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown time-function kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        expected = {"constant": 1, "sinusoid": 3, "tanh": 3}
        if self.kind in expected and len(self.params) != expected[self.kind]:
            raise ValueError(f"{self.kind} takes {expected[self.kind]} parameters")
        if self.kind == "polynomial" and not self.params:
            raise ValueError("polynomial needs at least one coefficient")
        if self.kind == "table":
            n = len(self.params)
            if n < 4 or n % 2:
                raise ValueError("table needs matching times and values, at least two nodes")
            times = self.params[: n // 2]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("table times must be strictly increasing")
        if self.kind == "piecewise":
            if not self.pieces:
                raise ValueError("piecewise needs at least one piece")
            pieces = tuple((float(a), float(b), f) for a, b, f in self.pieces)
            for (a, b, _), (c, _, _) in zip(pieces, pieces[1:]):
                if not math.isclose(b, c, rel_tol=0, abs_tol=1e-12):
                    raise ValueError(f"piecewise gap or overlap between {b} and {c}")
            for a, b, _ in pieces:
                if b <= a:
                    raise ValueError(f"empty piece [{a}, {b}]")
            object.__setattr__(self, "pieces", pieces)

    # -- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "TimeFunction":
        return cls("constant", (value,))

    @classmethod
    def polynomial(cls, *coeffs: float) -> "TimeFunction":
        return cls("polynomial", coeffs)

    @classmethod
    def sinusoid(cls, amp: float, freq: float, phase: float = 0.0) -> "TimeFunction":
        return cls("sinusoid", (amp, freq, phase))

    @classmethod
    def tanh(cls, amp: float, rate: float, offset: float = 0.0) -> "TimeFunction":
        return cls("tanh", (amp, rate, offset))

    @classmethod
    def table(cls, times, values) -> "TimeFunction":
        times, values = list(times), list(values)
        if len(times) != len(values):
            raise ValueError("table times and values differ in length")
        return cls("table", tuple(times) + tuple(values))

    @classmethod
    def piecewise(cls, pieces) -> "TimeFunction":
        return cls("piecewise", (), tuple(pieces))

    # -- evaluation ----------------------------------------------------------

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "table":
            n = len(self.params) // 2
            return self.params[0], self.params[n - 1]
        if self.kind == "piecewise":
            return self.pieces[0][0], self.pieces[-1][1]
        return 0.0, math.inf

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "polynomial":
            return all(c == 0 for c in self.params[1:])
        if self.kind in ("sinusoid", "tanh"):
            return self.params[0] == 0 or self.params[1] == 0
        if self.kind == "table":
            n = len(self.params) // 2
            return len(set(self.params[n:])) == 1
        return all(f.is_constant for _, _, f in self.pieces) and len(
            {f(0.5 * (a + b)) for a, b, f in self.pieces}
        ) == 1

    def breakpoints(self) -> tuple[float, ...]:
        if self.kind == "table":
            return self.params[: len(self.params) // 2]
        if self.kind == "piecewise":
            pts = {self.pieces[0][0]}
            for a, b, f in self.pieces:
                pts.add(b)
                pts.update(p for p in f.breakpoints() if a < p < b)
            return tuple(sorted(pts))
        return ()

    def __call__(self, s: float) -> float:
        lo, hi = self.domain
        slack = 1e-12 * max(1.0, abs(hi) if math.isfinite(hi) else 1.0)
        if s < lo - slack or s > hi + slack:
            raise TimeDomainError(f"time {s} outside domain [{lo}, {hi}]")
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "polynomial":
            return float(np.polynomial.polynomial.polyval(s, p))
        if self.kind == "sinusoid":
            return p[0] * math.sin(p[1] * s + p[2])
        if self.kind == "tanh":
            return p[0] * math.tanh(p[1] * (s - p[2]))
        if self.kind == "table":
            n = len(p) // 2
            return float(np.interp(s, p[:n], p[n:]))
        for a, b, f in self.pieces:
            if s < b:
                return f(min(max(s, a), b))
        a, b, f = self.pieces[-1]
        return f(b)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        p = self.params
        if self.kind == "constant":
            return {"kind": "constant", "params": {"value": p[0]}}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "params": {"coeffs": list(p)}}
        if self.kind == "sinusoid":
            return {"kind": "sinusoid", "params": {"amp": p[0], "freq": p[1], "phase": p[2]}}
        if self.kind == "tanh":
            return {"kind": "tanh", "params": {"amp": p[0], "rate": p[1], "offset": p[2]}}
        if self.kind == "table":
            n = len(p) // 2
            return {"kind": "table", "params": {"times": list(p[:n]), "values": list(p[n:])}}
        return {
            "kind": "piecewise",
            "params": {
                "pieces": [{"start": a, "end": b, "fn": f.to_dict()} for a, b, f in self.pieces]
            },
        }

    @classmethod
    def from_dict(cls, desc: dict[str, Any]) -> "TimeFunction":
        kind = desc["kind"]
        p = desc.get("params", {})
        if kind == "constant":
            return cls.constant(p["value"])
        if kind == "polynomial":
            return cls.polynomial(*p["coeffs"])
        if kind == "sinusoid":
            return cls.sinusoid(p["amp"], p["freq"], p.get("phase", 0.0))
        if kind == "tanh":
            return cls.tanh(p["amp"], p["rate"], p.get("offset", 0.0))
        if kind == "table":
            return cls.table(p["times"], p["values"])
        if kind == "piecewise":
            return cls.piecewise(
                [(q["start"], q["end"], cls.from_dict(q["fn"])) for q in p["pieces"]]
            )
        raise ValueError(f"unknown time-function kind {kind!r}")


ONE = TimeFunction.constant(1.0)
