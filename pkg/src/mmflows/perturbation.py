"""Step-dependent dissipation coefficients and their time interpolation.

A schedule assigns a positive weight to every step index n >= 1.  Three kinds
are supported: a constant weight, a periodic cycle, and an explicit prefix
followed by a constant tail.  The piecewise-constant interpolation on a time
grid of mesh tau takes the value of step ceil(t/tau) on each interval
((n-1)*tau, n*tau], and the long-run average of the reciprocals is what the
limit motions see (harmonic mean over one period).

Values may be ints, floats or fractions.Fraction; arithmetic stays exact when
exact inputs are supplied, which the descent modules rely on for detecting
jump points of floor expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import UnsupportedScheduleError

_KINDS = ("constant", "periodic", "explicit")


def _check_values(values) -> tuple:
    vals = tuple(values)
    if not vals:
        raise ValueError("schedule needs at least one value")
    for v in vals:
        if not (v > 0 and (not isinstance(v, float) or math.isfinite(v))):
            raise ValueError(f"schedule values must be positive and finite, got {v!r}")
    return vals


@dataclass(frozen=True)
class PerturbationSchedule:
    """Positive dissipation weights a_n indexed by step number (1-based)."""

    kind: str
    values: tuple
    tail: object = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "values", _check_values(self.values))
        if self.kind == "constant" and len(self.values) != 1:
            raise ValueError("constant schedule takes exactly one value")
        if self.kind == "explicit":
            if self.tail is None or not self.tail > 0:
                raise ValueError("explicit schedule needs a positive tail value")

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value) -> "PerturbationSchedule":
        return cls("constant", (value,))

    @classmethod
    def periodic(cls, values) -> "PerturbationSchedule":
        return cls("periodic", tuple(values))

    @classmethod
    def explicit(cls, values, tail) -> "PerturbationSchedule":
        return cls("explicit", tuple(values), tail)

    # -- pointwise access ----------------------------------------------

    @property
    def period(self) -> int:
        """Cycle length N (1 for constant; prefix length for explicit)."""
        return len(self.values)

    def at(self, n: int):
        """Weight of step n, n >= 1."""
        if n < 1:
            raise ValueError(f"step index must be >= 1, got {n}")
        if self.kind == "periodic":
            return self.values[(n - 1) % len(self.values)]
        if self.kind == "explicit" and n > len(self.values):
            return self.tail
        if self.kind == "constant":
            return self.values[0]
        return self.values[n - 1]

    def interpolate(self, t, tau):
        """Piecewise-constant value at time t > 0 on the mesh of size tau.

        Right edge included: the value on ((n-1)*tau, n*tau] is the weight of
        step n, so t = n*tau maps to step n exactly.
        """
        if not t > 0:
            raise ValueError("interpolation time must be positive")
        if not tau > 0:
            raise ValueError("mesh size must be positive")
        return self.at(math.ceil(t / tau))

    # -- aggregates ----------------------------------------------------

    def harmonic_limit(self):
        """Weak-* limit of the reciprocals: N / sum(1/a_i) over one cycle.

        Exact when the values are exact (int/Fraction).  Explicit schedules
        have no single averaged limit, so they are rejected.
        """
        if self.kind == "explicit":
            raise UnsupportedScheduleError(
                "harmonic limit is undefined for explicit schedules", kind=self.kind
            )
        recip = sum(_reciprocal(v) for v in self.values)
        return len(self.values) / recip if isinstance(recip, float) else Fraction(len(self.values)) / recip

    def min_alpha(self):
        """Smallest weight the schedule ever takes."""
        lo = min(self.values)
        if self.kind == "explicit":
            lo = min(lo, self.tail)
        return lo

    def max_beta(self):
        """Largest weight the schedule ever takes."""
        hi = max(self.values)
        if self.kind == "explicit":
            hi = max(hi, self.tail)
        return hi

    def reciprocal_partial_mean(self, m: int):
        """(1/m) * sum_{n=1..m} 1/a_n, computed by cycle decomposition (exact)."""
        if m < 1:
            raise ValueError("need at least one step")
        if self.kind == "constant":
            return _reciprocal(self.values[0])
        if self.kind == "periodic":
            q, r = divmod(m, len(self.values))
            total = q * sum(_reciprocal(v) for v in self.values)
            total += sum(_reciprocal(v) for v in self.values[:r])
            return total / m
        head = min(m, len(self.values))
        total = sum(_reciprocal(v) for v in self.values[:head])
        total += (m - head) * _reciprocal(self.tail)
        return total / m

    def reciprocal_integral(self, s, t, tau):
        """Exact integral of the interpolated reciprocal over [s, t]."""
        if not (0 <= s <= t):
            raise ValueError("need 0 <= s <= t")
        if not tau > 0:
            raise ValueError("mesh size must be positive")
        total = 0.0
        n = math.floor(s / tau) + 1
        while (n - 1) * tau < t:
            lo = max(s, (n - 1) * tau)
            hi = min(t, n * tau)
            if hi > lo:
                total += (hi - lo) / self.at(n)
            n += 1
        return total

    def theta_modulus(self, s, t, tau_samples):
        """Largest sqrt-integral of the interpolated reciprocal over [s, t].

        The maximum runs over the supplied mesh sizes; with weights bounded
        below by alpha the result is at most sqrt((t-s)/alpha) regardless of
        the mesh, which is the modulus the limit trajectories inherit.
        """
        taus = list(tau_samples)
        if not taus:
            raise ValueError("need at least one mesh size")
        return max(math.sqrt(self.reciprocal_integral(s, t, tau)) for tau in taus)

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        out = {"kind": self.kind, "values": [_num_to_json(v) for v in self.values]}
        if self.kind == "constant":
            out = {"kind": "constant", "value": _num_to_json(self.values[0])}
        if self.kind == "explicit":
            out["tail"] = _num_to_json(self.tail)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PerturbationSchedule":
        if not isinstance(data, dict):
            raise ValueError("schedule descriptor must be an object")
        kind = data.get("kind")
        if kind == "constant":
            _reject_unknown(data, {"kind", "value"})
            return cls.constant(_num_from_json(data.get("value")))
        if kind == "periodic":
            _reject_unknown(data, {"kind", "values"})
            vals = data.get("values")
            if not isinstance(vals, list):
                raise ValueError("periodic schedule needs a 'values' list")
            return cls.periodic([_num_from_json(v) for v in vals])
        if kind == "explicit":
            _reject_unknown(data, {"kind", "values", "tail"})
            vals = data.get("values")
            if not isinstance(vals, list):
                raise ValueError("explicit schedule needs a 'values' list")
            return cls.explicit([_num_from_json(v) for v in vals], _num_from_json(data.get("tail")))
        raise ValueError(f"unknown schedule kind {kind!r}")


def _reciprocal(v):
    if isinstance(v, float):
        return 1.0 / v
    return Fraction(1, 1) / v


def _num_to_json(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


def _num_from_json(v):
    if isinstance(v, bool) or v is None:
        raise ValueError(f"not a number: {v!r}")
    if isinstance(v, str):
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse rational {v!r}") from exc
    if isinstance(v, (int, float)):
        return v
    raise ValueError(f"not a number: {v!r}")


def _reject_unknown(data: dict, allowed: set):
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown schedule keys: {sorted(unknown)}")
