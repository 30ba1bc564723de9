"""Descent through a tilted wiggly landscape and its homogenized limits.

The driving energy is W(y) + T*y: a linear slope T decorated with a
1-periodic even wiggle W whose derivative is bounded by one.  Each implicit
step minimizes W(y) + T*y + (a_n*gamma/2)(y - y_prev)^2, so gamma plays the
role of a reciprocal time step in the rescaled variables.  The long-run
descent rate exists for periodic weight schedules; below a slope threshold
the wiggle traps the motion entirely.

Two classical limits bracket the discrete behavior: removing the wiggle
scale first gives the plain slope -T/a*, removing the time scale first
caps the speed by the harmonic mean of the tilted slope over one period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import (
    BifurcationError,
    DivergedError,
    IncreaseTMaxError,
    NearSingularError,
    UnsupportedScheduleError,
)
from .perturbation import PerturbationSchedule
from .scheme import TIE_RTOL

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PotentialSpec:
    """1-periodic even wiggle with unit derivative bound and zero mean.

    w and dw must accept scalars and numpy arrays.  lip_dw bounds the
    derivative's Lipschitz constant; it fixes the grid spacing of the
    stationary-point search, so an overestimate is safe and an
    underestimate is not.  w_scalar/dw_scalar are optional float-to-float
    twins for the step solver's bisection loop, which is too hot for array
    dispatch; when absent the array callables are wrapped.
    """

    w: Callable
    dw: Callable
    lip_dw: float
    kind: str = "custom"
    w_scalar: Callable | None = None
    dw_scalar: Callable | None = None

    def __post_init__(self):
        if self.w_scalar is None:
            object.__setattr__(self, "w_scalar", lambda s: float(self.w(s)))
        if self.dw_scalar is None:
            object.__setattr__(self, "dw_scalar", lambda s: float(self.dw(s)))
        if not (self.lip_dw > 0 and math.isfinite(self.lip_dw)):
            raise ValueError("lip_dw must be positive and finite")
        grid = np.linspace(0.0, 1.0, 4097)
        peak = float(np.max(np.abs(np.asarray(self.dw(grid), dtype=float))))
        if abs(peak - 1.0) > 1e-6:
            raise ValueError(f"derivative must peak at 1, sampled peak {peak!r}")
        mean, _ = integrate.quad(lambda s: float(self.w(s)), 0.0, 1.0,
                                 epsabs=1e-12, limit=200)
        if abs(mean) > 1e-9:
            raise ValueError(f"wiggle must average to zero, got {mean!r}")
        gap = np.abs(np.asarray(self.w(grid), dtype=float)
                     - np.asarray(self.w(-grid), dtype=float))
        if float(np.max(gap)) > 1e-9:
            raise ValueError("wiggle must be even")

    @classmethod
    def cosine(cls) -> "PotentialSpec":
        """W(s) = -cos(2 pi s)/(2 pi), the wiggle whose derivative is a unit
        sine wave; the fast limit then has the closed form sqrt(T^2 - 1)."""
        return cls(
            w=lambda s: -np.cos(_TWO_PI * np.asarray(s, dtype=float)) / _TWO_PI,
            dw=lambda s: np.sin(_TWO_PI * np.asarray(s, dtype=float)),
            lip_dw=_TWO_PI,
            kind="cosine",
            w_scalar=lambda s: -math.cos(_TWO_PI * s) / _TWO_PI,
            dw_scalar=lambda s: math.sin(_TWO_PI * s),
        )

    @classmethod
    def from_table(cls, values) -> "PotentialSpec":
        """Wiggle interpolated from samples W(i/n), i = 0..n-1, by a periodic
        cubic spline.  The samples must already satisfy the normalization;
        nothing is rescaled here."""
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size < 8:
            raise ValueError("need a flat table of at least 8 samples")
        x = np.linspace(0.0, 1.0, vals.size + 1)
        spline = CubicSpline(x, np.append(vals, vals[0]), bc_type="periodic")
        dspline = spline.derivative()
        curvature = spline.derivative(2)
        grid = np.linspace(0.0, 1.0, 4097)
        lip = float(np.max(np.abs(curvature(grid)))) * 1.05 + 1e-9
        return cls(
            w=lambda s: spline(np.mod(s, 1.0)),
            dw=lambda s: dspline(np.mod(s, 1.0)),
            lip_dw=lip,
            kind="table",
        )


def _default_potential() -> PotentialSpec:
    return PotentialSpec.cosine()


@dataclass(frozen=True)
class WigglyConfig:
    """Slope, scale, weights, and solver knobs for the rescaled descent."""

    T: float
    gamma: float
    schedule: PerturbationSchedule
    y0: float = 0.0
    potential: PotentialSpec = field(default_factory=_default_potential)
    grid_factor: float = 4.0
    refine_tol: float = 1e-12

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("slope T must be positive and finite")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")
        if not self.grid_factor >= 1:
            raise ValueError("grid_factor must be at least 1")
        if not 0 < self.refine_tol <= 1e-6:
            raise ValueError("refine_tol must be in (0, 1e-6]")


def _require_cyclic(schedule: PerturbationSchedule, op: str):
    if schedule.kind == "explicit":
        raise UnsupportedScheduleError(
            f"{op} needs a constant or periodic schedule", kind=schedule.kind
        )


def rescaled_step(y_prev: float, a_n, cfg: WigglyConfig) -> float:
    """Global minimizer of W(y) + T*y + (a_n*gamma/2)(y - y_prev)^2.

    Stationarity bounds the displacement by (|W'| + T)/(a*gamma), giving the
    core window [-(T+1)/(a*gamma), max(0, (1-T)/(a*gamma))] around y_prev.
    Outside the core the derivative keeps one sign, so any positive pad
    certifies the window edges; the pad shrinks like 1/(a*gamma) once that
    product is large, keeping the search grid bounded.  Two minimizers whose
    objectives agree to 1e-12 (relative) are a genuine branch point.
    """
    if not a_n > 0:
        raise ValueError("dissipation weight must be positive")
    ag = float(a_n) * cfg.gamma
    T = cfg.T
    pot = cfg.potential
    pad = min(1.0, 1.0 / ag)
    lo = y_prev - (T + 1.0) / ag - pad
    hi = y_prev + max(0.0, (1.0 - T) / ag) + pad
    spacing = 1.0 / (cfg.grid_factor * (pot.lip_dw + ag))

    # same bracketing scheme as _minimize.windowed_argmin, but with the
    # bisection unrolled over scalars: a velocity run makes ~1e4 of these
    # calls back to back and array dispatch inside the loop dominates it
    n = max(int(math.ceil((hi - lo) / spacing)) + 1, 9)
    grid = np.linspace(lo, hi, n)
    d = np.asarray(pot.dw(grid), dtype=float) + T + ag * (grid - y_prev)
    if not (d[0] < 0.0 < d[-1]):
        raise DivergedError(
            "window edges do not certify an interior minimizer",
            lo=float(lo), hi=float(hi), dlo=float(d[0]), dhi=float(d[-1]),
        )
    idx = np.flatnonzero((d[:-1] < 0.0) & (d[1:] >= 0.0))
    dw_s = pot.dw_scalar
    w_s = pot.w_scalar
    refine = cfg.refine_tol
    xs = []
    for i in idx:
        a_lo = float(grid[i])
        a_hi = float(grid[i + 1])
        width = a_hi - a_lo
        while width > refine:
            mid = 0.5 * (a_lo + a_hi)
            if dw_s(mid) + T + ag * (mid - y_prev) < 0.0:
                a_lo = mid
            else:
                a_hi = mid
            width *= 0.5
        root = 0.5 * (a_lo + a_hi)
        if not xs or root - xs[-1] > 100.0 * refine:
            xs.append(root)
    best = second = None
    best_val = second_val = math.inf
    for x in xs:
        val = w_s(x) + T * x + 0.5 * ag * (x - y_prev) ** 2
        if val < best_val:
            second, second_val = best, best_val
            best, best_val = x, val
        elif val < second_val:
            second, second_val = x, val
    if second is not None and second_val - best_val <= TIE_RTOL * max(1.0, abs(best_val)):
        raise BifurcationError(
            "rescaled step has two global minimizers",
            candidates=tuple(sorted((best, second))),
            slope=float(T),
            weight=float(a_n),
            gamma=float(cfg.gamma),
        )
    return best


def _check_confinement(ys: np.ndarray, tol: float = 1e-9):
    # once a step has landed, no later point may climb past one well above it
    suffix_max = np.maximum.accumulate(ys[::-1])[::-1]
    bad = suffix_max[1:] > ys[:-1] + 1.0 + tol
    if np.any(bad):
        n = int(np.argmax(bad)) + 1
        raise DivergedError(
            "trajectory climbed more than one well above a visited point",
            step=n, value=float(ys[n - 1]),
        )


def rescaled_trajectory(cfg: WigglyConfig, n_steps: int) -> np.ndarray:
    """y_0..y_{n_steps} of the rescaled descent, confinement-checked."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    ys = np.empty(n_steps + 1, dtype=float)
    ys[0] = float(cfg.y0)
    y = float(cfg.y0)
    for n in range(1, n_steps + 1):
        y = rescaled_step(y, cfg.schedule.at(n), cfg)
        ys[n] = y
    _check_confinement(ys)
    return ys


@dataclass(frozen=True)
class VelocityEstimate:
    value: float
    error_bound: float
    burn_in: int
    n_steps: int


def _velocity_from(ys: np.ndarray, period: int) -> VelocityEstimate:
    n_steps = len(ys) - 1
    burn = 100 * period
    span = n_steps - burn
    return VelocityEstimate(
        value=float((ys[burn] - ys[-1]) / span),
        error_bound=2.0 / span,
        burn_in=burn,
        n_steps=n_steps,
    )


def _checked_steps(schedule: PerturbationSchedule, n_steps, op: str) -> int:
    _require_cyclic(schedule, op)
    period = len(schedule.values)
    if n_steps is None:
        n_steps = 10_000 * period
    if n_steps % period != 0:
        raise ValueError("n_steps must be a whole number of periods")
    if n_steps <= 100 * period:
        raise ValueError("n_steps must exceed the 100-period burn-in")
    return int(n_steps)


def homogenized_velocity(cfg: WigglyConfig, n_steps: int | None = None) -> VelocityEstimate:
    """Long-run descent rate (y_burn - y_last)/(last - burn) of the rescaled
    flow, with a 100-period burn-in.

    Between period boundaries the orbit positions of two period blocks can
    differ by at most one well width in each direction, so the estimate
    carries the rigorous error bound 2/(n - burn).  The sign convention makes
    descent positive; a pinned orbit gives a value within the bound of zero.
    """
    n_steps = _checked_steps(cfg.schedule, n_steps, "homogenized_velocity")
    ys = rescaled_trajectory(cfg, n_steps)
    return _velocity_from(ys, len(cfg.schedule.values))


@dataclass(frozen=True)
class ThresholdResult:
    value: float
    tol: float
    probes: int
    probe_steps: int
    total_steps: int


def pinning_threshold(schedule: PerturbationSchedule, gamma, t_max: float = 2.0,
                      tol: float = 1e-3, potential: PotentialSpec | None = None,
                      y0: float = 0.0) -> ThresholdResult:
    """Largest slope that still pins the flow, located by bisection.

    A probe at slope T runs 1000 periods and calls the orbit pinned when the
    total descent stays below one well width (plus 1e-6 slack): a pinned
    orbit cannot leave the well it settles in.  t_max must depin; otherwise
    IncreaseTMaxError asks for a wider bracket.  The returned value is the
    bracket midpoint, so it is within tol/2 of the bisection limit.

    Pinnedness does not depend on the starting point, so a probe whose orbit
    hits an exact two-minimizer configuration is retried from a shifted
    start.  When every retry ties as well, the tie lives on the attractor
    itself, which happens only at the exactly critical slope (the pinned
    equilibrium's step bifurcates there); such a probe short-circuits the
    bisection and is returned as the threshold outright.  Bisection
    midpoints do hit this: a*gamma = 1.2 puts the threshold at exactly 1/2.
    """
    _require_cyclic(schedule, "pinning_threshold")
    if not (t_max > 0 and math.isfinite(t_max)):
        raise ValueError("t_max must be positive and finite")
    if not 0 < tol < 1:
        raise ValueError("tol must be in (0, 1)")
    pot = potential if potential is not None else PotentialSpec.cosine()
    period = len(schedule.values)
    probe_steps = 1000 * period
    probes = 0

    def pinned(T: float) -> bool | None:
        # None means exactly critical: every generic start ran into a tie
        nonlocal probes
        probes += 1
        shift = 0.0
        for _ in range(8):
            cfg = WigglyConfig(T=T, gamma=gamma, schedule=schedule,
                               y0=y0 + shift, potential=pot)
            try:
                ys = rescaled_trajectory(cfg, probe_steps)
            except BifurcationError:
                shift += 0.381966011250105  # irrational-ish, dodges symmetry axes
                continue
            return (ys[0] - ys[-1]) < 1.0 + 1e-6
        return None

    def exact_hit(T: float) -> ThresholdResult:
        return ThresholdResult(value=float(T), tol=tol, probes=probes,
                               probe_steps=probe_steps,
                               total_steps=probes * probe_steps)

    top = pinned(t_max)
    if top is None:
        return exact_hit(t_max)
    if top:
        raise IncreaseTMaxError(
            "flow is still pinned at t_max; enlarge the bracket",
            t_max=float(t_max), gamma=float(gamma), probe_steps=probe_steps,
        )
    lo, hi = 0.0, float(t_max)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        verdict = pinned(mid)
        if verdict is None:
            return exact_hit(mid)
        if verdict:
            lo = mid
        else:
            hi = mid
    return ThresholdResult(value=0.5 * (lo + hi), tol=tol, probes=probes,
                           probe_steps=probe_steps,
                           total_steps=probes * probe_steps)


def fast_limit_velocity(T, potential: PotentialSpec | None = None) -> float:
    """Limit speed when the wiggle scale vanishes before the time scale:
    zero up to unit slope, else the harmonic mean of T + W' over a period.

    The integrand blows up as T drops to 1, so slopes within 1e-9 above 1
    are refused outright, as is any quadrature that cannot certify 1e-6
    relative accuracy.
    """
    T = float(T)
    if not (T > 0 and math.isfinite(T)):
        raise ValueError("T must be positive and finite")
    if T <= 1.0:
        return 0.0
    if T <= 1.0 + 1e-9:
        raise NearSingularError(
            "slope within 1e-9 of the depinning value 1", slope=T,
        )
    pot = potential if potential is not None else PotentialSpec.cosine()
    grid = np.linspace(0.0, 1.0, 2049)
    trough = float(grid[int(np.argmin(np.asarray(pot.dw(grid), dtype=float)))])
    val, err = integrate.quad(lambda s: 1.0 / (T + float(pot.dw(s))),
                              0.0, 1.0, points=(trough,), limit=500,
                              epsabs=0.0, epsrel=1e-9)
    if not math.isfinite(val) or val <= 0.0 or err > 1e-6 * abs(val):
        raise NearSingularError(
            "period integral failed to certify 1e-6 relative accuracy",
            slope=T, estimate=float(val), quad_error=float(err),
        )
    return 1.0 / val


@dataclass(frozen=True)
class FastLimitCurves:
    """Order-of-limits envelope: wiggle removed first vs time scale first."""

    times: np.ndarray
    unwiggled: np.ndarray
    wiggle_limited: np.ndarray
    slope_unwiggled: float
    slope_wiggle_limited: float


def fast_limit_curves(T, schedule: PerturbationSchedule, u0, horizon,
                      potential: PotentialSpec | None = None,
                      samples: int = 257) -> FastLimitCurves:
    """Both limit curves from u0 on a uniform grid over [0, horizon]:
    slope -T/a* with the wiggle removed first, slope -f(T)/a* with the time
    scale removed first."""
    _require_cyclic(schedule, "fast_limit_curves")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    a_star = float(schedule.harmonic_limit())
    f = fast_limit_velocity(T, potential)
    ts = np.linspace(0.0, float(horizon), samples)
    return FastLimitCurves(
        times=ts,
        unwiggled=float(u0) - float(T) * ts / a_star,
        wiggle_limited=float(u0) - f * ts / a_star,
        slope_unwiggled=-float(T) / a_star,
        slope_wiggle_limited=-f / a_star,
    )


@dataclass(frozen=True)
class LimitMotion:
    """Affine limit of the unrescaled motion plus the discrete trajectory
    it was measured from, at reference scales tau and eps = gamma*tau."""

    slope: float
    intercept: float
    velocity: VelocityEstimate
    times: np.ndarray
    trajectory: np.ndarray
    tau: float
    eps: float


def limit_motion(cfg: WigglyConfig, horizon, n_steps: int | None = None) -> LimitMotion:
    """Limit line u(t) = u0 - gamma*f*t over [0, horizon], measured from one
    rescaled run; the run itself is emitted unrescaled (u_n = eps*y_n at
    tau = horizon/n_steps) for comparison against the line."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    n_steps = _checked_steps(cfg.schedule, n_steps, "limit_motion")
    ys = rescaled_trajectory(cfg, n_steps)
    v = _velocity_from(ys, len(cfg.schedule.values))
    tau = float(horizon) / n_steps
    eps = cfg.gamma * tau
    return LimitMotion(
        slope=-cfg.gamma * v.value,
        intercept=eps * cfg.y0,
        velocity=v,
        times=tau * np.arange(n_steps + 1),
        trajectory=eps * ys,
        tau=tau,
        eps=eps,
    )
