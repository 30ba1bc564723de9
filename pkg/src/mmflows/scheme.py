"""Implicit descent steps with step-dependent dissipation weights.

The n-th step from u_{n-1} solves

    u_n in argmin { phi(u) + a_n * (u - u_{n-1})^2 / (2 tau) }

over the energy's domain, with the weight a_n drawn from a perturbation
schedule.  Domains are either the whole real line or a one-dimensional
lattice eps*(p*Z + residues); energies declare a slope bound S0 so the
search window [u_prev - 2*S0*tau/a, u_prev + 2*S0*tau/a] (padded by one
pattern cell on lattices) provably contains every global minimizer: any
point beyond it raises the objective by the energy-comparison estimate
a*d^2/(2 tau) - S0*d > 0.

The discrete energy identity is checked by ``energy_balance``: summing the
kinetic terms a_n*(u_n - u_{n-1})^2/(2 tau) and the variational-slope
integrals reproduces the total energy drop exactly for exact minimizers,
so the quadrature residual measures solver quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._minimize import windowed_argmin
from .errors import BifurcationError, DivergedError
from .perturbation import PerturbationSchedule

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class RealLine:
    """Unconstrained scalar domain."""


@dataclass(frozen=True)
class ResidueLattice:
    """Points eps*(p*k + r) for integer k and residues r in [0, p)."""

    eps: float
    p: int = 1
    residues: tuple = (0,)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("lattice spacing must be positive")
        if self.p < 1:
            raise ValueError("pattern period must be >= 1")
        res = tuple(sorted(set(int(r) for r in self.residues)))
        if not res:
            raise ValueError("need at least one residue")
        if res[0] < 0 or res[-1] >= self.p:
            raise ValueError(f"residues must lie in [0, {self.p})")
        object.__setattr__(self, "residues", res)

    def index_of(self, u: float) -> int:
        """Integer index of an on-lattice point; rejects off-lattice input."""
        x = u / self.eps
        m = round(x)
        if abs(x - m) > 1e-9 * max(1.0, abs(x)):
            raise ValueError(f"{u!r} is not on the eps={self.eps} lattice")
        if (m % self.p) not in self.residues:
            raise ValueError(f"{u!r} is not an admissible residue of the pattern")
        return m


@dataclass(frozen=True)
class EnergySpec:
    """Driving energy with the metadata the step solver needs.

    evaluate/derivative must be vectorized (accept ndarray input).
    slope_bound is a bound on |phi'| valid on the region the trajectory can
    reach; curvature_bound is a Lipschitz constant for phi' and is required
    (with the derivative) on continuous domains, where the grid spacing of
    the stationary-point search depends on it.
    """

    evaluate: Callable
    domain: object
    slope_bound: float
    derivative: Callable | None = None
    curvature_bound: float | None = None
    label: str = "energy"

    def __post_init__(self):
        if not (self.slope_bound > 0 and math.isfinite(self.slope_bound)):
            raise ValueError("slope bound must be positive and finite")
        if isinstance(self.domain, RealLine):
            if self.derivative is None or self.curvature_bound is None:
                raise ValueError("continuous domains need derivative and curvature_bound")


def linear_descent(eps: float, p: int = 1, residues=(0,)) -> EnergySpec:
    """phi(u) = -u restricted to the lattice eps*(p*Z + residues)."""
    return EnergySpec(
        evaluate=lambda u: -np.asarray(u, dtype=float),
        domain=ResidueLattice(eps, p, tuple(residues)),
        slope_bound=1.0,
        label="linear-descent",
    )


def quadratic_well(radius: float) -> EnergySpec:
    """phi(u) = u^2/2 on the line; slope bound valid while |u| <= radius."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    return EnergySpec(
        evaluate=lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
        domain=RealLine(),
        slope_bound=float(radius),
        derivative=lambda u: np.asarray(u, dtype=float),
        curvature_bound=1.0,
        label="quadratic-well",
    )


@dataclass(frozen=True)
class StepResult:
    minimizer: float
    objective: float
    tie_with: float | None = None


def euler_step(energy: EnergySpec, u_prev: float, a_n, tau: float, tie_rtol: float = TIE_RTOL) -> StepResult:
    """One implicit step; reports both minimizers when the problem ties."""
    if not tau > 0:
        raise ValueError("time step must be positive")
    if not a_n > 0:
        raise ValueError("dissipation weight must be positive")
    a_n = float(a_n)
    if isinstance(energy.domain, ResidueLattice):
        return _lattice_step(energy, u_prev, a_n, tau, tie_rtol)
    return _continuous_step(energy, u_prev, a_n, tau, tie_rtol)


def _lattice_step(energy, u_prev, a_n, tau, tie_rtol):
    dom: ResidueLattice = energy.domain
    m0 = dom.index_of(u_prev)
    radius = 2.0 * energy.slope_bound * tau / a_n + dom.eps * dom.p
    jmax = int(math.floor(radius / dom.eps))
    offsets = np.arange(-jmax, jmax + 1)
    admissible = np.isin((m0 + offsets) % dom.p, dom.residues)
    offsets = offsets[admissible]
    if offsets.size == 0:
        raise DivergedError("no admissible lattice point in the search window", u_prev=u_prev)
    # displacement eps*j is exact by construction, so the quadratic term is
    # computed from it rather than from a cancelled float difference
    disp = dom.eps * offsets
    cand = u_prev + disp
    obj = np.asarray(energy.evaluate(cand), dtype=float) + a_n * disp**2 / (2.0 * tau)
    order = np.argsort(obj, kind="stable")
    best = order[0]
    if offsets[best] in (offsets[0], offsets[-1]) and offsets.size > 2:
        raise DivergedError(
            "minimizer on the search-window boundary; slope bound too small "
            "or objective unbounded below",
            u_prev=u_prev,
            candidate=float(cand[best]),
        )
    if order.size > 1:
        second = order[1]
        if obj[second] - obj[best] <= tie_rtol * max(1.0, abs(obj[best])):
            lo, hi = sorted((float(cand[best]), float(cand[second])))
            return StepResult(minimizer=lo, objective=float(obj[best]), tie_with=hi)
    return StepResult(minimizer=float(cand[best]), objective=float(obj[best]))


def _continuous_step(energy, u_prev, a_n, tau, tie_rtol):
    radius = 2.0 * energy.slope_bound * tau / a_n
    lo, hi = u_prev - radius, u_prev + radius
    scale = a_n / tau

    def psi(u):
        d = np.asarray(u, dtype=float) - u_prev
        return np.asarray(energy.evaluate(u), dtype=float) + 0.5 * scale * d * d

    def dpsi(u):
        return np.asarray(energy.derivative(u), dtype=float) + scale * (np.asarray(u, dtype=float) - u_prev)

    spacing = 1.0 / (4.0 * (energy.curvature_bound + scale))
    xs, vals = windowed_argmin(psi, dpsi, lo, hi, spacing)
    if xs.size > 1 and vals[1] - vals[0] <= tie_rtol * max(1.0, abs(vals[0])):
        a, b = sorted((float(xs[0]), float(xs[1])))
        return StepResult(minimizer=a, objective=float(vals[0]), tie_with=b)
    return StepResult(minimizer=float(xs[0]), objective=float(vals[0]))


def steps_for_horizon(horizon: float, tau: float) -> int:
    """Number of steps covering [0, horizon]: ceil(horizon/tau) with a guard
    against float noise promoting an exact multiple to an extra step."""
    if not horizon > 0 or not tau > 0:
        raise ValueError("horizon and time step must be positive")
    r = horizon / tau
    n = math.floor(r)
    if r - n > 1e-9 * max(1.0, r):
        n += 1
    return max(n, 1)


@dataclass(frozen=True)
class Trajectory:
    """Discrete trajectory u_0..u_M on the uniform mesh of size tau."""

    tau: float
    values: np.ndarray
    schedule: PerturbationSchedule
    tie_events: tuple = ()
    energy_label: str = "energy"

    @property
    def steps(self) -> int:
        return len(self.values) - 1

    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.values))

    def increments(self) -> np.ndarray:
        """|u_n - u_{n-1}| / tau for n = 1..M."""
        return np.abs(np.diff(self.values)) / self.tau

    def value_at(self, t: float) -> float:
        """Piecewise-constant sample u_{ceil(t/tau)} (u_0 for t <= 0)."""
        if t <= 0:
            return float(self.values[0])
        n = min(math.ceil(t / self.tau), self.steps)
        return float(self.values[n])


def run_scheme(
    energy: EnergySpec,
    u0: float,
    schedule: PerturbationSchedule,
    tau: float,
    horizon: float,
    tie_policy: str = "error",
    n_steps: int | None = None,
) -> Trajectory:
    """Iterate the implicit step over [0, horizon] (or exactly n_steps)."""
    if tie_policy not in ("error", "lower", "upper"):
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    if isinstance(energy.domain, ResidueLattice):
        energy.domain.index_of(u0)  # validates admissibility
    m = n_steps if n_steps is not None else steps_for_horizon(horizon, tau)
    values = np.empty(m + 1)
    values[0] = u0
    ties = []
    u = float(u0)
    for n in range(1, m + 1):
        step = euler_step(energy, u, schedule.at(n), tau)
        if step.tie_with is not None:
            if tie_policy == "error":
                raise BifurcationError(
                    f"step {n} has two global minimizers",
                    step=n,
                    candidates=(step.minimizer, step.tie_with),
                )
            chosen = step.minimizer if tie_policy == "lower" else step.tie_with
            ties.append((n, chosen, step.tie_with if tie_policy == "lower" else step.minimizer))
            u = chosen
        else:
            u = step.minimizer
        values[n] = u
    return Trajectory(
        tau=tau,
        values=values,
        schedule=schedule,
        tie_events=tuple(ties),
        energy_label=energy.label,
    )


@dataclass(frozen=True)
class BalanceReport:
    flow_term: float
    slope_term: float
    energy_drop: float
    residual: float
    quadrature_points: int
    panels: int


def energy_balance(energy: EnergySpec, traj: Trajectory, quadrature_points: int = 64) -> BalanceReport:
    """Check the discrete energy identity along a trajectory.

    flow term:  sum_n a_n (u_n - u_{n-1})^2 / (2 tau)
    slope term: sum_n (1/(2 a_n)) * integral_0^tau G_n(s)^2 ds, where G_n(s)
    is a_n/s times the distance from u_{n-1} to the minimizer of the step
    problem rerun at scale s.  For exact minimizers the two terms add up to
    the total energy drop; the reported residual is the relative mismatch.

    The minimizer path s -> u~(s) has jump discontinuities wherever the
    global minimum hops between wells, so each step's integral is evaluated
    with Gauss-Legendre panels split at jump locations found by bisection.
    """
    if quadrature_points < 2:
        raise ValueError("need at least two quadrature points")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_points)
    tau = traj.tau
    flow = 0.0
    slope = 0.0
    panels_total = 0
    for n in range(1, traj.steps + 1):
        a_n = float(traj.schedule.at(n))
        u_prev = float(traj.values[n - 1])
        du = float(traj.values[n]) - u_prev

        def interp(s: float) -> float:
            try:
                step = euler_step(energy, u_prev, a_n, s)
            except BifurcationError as exc:
                raise BifurcationError(
                    f"quadrature minimization tied at step {n}, scale {s}",
                    step=n,
                    scale=s,
                    **exc.context,
                ) from exc
            return step.minimizer

        flow += a_n * du * du / (2.0 * tau)
        cuts = _jump_locations(interp, u_prev, tau)
        edges = [0.0, *cuts, tau]
        for left, right in zip(edges[:-1], edges[1:]):
            if right - left <= 1e-12 * tau:
                continue
            panels_total += 1
            half = 0.5 * (right - left)
            mid = 0.5 * (right + left)
            for x, w in zip(nodes, weights):
                s = mid + half * x
                d = abs(interp(s) - u_prev)
                g = a_n * d / s
                slope += w * half * g * g / (2.0 * a_n)
    drop = float(energy.evaluate(traj.values[0])) - float(energy.evaluate(traj.values[-1]))
    residual = abs(flow + slope - drop) / max(1.0, abs(drop))
    return BalanceReport(
        flow_term=flow,
        slope_term=slope,
        energy_drop=drop,
        residual=residual,
        quadrature_points=quadrature_points,
        panels=panels_total,
    )


def _jump_locations(interp, u_prev: float, tau: float, probes: int = 64) -> list:
    """Locate discontinuities of the scale-s minimizer path on (0, tau].

    Uniform probing flags cells whose increment is an outlier against the
    median drift, then bisection narrows each flagged cell; the returned cut
    points become quadrature panel edges, so no node ever sits on a tie.
    """
    ss = np.linspace(tau / probes, tau, probes)
    us = np.array([interp(s) for s in ss])
    all_s = np.concatenate(([0.0], ss))
    all_u = np.concatenate(([u_prev], us))
    gaps = np.abs(np.diff(all_u))
    floor = max(6.0 * float(np.median(gaps)), 1e-8 * max(1.0, abs(u_prev)))
    cuts: list = []

    def split(sa, ua, sb, ub, depth):
        if sb - sa <= 1e-11 * tau or depth > 64:
            cuts.append(0.5 * (sa + sb))
            return
        sm = 0.5 * (sa + sb)
        um = interp(sm)
        if abs(um - ua) > floor:
            split(sa, ua, sm, um, depth + 1)
        if abs(ub - um) > floor:
            split(sm, um, sb, ub, depth + 1)

    for i in np.flatnonzero(gaps > floor):
        sa = max(all_s[i], 1e-12 * tau)
        split(sa, all_u[i], all_s[i + 1], all_u[i + 1], 0)
    return sorted(cuts)
