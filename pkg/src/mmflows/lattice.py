"""Closed-form descent for the linear energy phi(u) = -u on scaled lattices.

The implicit step

    u_n = argmin { -u + a_n (u - u_{n-1})^2 / (2 tau) : u admissible }

has an explicit solution: the unconstrained minimizer sits tau/a_n to the
right of u_{n-1}, which is 1/(a_n * gamma) cells of size eps = gamma * tau,
and the constrained step snaps that target to the nearest admissible cell.
Everything here exploits the closed form; scheme.euler_step recomputes the
same steps by enumeration and acts as the oracle in the test suite.

Cell counts depend on (gamma, a_n) only, so the analysis helpers
(velocities, bifurcation values, pinning measure) never see tau; it enters
through the time axis alone.  Functions that admit exact evaluation return
Fraction when gamma and the weights are int or Fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BifurcationError, NoCycleError, UnsupportedScheduleError
from .perturbation import PerturbationSchedule
from .scheme import ResidueLattice, Trajectory, steps_for_horizon

BIFURCATION_RTOL = 1e-9


@dataclass(frozen=True)
class ResiduePattern:
    """Admissible cells modulo p: the flow lives on eps*(p*k + r), r in residues."""

    p: int = 1
    residues: tuple = (0,)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("pattern period must be >= 1")
        res = tuple(sorted(set(int(r) for r in self.residues)))
        if not res:
            raise ValueError("need at least one residue")
        if res[0] < 0 or res[-1] >= self.p:
            raise ValueError(f"residues must lie in [0, {self.p})")
        object.__setattr__(self, "residues", res)

    @property
    def is_full(self) -> bool:
        return self.p == 1


FULL_LATTICE = ResiduePattern()


@dataclass(frozen=True)
class LatticeFlowConfig:
    """Descent run parameters.

    The cell size eps = gamma*tau is derived, never stored, so gamma and tau
    vary independently in scaling studies.  u0 must lie on the admissible
    lattice.
    """

    gamma: float
    tau: float
    schedule: PerturbationSchedule
    u0: float = 0.0
    horizon: float = 1.0
    pattern: ResiduePattern = FULL_LATTICE

    def __post_init__(self):
        for name in ("gamma", "tau", "horizon"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
        self.initial_index()

    @property
    def eps(self):
        return self.gamma * self.tau

    def initial_index(self) -> int:
        """Cell index of u0; rejects initial data off the admissible lattice."""
        lattice = ResidueLattice(float(self.eps), self.pattern.p, self.pattern.residues)
        return lattice.index_of(float(self.u0))


def _exact(*values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def descent_offset(a, gamma):
    """Rightward drift of one step in cell units: 1/(a*gamma).

    Fraction-exact when both inputs are int or Fraction, float otherwise.
    """
    if _exact(a, gamma):
        return 1 / (Fraction(a) * Fraction(gamma))
    return 1.0 / (float(a) * float(gamma))


def _nearest_admissible(x, r0, pattern, rtol=BIFURCATION_RTOL):
    """Admissible displacement (in cells) nearest to the target x.

    r0 is the residue class of the current cell; a displacement j is
    admissible when (r0 + j) mod p stays in the pattern.  The window of
    width p around the bracketing integers contains the nearest admissible
    point on each side of x, so searching it is exhaustive.  Returns
    (j, tie): tie is the runner-up when it sits at the same distance
    (exactly for Fraction targets, within rtol relative for floats).
    """
    p = pattern.p
    allowed = pattern.residues
    base = math.floor(x)
    best_j = best_d = None
    second_j = second_d = None
    for j in range(base - p, base + p + 1):
        if ((r0 + j) % p) not in allowed:
            continue
        d = abs(j - x)
        if best_d is None or d < best_d:
            second_j, second_d = best_j, best_d
            best_j, best_d = j, d
        elif second_d is None or d < second_d:
            second_j, second_d = j, d
    if second_d is not None:
        if isinstance(x, Fraction):
            tied = second_d == best_d
        else:
            tied = (second_d - best_d) <= rtol * max(1.0, abs(x))
        if tied:
            return best_j, second_j
    return best_j, None


def _require_cyclic(schedule: PerturbationSchedule, op: str):
    if schedule.kind == "explicit":
        raise UnsupportedScheduleError(
            f"{op} needs a constant or periodic schedule", kind=schedule.kind
        )


def lattice_step(u_prev, a_n, cfg: LatticeFlowConfig):
    """One closed-form step from the admissible point u_prev.

    Full lattice: u_prev + eps * nearest_integer(1/(a_n*gamma)).  Residue
    patterns: the admissible point nearest to the unconstrained target
    u_prev + tau/a_n, which is the vertex of the step's quadratic.  Two
    equidistant candidates mean the minimizer is not unique; the error
    carries both points.
    """
    if not a_n > 0:
        raise ValueError("dissipation weight must be positive")
    eps = float(cfg.eps)
    lattice = ResidueLattice(eps, cfg.pattern.p, cfg.pattern.residues)
    m = lattice.index_of(u_prev)
    x = descent_offset(a_n, cfg.gamma)
    j, tie = _nearest_admissible(x, m % cfg.pattern.p, cfg.pattern)
    if tie is not None:
        lo, hi = sorted((u_prev + eps * j, u_prev + eps * tie))
        raise BifurcationError(
            "descent step ties between two admissible points",
            candidates=(lo, hi),
            weight=float(a_n),
            gamma=float(cfg.gamma),
        )
    return u_prev + eps * j


def run_lattice_flow(cfg: LatticeFlowConfig) -> Trajectory:
    """Trajectory of the closed-form descent from cfg.u0 over [0, horizon].

    Cell counts are resolved once per (weight, residue class) and the values
    accumulate u += eps*count, the same float expression the enumeration
    solver produces, so the two agree bit for bit.
    """
    n_steps = steps_for_horizon(cfg.horizon, cfg.tau)
    eps = float(cfg.eps)
    pattern = cfg.pattern
    m = cfg.initial_index()
    u = float(cfg.u0)
    values = [u]
    cache = {}
    for n in range(1, n_steps + 1):
        a = cfg.schedule.at(n)
        key = (a, m % pattern.p)
        hit = cache.get(key)
        if hit is None:
            x = descent_offset(a, cfg.gamma)
            hit = _nearest_admissible(x, m % pattern.p, pattern)
            cache[key] = hit
        j, tie = hit
        if tie is not None:
            lo, hi = sorted((u + eps * j, u + eps * tie))
            raise BifurcationError(
                "descent step ties between two admissible points",
                step=n,
                candidates=(lo, hi),
                weight=float(a),
                gamma=float(cfg.gamma),
            )
        m += j
        u = u + eps * j
        values.append(u)
    return Trajectory(
        tau=float(cfg.tau),
        values=np.asarray(values, dtype=float),
        schedule=cfg.schedule,
        tie_events=(),
        energy_label="linear-descent",
    )


def effective_velocity(schedule: PerturbationSchedule, gamma):
    """Velocity of the limit motion on the full lattice.

    gamma times the per-period mean of the cell counts
    nearest_integer(1/(a_i*gamma)); exact when gamma and the weights are
    rational types.  When gamma sits on a bifurcation some count is
    ambiguous and the error lists the offending (weight position, jump
    index) pairs, both 1-based: jump index j marks gamma = 2/((2j-1)*a_i).
    """
    _require_cyclic(schedule, "effective_velocity")
    counts = []
    offenders = []
    for i, a in enumerate(schedule.values, start=1):
        x = descent_offset(a, gamma)
        j, tie = _nearest_admissible(x, 0, FULL_LATTICE)
        if tie is None:
            counts.append(j)
        else:
            offenders.append((i, max(j, tie)))
    if offenders:
        raise BifurcationError(
            "gamma sits on a bifurcation of the cell count",
            gamma=float(gamma),
            offenders=offenders,
        )
    total = sum(counts)
    n = len(counts)
    if _exact(gamma):
        return Fraction(gamma) * Fraction(total, n)
    return float(gamma) * (total / n)


def bifurcation_values(schedule: PerturbationSchedule, j_max: int):
    """Every gamma where some per-weight cell count jumps.

    The count for weight a steps at gamma = 2/((2j-1)*a); collecting
    j = 1..j_max over the period, deduplicated, sorted descending.
    """
    _require_cyclic(schedule, "bifurcation_values")
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    exact = _exact(*schedule.values)
    vals = set()
    for a in schedule.values:
        for j in range(1, j_max + 1):
            q = 2 * j - 1
            if exact:
                vals.add(2 / (q * Fraction(a)))
            else:
                vals.add(2.0 / (q * float(a)))
    out = sorted(vals, reverse=True)
    if not exact:
        out = _collapse_close(out)
    return out


def _collapse_close(sorted_vals, rtol=1e-12):
    kept = []
    for v in sorted_vals:
        if kept and abs(kept[-1] - v) <= rtol * max(1.0, abs(v)):
            continue
        kept.append(v)
    return kept


@dataclass(frozen=True)
class SupVelocity:
    """Largest limit velocity and the gamma where it is approached from below."""

    value: float
    gamma: float


def sup_velocity(alpha, beta) -> SupVelocity:
    """Largest velocity over gamma for the alternating schedule [alpha, beta].

    The velocity gamma*(k_alpha + k_beta)/2 peaks just below a jump: below
    2/alpha (only the light weight moves, one cell) when the weights are far
    apart (alpha <= beta/2), else below 2/beta (both move one cell).  At
    alpha = beta/2 the two candidates coincide.
    """
    if not (0 < alpha < beta and math.isfinite(float(beta))):
        raise ValueError("need 0 < alpha < beta")
    if _exact(alpha, beta):
        a, b = Fraction(alpha), Fraction(beta)
        if 2 * a <= b:
            return SupVelocity(1 / a, 2 / a)
        return SupVelocity(2 / b, 2 / b)
    a, b = float(alpha), float(beta)
    if 2 * a <= b:
        return SupVelocity(1 / a, 2 / a)
    return SupVelocity(2 / b, 2 / b)


def pinning_fraction(traj: Trajectory, schedule: PerturbationSchedule, gamma, t):
    """Lebesgue measure of the active set {xi in [0, t] : a(xi) <= 2/gamma}
    on the piecewise-constant weight interpolation at mesh traj.tau.

    Steps whose weight exceeds 2/gamma have cell count zero and cannot move,
    so all motion up to t happens on this set; at mesh-aligned times the
    increment u(t) - u(0) lies between gamma*|I| and the reciprocal-weight
    integral over I plus (gamma/2)*|I|.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    tau = traj.tau
    if t > tau * traj.steps * (1 + 1e-9):
        raise ValueError("t exceeds the trajectory horizon")
    r = t / tau
    n_full = math.floor(r)
    partial = t - n_full * tau if (r - n_full) > 1e-9 * max(1.0, r) else 0.0
    cut = 2 / gamma
    count = sum(1 for n in range(1, n_full + 1) if schedule.at(n) <= cut)
    measure = count * tau
    if partial > 0.0 and schedule.at(n_full + 1) <= cut:
        measure += partial
    return measure


def residue_flow_velocity(pattern: ResiduePattern, schedule: PerturbationSchedule,
                          gamma, max_steps: int = 1_000_000):
    """Long-run slope of the residue-pattern descent.

    Runs the exact cell recursion, discards a burn-in of max(10*N*p, 100)
    steps, then samples the residue class at period boundaries.  The class
    determines every subsequent step, so its first recurrence closes an
    exact cycle and the slope is gamma times the mean cell gain over that
    cycle; rational inputs therefore give an exact rational.  The class
    takes at most p values, so the cycle closes within p periods of the
    burn-in; max_steps only bounds patterns so large that even that budget
    overflows, raising NoCycleError.
    """
    _require_cyclic(schedule, "residue_flow_velocity")
    n_period = len(schedule.values)
    xs = [descent_offset(a, gamma) for a in schedule.values]
    p = pattern.p
    m = pattern.residues[0]
    steps = 0

    def advance(count):
        nonlocal m, steps
        for _ in range(count):
            x = xs[steps % n_period]
            j, tie = _nearest_admissible(x, m % p, pattern)
            if tie is not None:
                raise BifurcationError(
                    "residue projection ties between two admissible points",
                    step=steps + 1,
                    gamma=float(gamma),
                    candidate_cells=tuple(sorted((j, tie))),
                )
            m += j
            steps += 1

    burn = max(10 * n_period * p, 100)
    if burn + n_period > max_steps:
        raise NoCycleError("burn-in exceeds the step budget",
                           burn_in=burn, max_steps=max_steps)
    advance(burn)
    seen = {}
    block = 0
    while True:
        key = m % p
        if key in seen:
            block0, m0 = seen[key]
            cells = m - m0
            periods = block - block0
            if _exact(gamma):
                return Fraction(gamma) * Fraction(cells, periods * n_period)
            return float(gamma) * (cells / (periods * n_period))
        seen[key] = (block, m)
        if steps + n_period > max_steps:
            raise NoCycleError("no repeating cycle within the step budget",
                               steps=steps, max_steps=max_steps)
        advance(n_period)
        block += 1


@dataclass(frozen=True)
class StaircaseRow:
    gamma: float
    inv_a_gamma: float
    inv_a_star: float
    pinned: bool
    note: str = ""


def staircase_sweep(schedule: PerturbationSchedule, gamma_grid):
    """effective_velocity tabulated over a gamma grid, with the flat-limit
    reference 1/a* in every row.

    A grid point that lands on a bifurcation is nudged up by 1e-9 relative,
    repeatedly if the nudge stays inside the detection tolerance, and the
    row note records how far it moved.
    """
    _require_cyclic(schedule, "staircase_sweep")
    inv_star = float(1 / schedule.harmonic_limit())
    rows = []
    for gamma in gamma_grid:
        g = float(gamma)
        nudges = 0
        while True:
            try:
                v = effective_velocity(schedule, g)
                break
            except BifurcationError:
                nudges += 1
                if nudges > 64:
                    raise
                g = g * (1 + 1e-9)
        note = f"nudged off a bifurcation value (+{nudges}e-9 relative)" if nudges else ""
        rows.append(StaircaseRow(gamma=g, inv_a_gamma=float(v),
                                 inv_a_star=inv_star, pinned=(v == 0), note=note))
    return rows
