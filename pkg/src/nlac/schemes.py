"""Linear second-order Crank-Nicolson steppers (EQ / SAV x constraint).

Each step solves for the increment ``delta = phi^{n+1} - phi^n``.  The
auxiliary updates (q or r, and zeta) are linear in ``delta``, so they are
substituted into the phi equation, which leaves

    (1/(M dt) + gamma2 - gamma1/2 Lap_h [+ gbar^2]) delta + rank-one terms = rhs.

After the solve the auxiliaries are advanced algebraically and the
un-eliminated scheme equations are re-evaluated to produce residuals.  The
first step uses the same formulas with the extrapolated coefficient replaced
by its value at ``phi^0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np

from .grid import Field, laplacian_h, norm, quad
from .linsolve import LocalOperator, RankOneTerm, SolveStats, woodbury_solve
from .model import (
    Constraint,
    Method,
    ModelParams,
    SchemeState,
    discrete_energy,
    eq_aux,
    lagrange_L,
    sav_aux,
)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
TOL_FLOOR = 1e-14
ENERGY_TOL = 1e-10


class InvariantViolation(RuntimeError):
    def __init__(self, step, message):
        self.step = step
        super().__init__(f"step {step}: {message}")


@dataclass
class StepReport:
    step: int
    t: float
    volume: float
    energy_modified: float
    energy_original: float
    cg_iters: int
    residuals: dict = dc_field(default_factory=dict)
    phi_norm: float = 0.0

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def residual_ok(self) -> bool:
        return self.max_residual <= RESIDUAL_TOL * (1.0 + self.phi_norm)


def extrapolate(prev: Field, prev2: Field) -> Field:
    """Second-order explicit value at the half step: 3/2 prev - 1/2 prev2."""
    return Field(prev.grid, 1.5 * prev.values - 0.5 * prev2.values)


def _eq_coefficient(state: SchemeState, p: ModelParams, startup: bool) -> np.ndarray:
    _, g_n = eq_aux(state.phi.interior, p)
    if startup:
        return g_n
    _, g_prev = eq_aux(state.phi_prev.interior, p)
    return 1.5 * g_n - 0.5 * g_prev


def sav_coefficient(state: SchemeState, p: ModelParams, startup: bool) -> Field:
    """``s`` at the half step.

    By default the s field itself is extrapolated, 3/2 s(phi^n) - 1/2 s(phi^{n-1}),
    mirroring the EQ coefficient.  With ``sav_extrapolation="phi"`` U and E1
    are instead both evaluated at the extrapolated phi.
    """
    if startup:
        return sav_aux(state.phi, p)[2]
    if p.sav_extrapolation == "phi":
        return sav_aux(extrapolate(state.phi, state.phi_prev), p)[2]
    return extrapolate(sav_aux(state.phi, p)[2], sav_aux(state.phi_prev, p)[2])


def _step(state: SchemeState, p: ModelParams, dt: float, startup: bool,
          tol: float, jacobi: bool) -> tuple[SchemeState, StepReport]:
    grid = state.grid
    phi_n = state.phi.interior
    sqrt_eta = np.sqrt(p.eta)
    lap_n = laplacian_h(state.phi).interior
    one = Field.full(grid, 1.0)
    alpha = 1.0 / (p.mobility * dt) + p.gamma2
    beta = 0.5 * p.gamma1

    if p.method is Method.EQ:
        g = _eq_coefficient(state, p, startup)
        coef = Field.from_interior(grid, g)
        A = LocalOperator(grid, alpha, beta, Field.from_interior(grid, g * g))
        base = -p.gamma1 * lap_n + 2.0 * p.gamma2 * phi_n + 2.0 * state.q.interior * g
        terms = []
    else:
        coef = sav_coefficient(state, p, startup)
        s = coef.interior
        A = LocalOperator(grid, alpha, beta)
        base = -p.gamma1 * lap_n + 2.0 * p.gamma2 * phi_n + 2.0 * state.r * s
        terms = [RankOneTerm(coef, coef, 1.0)]

    if p.constraint is Constraint.PENALTY:
        rhs = -(base + sqrt_eta * state.zeta)
        terms.append(RankOneTerm(one, one, 0.5 * p.eta))
    elif p.constraint is Constraint.LAGRANGE:
        rhs = -(base - quad(Field.from_interior(grid, base)))
        if p.method is Method.EQ:
            terms.append(RankOneTerm(one, Field.from_interior(grid, p.gamma2 + g * g), -1.0))
        else:
            centered = Field.from_interior(grid, s - quad(coef))
            terms = [RankOneTerm(centered, coef, 1.0),
                     RankOneTerm(one, Field.full(grid, p.gamma2), -1.0)]
    else:
        rhs = -base

    # the phi residual is M dt times the solver residual; keep it well inside
    # the absolute bound even when rhs is large
    rhs_f = Field.from_interior(grid, rhs)
    rhs_norm = norm(rhs_f)
    if rhs_norm > 0:
        budget = 0.1 * RESIDUAL_TOL * (1.0 + norm(state.phi)) / (p.mobility * dt * rhs_norm)
        tol = min(tol, max(budget, TOL_FLOOR))
    stats = SolveStats()
    delta = woodbury_solve(A, terms, rhs_f, tol, jacobi=jacobi, stats=stats).interior

    phi_new = Field.from_interior(grid, phi_n + delta)
    new = replace(state, phi=phi_new, phi_prev=state.phi, step=state.step + 1)
    dvol = quad(Field.from_interior(grid, delta))
    if p.method is Method.EQ:
        new.q = Field.from_interior(grid, state.q.interior + g * delta)
    else:
        new.r = state.r + quad(Field.from_interior(grid, s * delta))
    if p.constraint is Constraint.PENALTY:
        new.zeta = state.zeta + sqrt_eta * dvol

    residuals = scheme_residuals(state, new, coef, p, dt)
    modified, original = discrete_energy(new, p)
    report = StepReport(
        step=new.step,
        t=new.step * dt,
        volume=quad(phi_new),
        energy_modified=modified,
        energy_original=original,
        cg_iters=stats.iterations,
        residuals=residuals,
        phi_norm=norm(phi_new),
    )
    return new, report


def scheme_residuals(old: SchemeState, new: SchemeState, coef: Field,
                     p: ModelParams, dt: float) -> dict:
    """L2 residuals of the original (un-eliminated) scheme equations.

    ``coef`` is the explicit coefficient used by the step: the g field for
    EQ or the s field for SAV.
    """
    grid = old.grid
    diff = new.phi.interior - old.phi.interior
    half = Field.from_interior(grid, 0.5 * (new.phi.interior + old.phi.interior))
    mu = -p.gamma1 * laplacian_h(half).interior + 2.0 * p.gamma2 * half.interior
    out = {}
    c = coef.interior
    if p.method is Method.EQ:
        q_half = 0.5 * (new.q.interior + old.q.interior)
        mu = mu + 2.0 * q_half * c
        out["q"] = norm(Field.from_interior(grid, new.q.interior - old.q.interior - c * diff))
    else:
        r_half = 0.5 * (new.r + old.r)
        mu = mu + 2.0 * r_half * c
        out["r"] = abs(new.r - old.r - quad(Field.from_interior(grid, c * diff)))
    if p.constraint is Constraint.PENALTY:
        mu = mu + np.sqrt(p.eta) * 0.5 * (new.zeta + old.zeta)
        out["zeta"] = abs(new.zeta - old.zeta
                          - np.sqrt(p.eta) * quad(Field.from_interior(grid, diff)))
    elif p.constraint is Constraint.LAGRANGE:
        mu = mu - lagrange_L(Field.from_interior(grid, mu), p)
    out["phi"] = norm(Field.from_interior(grid, diff + dt * p.mobility * mu))
    return out


def startup_step(state: SchemeState, p: ModelParams, dt: float, *,
                 tol: float = 1e-10, jacobi: bool = False) -> SchemeState:
    """First step from ``phi^0``; the explicit coefficient is frozen at ``phi^0``."""
    if state.step != 0:
        raise ValueError(f"startup_step needs step 0, got {state.step}")
    return _step(state, p, dt, True, tol, jacobi)[0]


def step_eq(state: SchemeState, p: ModelParams, dt: float, *,
            tol: float = 1e-10, jacobi: bool = False) -> tuple[SchemeState, StepReport]:
    if p.method is not Method.EQ:
        raise ValueError("step_eq requires method=EQ")
    if state.step < 1:
        raise ValueError("step_eq needs two time levels; call startup_step first")
    return _step(state, p, dt, False, tol, jacobi)


def step_sav(state: SchemeState, p: ModelParams, dt: float, *,
             tol: float = 1e-10, jacobi: bool = False) -> tuple[SchemeState, StepReport]:
    if p.method is not Method.SAV:
        raise ValueError("step_sav requires method=SAV")
    if state.step < 1:
        raise ValueError("step_sav needs two time levels; call startup_step first")
    return _step(state, p, dt, False, tol, jacobi)


def check_step(old: SchemeState, new: SchemeState, report: StepReport,
               p: ModelParams, e_old: float):
    """Raise :class:`InvariantViolation` if an accepted step breaks a guarantee.

    The sign of q or r is not among them: the schemes only ever use q and r
    linearly and the energy only through their squares.  See
    :func:`aux_positive`.
    """
    step = report.step
    if not np.all(np.isfinite(new.phi.interior)):
        raise InvariantViolation(step, "non-finite phi")
    if not report.residual_ok:
        raise InvariantViolation(step, f"scheme residuals too large: {report.residuals}")
    if report.energy_modified > e_old + ENERGY_TOL * (1.0 + abs(e_old)):
        raise InvariantViolation(
            step, f"modified energy increased {e_old!r} -> {report.energy_modified!r}")
    if p.constraint is Constraint.PENALTY:
        expected = np.sqrt(p.eta) * (report.volume - new.v0)
        if abs(new.zeta - expected) > RESIDUAL_TOL:
            raise InvariantViolation(step, f"zeta drifted from its definition by {new.zeta - expected:.3e}")
    if p.constraint is Constraint.LAGRANGE:
        v_old = quad(old.phi)
        if abs(report.volume - v_old) > RESIDUAL_TOL * (1.0 + abs(v_old)):
            raise InvariantViolation(step, f"volume changed by {report.volume - v_old:.3e}")


def aux_positive(state: SchemeState) -> bool:
    """Whether q (everywhere) or r is still positive.

    Large steps can push the algebraically updated auxiliary through zero
    while the energy law still holds; this marks the auxiliary as having
    drifted far from its defining square root.
    """
    if state.q is not None:
        return bool(np.all(state.q.interior > 0))
    return bool(state.r > 0)


def advance(state: SchemeState, p: ModelParams, dt: float, n_steps: int,
            observer: Callable[[StepReport], None] | None = None, *,
            tol: float = 1e-10, jacobi: bool = False, check: bool = True) -> SchemeState:
    """Take ``n_steps`` steps, starting with the first-order step if at step 0.

    ``observer`` is called with every :class:`StepReport` in order.  With
    ``check`` on, the first violated invariant aborts the run.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e_old = discrete_energy(state, p)[0]
    warned = False
    for _ in range(n_steps):
        new, report = _step(state, p, dt, state.step == 0, tol, jacobi)
        if check:
            check_step(state, new, report, p, e_old)
        if not warned and not aux_positive(new):
            log.warning("step %d: auxiliary variable changed sign (dt=%g is large for "
                        "this problem)", new.step, dt)
            warned = True
        if observer is not None:
            observer(report)
        state, e_old = new, report.energy_modified
    return state
