"""Double-well physics and auxiliary-variable algebra, with the discrete energies.

The free energy is

    F[phi] = int gamma1/2 |grad phi|^2 + f(phi),   f = gamma2 phi^2 (1 - phi)^2

with either no constraint, a quadratic volume penalty of strength ``eta``,
or a Lagrange multiplier enforcing the volume exactly.  The EQ route
quadratizes ``f - gamma2 phi^2`` pointwise through ``q``; the SAV route does
the same globally through the scalar ``r``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import Field, Grid, grad_inner, inner_l2, quad


class Constraint(str, Enum):
    CLASSIC = "classic"
    PENALTY = "penalty"
    LAGRANGE = "lagrange"


class Method(str, Enum):
    EQ = "eq"
    SAV = "sav"


class NonpositiveRadicand(ValueError):
    """The quadratization shift C0 is too small for the current state."""

    def __init__(self, min_value, where=None):
        self.min_value = float(min_value)
        self.where = where
        loc = f" at cell {where}" if where is not None else ""
        super().__init__(
            f"square-root argument {self.min_value:.6g}{loc} is not positive; increase c0"
        )


@dataclass(frozen=True)
class ModelParams:
    gamma1: float
    gamma2: float
    mobility: float
    eta: float = 1e4
    c0: float = 1e4
    constraint: Constraint = Constraint.LAGRANGE
    method: Method = Method.EQ
    # where the SAV half-step coefficient comes from: "s" extrapolates the
    # s field in time, "phi" evaluates s at the extrapolated phi
    sav_extrapolation: str = "s"

    def __post_init__(self):
        object.__setattr__(self, "constraint", Constraint(self.constraint))
        object.__setattr__(self, "method", Method(self.method))
        for name in ("gamma1", "gamma2", "mobility", "c0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.sav_extrapolation not in ("s", "phi"):
            raise ValueError(f"sav_extrapolation must be 's' or 'phi', got {self.sav_extrapolation!r}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta!r}")
        if self.constraint is Constraint.PENALTY and not self.eta > 0:
            raise ValueError("penalty constraint needs eta > 0")


@dataclass
class SchemeState:
    """Time-level data carried between steps.

    ``q`` is set only for EQ, ``r`` only for SAV and ``zeta`` only for the
    penalty constraint.
    """

    phi: Field
    phi_prev: Field
    v0: float
    q: Field | None = None
    r: float | None = None
    zeta: float | None = None
    step: int = 0

    @property
    def grid(self) -> Grid:
        return self.phi.grid


def double_well(phi_val, gamma2):
    """Return ``(f, f')`` for f = gamma2 phi^2 (1 - phi)^2 (scalar or array)."""
    f = gamma2 * phi_val**2 * (1.0 - phi_val) ** 2
    fprime = 2.0 * gamma2 * phi_val * (1.0 - phi_val) * (1.0 - 2.0 * phi_val)
    return f, fprime


def _check_radicand(rad):
    rad = np.asarray(rad)
    if not np.all(rad > 0):
        idx = np.unravel_index(np.argmin(rad), rad.shape) if rad.ndim else None
        raise NonpositiveRadicand(np.min(rad), idx)


def eq_aux(phi_val, p: ModelParams):
    """Pointwise EQ variable ``q = sqrt(f - gamma2 phi^2 + C0)`` and ``g = dq/dphi``."""
    f, fp = double_well(phi_val, p.gamma2)
    rad = f - p.gamma2 * phi_val**2 + p.c0
    _check_radicand(rad)
    q = np.sqrt(rad)
    g = (fp - 2.0 * p.gamma2 * phi_val) / (2.0 * q)
    if np.ndim(q) == 0:
        return float(q), float(g)
    return q, g


def sav_aux(phi: Field, p: ModelParams) -> tuple[float, float, Field]:
    """Return ``(E1, r, s)`` with E1 = int f - gamma2 phi^2 and s = U / (2 r)."""
    x = phi.interior
    f, fp = double_well(x, p.gamma2)
    e1 = quad(Field.from_interior(phi.grid, f - p.gamma2 * x**2))
    _check_radicand(e1 + p.c0)
    r = float(np.sqrt(e1 + p.c0))
    s = (fp - 2.0 * p.gamma2 * x) / (2.0 * r)
    return e1, r, Field.from_interior(phi.grid, s)


def zeta_of(phi: Field, v0: float, eta: float) -> float:
    return float(np.sqrt(eta) * (quad(phi) - v0))


def lagrange_L(mu: Field, p: ModelParams) -> float:
    """Mobility-weighted mean of ``mu``; for constant mobility just its mean."""
    area = 1.0  # unit square
    return quad(mu) / area


def init_state(phi0: Field, p: ModelParams) -> SchemeState:
    """Build the step-0 state with auxiliaries evaluated exactly from ``phi0``."""
    kwargs = {}
    if p.method is Method.EQ:
        q, _ = eq_aux(phi0.interior, p)
        kwargs["q"] = Field.from_interior(phi0.grid, q)
    else:
        _, r, _ = sav_aux(phi0, p)
        kwargs["r"] = r
    if p.constraint is Constraint.PENALTY:
        kwargs["zeta"] = 0.0
    return SchemeState(phi=phi0.copy(), phi_prev=phi0.copy(), v0=quad(phi0), **kwargs)


def discrete_energy(state: SchemeState, p: ModelParams) -> tuple[float, float]:
    """Return ``(modified, original)`` energies of a state.

    ``modified`` is the quadratized energy written in the auxiliary
    variables; it is the quantity the schemes dissipate unconditionally.
    ``original`` is the plain free energy (plus the penalty term when
    present) and is reported for comparison only: it carries no
    monotonicity guarantee.
    """
    phi = state.phi
    grad = 0.5 * p.gamma1 * grad_inner(phi, phi)
    bulk = p.gamma2 * inner_l2(phi, phi)
    if p.method is Method.EQ:
        modified = grad + bulk + inner_l2(state.q, state.q) - p.c0
    else:
        modified = grad + bulk + state.r**2 - p.c0
    f, _ = double_well(phi.interior, p.gamma2)
    original = grad + quad(Field.from_interior(phi.grid, f))
    if p.constraint is Constraint.PENALTY:
        modified += 0.5 * state.zeta**2
        original += 0.5 * p.eta * (quad(phi) - state.v0) ** 2
    return modified, original
