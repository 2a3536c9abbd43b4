"""Matrix-free solves for the per-step linear systems.

Every scheme reduces to

    (alpha I - beta Lap_h + diag) x + sum_k c_k u_k <v_k, x> = b,

where ``<v, x>`` is the grid quadrature of ``v * x``.  The local part is SPD
and is inverted with conjugate gradients; the at most two rank-one terms are
handled with the Sherman-Morrison-Woodbury identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, lap_padded, pad_neumann

MAX_TERMS = 2
SINGULAR_DET = 1e-14


class SolverError(RuntimeError):
    pass


class NoConvergence(SolverError):
    def __init__(self, maxit, residual):
        self.maxit = maxit
        self.residual = residual
        super().__init__(f"CG did not converge in {maxit} iterations (relative residual {residual:.3e})")


class SingularCapacitance(SolverError):
    def __init__(self, det):
        self.det = det
        super().__init__(f"capacitance matrix is singular (|det| = {abs(det):.3e})")


@dataclass
class SolveStats:
    """Running totals, updated in place by the solvers when passed in."""

    iterations: int = 0
    solves: int = 0


@dataclass(frozen=True)
class LocalOperator:
    grid: Grid
    alpha: float
    beta: float
    diag: Field | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta!r}")
        if self.diag is not None and np.any(self.diag.interior < 0):
            raise ValueError("diag must be non-negative")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to an interior ``(n, n)`` array."""
        out = self.alpha * x
        if self.beta:
            out = out - self.beta * lap_padded(pad_neumann(x), self.grid.h)
        if self.diag is not None:
            out = out + self.diag.interior * x
        return out

    def diagonal(self) -> np.ndarray:
        n, h = self.grid.n, self.grid.h
        # boundary cells lose one off-diagonal per mirrored side
        nbrs = np.full((n, n), 4.0)
        nbrs[0, :] -= 1
        nbrs[-1, :] -= 1
        nbrs[:, 0] -= 1
        nbrs[:, -1] -= 1
        d = self.alpha + self.beta * nbrs / (h * h)
        if self.diag is not None:
            d = d + self.diag.interior
        return d


@dataclass(frozen=True)
class RankOneTerm:
    """Contributes ``coeff * direction * quad(weight * x)`` to the operator."""

    direction: Field
    weight: Field
    coeff: float


def apply_local(A: LocalOperator, x: Field) -> Field:
    return Field.from_interior(A.grid, A.matvec(x.interior))


def apply_corrected(A: LocalOperator, terms, x: Field) -> Field:
    h2 = A.grid.h ** 2
    out = A.matvec(x.interior)
    for t in terms:
        out = out + t.coeff * t.direction.interior * (h2 * np.sum(t.weight.interior * x.interior))
    return Field.from_interior(A.grid, out)


def _cg(A: LocalOperator, b: np.ndarray, tol: float, maxit: int, jacobi: bool):
    bnorm = np.sqrt(np.sum(b * b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0
    inv_d = 1.0 / A.diagonal() if jacobi else None
    r = b.copy()
    z = r * inv_d if jacobi else r
    p = z.copy()
    rz = np.sum(r * z)
    target = tol * bnorm
    for k in range(1, maxit + 1):
        Ap = A.matvec(p)
        a = rz / np.sum(p * Ap)
        x += a * p
        r -= a * Ap
        if np.sqrt(np.sum(r * r)) <= target:
            return x, k
        z = r * inv_d if jacobi else r
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(maxit, float(np.sqrt(np.sum(r * r)) / bnorm))


def cg_solve(A: LocalOperator, b: Field, tol: float = 1e-10, maxit: int | None = None,
             *, jacobi: bool = False, stats: SolveStats | None = None) -> Field:
    """Conjugate gradients for the local operator.

    Stops once the discrete L2 residual is at most ``tol * ||b||``.  Raises
    :class:`NoConvergence` when ``maxit`` (default ``10 n``) is exhausted.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    maxit = 10 * A.grid.n if maxit is None else maxit
    x, its = _cg(A, b.interior, tol, maxit, jacobi)
    if stats is not None:
        stats.iterations += its
        stats.solves += 1
    return Field.from_interior(A.grid, x)


def woodbury_solve(A: LocalOperator, terms, b: Field, tol: float = 1e-10,
                   maxit: int | None = None, *, jacobi: bool = False,
                   stats: SolveStats | None = None, refine: int = 3) -> Field:
    """Solve the local operator plus up to two rank-one corrections.

    Terms with a zero coefficient are dropped, so an empty or all-zero list
    reduces to a single :func:`cg_solve`.  The combined solution is polished
    by up to ``refine`` rounds of iterative refinement against the full
    corrected operator, reusing the capacitance factorization.
    """
    terms = list(terms)
    if len(terms) > MAX_TERMS:
        raise ValueError(f"at most {MAX_TERMS} rank-one terms supported, got {len(terms)}")
    terms = [t for t in terms if t.coeff != 0.0]
    if not terms:
        return cg_solve(A, b, tol, maxit, jacobi=jacobi, stats=stats)

    def solve(rhs):
        return cg_solve(A, Field.from_interior(A.grid, rhs), tol, maxit,
                        jacobi=jacobi, stats=stats).interior

    h2 = A.grid.h ** 2
    V = np.stack([t.weight.interior for t in terms])
    C = np.array([t.coeff for t in terms])
    Y = np.stack([solve(t.direction.interior) for t in terms])
    K = np.eye(len(terms)) + C[:, None] * h2 * np.einsum("kij,lij->kl", V, Y)
    det = np.linalg.det(K)
    if abs(det) < SINGULAR_DET:
        raise SingularCapacitance(det)

    def combine(y0):
        z = np.linalg.solve(K, C * h2 * np.einsum("kij,ij->k", V, y0))
        return y0 - np.einsum("k,kij->ij", z, Y)

    x = combine(solve(b.interior))
    bnorm = np.sqrt(np.sum(b.interior ** 2))
    for _ in range(refine):
        res = b.interior - apply_corrected(A, terms, Field.from_interior(A.grid, x)).interior
        if np.sqrt(np.sum(res * res)) <= tol * bnorm:
            break
        x = x + combine(solve(res))
    return Field.from_interior(A.grid, x)
