"""Initial conditions and the experiment driver; Cauchy convergence studies on top."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grid import Field, Grid, Norm, norm
from .model import ModelParams, discrete_energy, init_state
from .schemes import StepReport, advance

log = logging.getLogger(__name__)

DROP_DELTA = 0.01
DROP_RADIUS = 0.2


class NonpositiveError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    n: int
    dt: float
    t_end: float
    ic: str = "cosine"  # "cosine", "drops" or "file:<path>"
    out: Path | None = None
    snapshot_every: int = 0  # 0 disables snapshots
    solver_tol: float = 1e-10

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        self.n_steps  # validates divisibility
        if not (self.ic in ("cosine", "drops") or self.ic.startswith("file:")):
            raise ValueError(f"unknown initial condition {self.ic!r}")

    @property
    def n_steps(self) -> int:
        ratio = self.t_end / self.dt
        k = round(ratio)
        if abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"t_end={self.t_end} is not a whole number of steps of dt={self.dt}")
        return k


@dataclass(frozen=True)
class ConvergenceRow:
    coarse: float
    fine: float
    err_l2: float
    rate_l2: float
    err_h1: float
    rate_h1: float


def ic_cosine(grid: Grid) -> Field:
    x, y = grid.mesh()
    return Field.from_interior(grid, 0.5 + 0.5 * np.cos(4 * np.pi * x) * np.cos(4 * np.pi * y))


def drops_profile(x, y, delta=DROP_DELTA):
    """Four tanh-edged drops; overlapping branches resolve in listed order."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = 0.3 - delta, 0.7 + delta
    radii = [np.hypot(x - cx, y - cy) for cx, cy in ((lo, lo), (hi, lo), (lo, hi), (hi, hi))]
    inner, outer = DROP_RADIUS - delta, DROP_RADIUS + delta
    conds = [np.logical_or.reduce([r <= inner for r in radii])]
    choices = [np.ones_like(x)]
    for r in radii:
        conds.append((r > inner) & (r < outer))
        choices.append(np.tanh((outer - r) / delta))
    return np.select(conds, choices, default=0.0)


def ic_drops(grid: Grid) -> Field:
    x, y = grid.mesh()
    return Field.from_interior(grid, drops_profile(x, y))


def initial_field(cfg: ExperimentConfig) -> Field:
    grid = Grid(cfg.n)
    if cfg.ic == "cosine":
        return ic_cosine(grid)
    if cfg.ic == "drops":
        return ic_drops(grid)
    from .iofmt import read_field

    phi = read_field(cfg.ic[len("file:"):])
    if phi.grid != grid:
        raise ValueError(f"initial field has n={phi.grid.n}, config asks for n={cfg.n}")
    return phi


def run_experiment(cfg: ExperimentConfig, phi0: Field | None = None, observer=None):
    """Run one simulation; returns ``(final_state, records)``.

    When ``cfg.out`` is set, ``timeseries.csv``, periodic snapshots
    ``phi_<step>.txt`` and ``phi_final.txt`` are written there.  ``observer``
    receives every :class:`StepReport`.
    """
    from .iofmt import TimeSeriesRecord, write_field, write_timeseries

    p = cfg.params
    phi0 = initial_field(cfg) if phi0 is None else phi0
    state = init_state(phi0, p)
    modified, original = discrete_energy(state, p)
    records = [TimeSeriesRecord(0, 0.0, state.v0, modified, original, 0)]
    out = Path(cfg.out) if cfg.out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.snapshot_every:
            write_field(state.phi, out / "phi_000000.txt", 0.0)

    def observe(rep: StepReport):
        records.append(TimeSeriesRecord(rep.step, rep.t, rep.volume, rep.energy_modified,
                                        rep.energy_original, rep.cg_iters))
        if observer is not None:
            observer(rep)

    # reports do not carry the field, so step in snapshot-sized chunks
    n_total = cfg.n_steps
    snapshots = out is not None and cfg.snapshot_every > 0
    chunk = cfg.snapshot_every if snapshots else max(n_total, 1)
    while state.step < n_total:
        state = advance(state, p, cfg.dt, min(chunk, n_total - state.step), observe,
                        tol=cfg.solver_tol)
        if snapshots and state.step % cfg.snapshot_every == 0:
            write_field(state.phi, out / f"phi_{state.step:06d}.txt", state.step * cfg.dt)
        log.info("step %d/%d volume=%.12g energy=%.12g", state.step, n_total,
                 records[-1].volume, records[-1].energy_modified)
    if out is not None:
        write_timeseries(records, out / "timeseries.csv")
        write_field(state.phi, out / "phi_final.txt", n_total * cfg.dt)
    return state, records


def rates_from_errors(errs) -> list[float]:
    errs = [float(e) for e in errs]
    bad = [e for e in errs if not e > 0]
    if bad:
        raise NonpositiveError(f"errors must be positive to take rates, got {bad}")
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


def _rate(a: float, b: float) -> float:
    return math.log2(a / b) if a > 0 and b > 0 else float("nan")


def _final_phi(cfg: ExperimentConfig, observer=None) -> Field:
    return run_experiment(replace(cfg, out=None), observer=observer)[0].phi


def _sweep(cfgs, workers: int, observer=None):
    if workers > 1:
        if observer is not None:
            raise ValueError("an observer needs workers=1")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_final_phi, cfgs))
    return [_final_phi(c, observer) for c in cfgs]


def _rows(levels, errs_l2, errs_h1):
    rows = []
    for k, (el2, eh1) in enumerate(zip(errs_l2, errs_h1)):
        rl2 = _rate(errs_l2[k - 1], el2) if k else float("nan")
        rh1 = _rate(errs_h1[k - 1], eh1) if k else float("nan")
        rows.append(ConvergenceRow(levels[k], levels[k + 1], el2, rl2, eh1, rh1))
    return rows


def _diff(a: Field, b: Field) -> Field:
    return Field.from_interior(a.grid, a.interior - b.interior)


def converge_time(cfg: ExperimentConfig, dts, workers: int = 1,
                  observer=None) -> list[ConvergenceRow]:
    """Successive-halving study in time at fixed grid, all runs ending at ``cfg.t_end``."""
    dts = [float(d) for d in dts]
    for a, b in zip(dts, dts[1:]):
        if not math.isclose(b, a / 2, rel_tol=1e-12):
            raise ValueError(f"time steps must halve: {a} -> {b}")
    sols = _sweep([replace(cfg, dt=d) for d in dts], workers, observer)
    diffs = [_diff(a, b) for a, b in zip(sols, sols[1:])]
    return _rows(dts, [norm(d, Norm.L2) for d in diffs], [norm(d, Norm.H1) for d in diffs])


def restrict(fine: Field) -> Field:
    """2x2 cell average onto the grid with half as many cells per axis."""
    n = fine.grid.n
    if n % 2:
        raise ValueError(f"cannot restrict odd grid n={n}")
    v = fine.interior
    coarse = 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])
    return Field.from_interior(Grid(n // 2), coarse)


def converge_space(cfg: ExperimentConfig, ns, workers: int = 1,
                   observer=None) -> list[ConvergenceRow]:
    """Successive-doubling study in space at fixed ``cfg.dt``; levels are reported as h."""
    ns = [int(k) for k in ns]
    for a, b in zip(ns, ns[1:]):
        if b != 2 * a:
            raise ValueError(f"grid sizes must double: {a} -> {b}")
    sols = _sweep([replace(cfg, n=k) for k in ns], workers, observer)
    diffs = [_diff(c, restrict(f)) for c, f in zip(sols, sols[1:])]
    return _rows([1.0 / k for k in ns], [norm(d, Norm.L2) for d in diffs],
                 [norm(d, Norm.H1) for d in diffs])
