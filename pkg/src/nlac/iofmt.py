"""Plain-text formats for time series, convergence tables, fields and configs.

Reals are written with ``%.17g`` so every float64 survives a round trip
unchanged; files use LF line endings so identical data gives identical bytes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiments import ConvergenceRow, ExperimentConfig
from .grid import Field, Grid
from .model import ModelParams

TIMESERIES_HEADER = ("step", "t", "volume", "energy_modified", "energy_original", "cg_iters")
CONVERGENCE_HEADER = ("coarse", "fine", "err_l2", "rate_l2", "err_h1", "rate_h1")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesRecord:
    step: int
    t: float
    volume: float
    energy_modified: float
    energy_original: float
    cg_iters: int


def fmt_real(x: float) -> str:
    return "%.17g" % x


def _open_write(path):
    path = Path(path)
    try:
        return path.open("w", newline="", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_timeseries(records, path) -> None:
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for rec in records:
            w.writerow([rec.step, fmt_real(rec.t), fmt_real(rec.volume),
                        fmt_real(rec.energy_modified), fmt_real(rec.energy_original),
                        rec.cg_iters])


def read_timeseries(path) -> list[TimeSeriesRecord]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TIMESERIES_HEADER:
        raise FormatError(f"{path}: bad time-series header {rows[:1]}")
    out = []
    for row in rows[1:]:
        if len(row) != len(TIMESERIES_HEADER):
            raise FormatError(f"{path}: expected {len(TIMESERIES_HEADER)} columns, got {len(row)}")
        out.append(TimeSeriesRecord(int(row[0]), float(row[1]), float(row[2]),
                                    float(row[3]), float(row[4]), int(row[5])))
    return out


def write_field(field: Field, path, t: float = 0.0) -> None:
    """Header ``# n h t`` followed by the interior, one x-index per row."""
    g = field.grid
    with _open_write(path) as fh:
        fh.write(f"# {g.n} {fmt_real(g.h)} {fmt_real(t)}\n")
        for row in field.interior:
            fh.write(" ".join(fmt_real(v) for v in row) + "\n")


def read_field_with_time(path) -> tuple[Field, float]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "#":
        raise FormatError(f"{path}: malformed header {lines[0]!r}, expected '# n h t'")
    try:
        n, h, t = int(head[1]), float(head[2]), float(head[3])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header {lines[0]!r}") from exc
    if n < 2 or h != 1.0 / n:
        raise FormatError(f"{path}: inconsistent header n={n} h={h}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise FormatError(f"{path}: expected {n} rows, found {len(body)}")
    rows = []
    for k, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != n:
            raise FormatError(f"{path}: row {k + 1} expected {n} values, found {len(parts)}")
        rows.append([float(v) for v in parts])
    return Field.from_interior(Grid(n), np.array(rows)), t


def read_field(path) -> Field:
    return read_field_with_time(path)[0]


def _fmt_rate(x: float) -> str:
    return "-" if math.isnan(x) else fmt_real(x)


def write_convergence(rows, path) -> None:
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for r in rows:
            w.writerow([fmt_real(r.coarse), fmt_real(r.fine), fmt_real(r.err_l2),
                        _fmt_rate(r.rate_l2), fmt_real(r.err_h1), _fmt_rate(r.rate_h1)])


def read_convergence(path) -> list[ConvergenceRow]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CONVERGENCE_HEADER:
        raise FormatError(f"{path}: bad convergence header {rows[:1]}")
    parse = lambda s: float("nan") if s == "-" else float(s)  # noqa: E731
    return [ConvergenceRow(*map(parse, row)) for row in rows[1:]]


def format_convergence(rows) -> str:
    """Aligned plain-text table of a convergence study."""
    lines = [f"{'coarse':>12} {'fine':>12} {'L2 error':>10} {'rate':>9} {'H1 error':>10} {'rate':>9}"]
    for r in rows:
        rl2 = "-" if math.isnan(r.rate_l2) else f"{r.rate_l2:.6f}"
        rh1 = "-" if math.isnan(r.rate_h1) else f"{r.rate_h1:.6f}"
        lines.append(f"{r.coarse:12.6g} {r.fine:12.6g} {r.err_l2:10.3e} {rl2:>9} "
                     f"{r.err_h1:10.3e} {rh1:>9}")
    return "\n".join(lines)


_PARAM_KEYS = {"gamma1": float, "gamma2": float, "mobility": float, "eta": float, "c0": float,
               "constraint": str, "method": str, "sav_extrapolation": str}
_RUN_KEYS = {"n": int, "dt": float, "t_end": float, "ic": str, "snapshot_every": int,
             "solver_tol": float}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        conv = _PARAM_KEYS.get(key) or _RUN_KEYS.get(key)
        if conv is None:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = conv(val.lower() if key in ("constraint", "method") else val)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: bad value for {key}: {val!r}") from exc
    missing = [k for k in ("gamma1", "gamma2", "mobility", "n", "dt", "t_end") if k not in values]
    if missing:
        raise FormatError(f"{source}: missing required keys {missing}")
    try:
        params = ModelParams(**{k: v for k, v in values.items() if k in _PARAM_KEYS})
        return ExperimentConfig(params=params, **{k: v for k, v in values.items() if k in _RUN_KEYS})
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    p = cfg.params
    items = [("gamma1", fmt_real(p.gamma1)), ("gamma2", fmt_real(p.gamma2)),
             ("mobility", fmt_real(p.mobility)), ("eta", fmt_real(p.eta)),
             ("c0", fmt_real(p.c0)), ("constraint", p.constraint.value),
             ("method", p.method.value), ("sav_extrapolation", p.sav_extrapolation),
             ("n", str(cfg.n)), ("dt", fmt_real(cfg.dt)), ("t_end", fmt_real(cfg.t_end)),
             ("ic", cfg.ic), ("snapshot_every", str(cfg.snapshot_every)),
             ("solver_tol", fmt_real(cfg.solver_tol))]
    return "".join(f"{k} = {v}\n" for k, v in items)
