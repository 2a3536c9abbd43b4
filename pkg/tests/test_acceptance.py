"""Acceptance criteria, each reported as a single PASS/FAIL line.

The heavy runs are module-scoped fixtures so the residual criterion can
inspect every step taken by the study runs.
"""
import math

import numpy as np
import pytest

from nlac.experiments import ExperimentConfig, converge_space, converge_time, run_experiment
from nlac.grid import Field, Grid, grad_inner, inner_l2, laplacian_h, quad
from nlac.linsolve import LocalOperator, RankOneTerm, woodbury_solve
from nlac.model import ModelParams, eq_aux, init_state
from nlac.schemes import RESIDUAL_TOL, advance
import oracles

COSINE = dict(gamma1=0.2, gamma2=10.0, mobility=1e-3)
DROPS = dict(gamma1=0.02, gamma2=100.0, mobility=1.0)
VARIANTS = [(m, c) for m in ("eq", "sav") for c in ("classic", "penalty", "lagrange")]
CONSTRAINED = [(m, c) for m in ("eq", "sav") for c in ("penalty", "lagrange")]
DTS = [0.1 / 2**k for k in range(6)]


class ResidualLog:
    """Worst residual ratio seen per run label."""

    def __init__(self):
        self.worst: dict[str, float] = {}
        self.steps = 0

    def observer(self, label):
        def obs(rep):
            ratio = rep.max_residual / (RESIDUAL_TOL * (1 + rep.phi_norm))
            self.worst[label] = max(self.worst.get(label, 0.0), ratio)
            self.steps += 1
        return obs


@pytest.fixture(scope="module")
def residuals():
    return ResidualLog()


@pytest.fixture(scope="module")
def temporal(residuals):
    rows = {}
    for m, c in CONSTRAINED:
        cfg = ExperimentConfig(ModelParams(**COSINE, method=m, constraint=c), 128, DTS[0], 1.0)
        rows[m, c] = converge_time(cfg, DTS, observer=residuals.observer(f"time {m}-{c}"))
    return rows


@pytest.fixture(scope="module")
def spatial(residuals):
    cfg = ExperimentConfig(ModelParams(**COSINE, method="eq", constraint="lagrange"), 8, 1e-3, 0.1)
    return converge_space(cfg, [8, 16, 32, 64, 128], observer=residuals.observer("space"))


@pytest.fixture(scope="module")
def dissipation(residuals):
    out = {}
    for m, c in VARIANTS:
        p = ModelParams(**DROPS, method=m, constraint=c)
        for dt in (1e-1, 1e-2, 1e-3):
            _, recs = run_experiment(ExperimentConfig(p, 128, dt, 50 * dt, ic="drops"),
                                     observer=residuals.observer(f"energy {m}-{c} dt={dt}"))
            out[m, c, dt] = np.array([r.energy_modified for r in recs])
    return out


@pytest.fixture(scope="module")
def volumes(residuals):
    out = {}
    for m, c in VARIANTS:
        p = ModelParams(**DROPS, method=m, constraint=c)
        _, recs = run_experiment(ExperimentConfig(p, 128, 1e-3, 2.0, ic="drops"),
                                 observer=residuals.observer(f"volume {m}-{c}"))
        out[m, c] = np.array([r.volume for r in recs])
    return out


def _fmt_rates(rows):
    return ",".join(f"{r.rate_l2:.4f}/{r.rate_h1:.4f}" for r in rows[-3:])


def test_criterion_1_temporal_convergence(temporal, verdict):
    ok = True
    for (m, c), rows in temporal.items():
        finest = rows[-3:]
        good = all(1.8 <= r.rate_l2 <= 2.2 and 1.8 <= r.rate_h1 <= 2.2 for r in finest)
        ok &= verdict(f"criterion 1 rates {m}-{c}", good, _fmt_rates(rows))
    for c in ("penalty", "lagrange"):
        eq_rows, sav_rows = temporal["eq", c], temporal["sav", c]
        rel = max(max(abs(a.err_l2 - b.err_l2) / a.err_l2, abs(a.err_h1 - b.err_h1) / a.err_h1)
                  for a, b in zip(eq_rows, sav_rows))
        ok &= verdict(f"criterion 1 EQ vs SAV {c}", rel <= 0.01, f"max rel diff {rel:.2e}")
    assert ok


def test_criterion_2_spatial_convergence(spatial, verdict):
    rates = [(r.rate_l2, r.rate_h1) for r in spatial[-2:]]
    ok = all(1.7 <= a <= 2.2 and 1.7 <= b <= 2.2 for a, b in rates)
    detail = ",".join(f"{a:.4f}/{b:.4f}" for a, b in rates)
    assert verdict("criterion 2 spatial rates EQ-lagrange", ok, detail)


def test_criterion_3_energy_dissipation(dissipation, verdict):
    worst = -math.inf
    for e in dissipation.values():
        worst = max(worst, np.max((e[1:] - e[:-1]) / (1 + np.abs(e[:-1]))))
    ok = worst <= 1e-10
    assert verdict("criterion 3 energy nonincreasing (18 runs)", ok,
                   f"max relative change per step {worst:.2e}")


def test_criterion_4_volume(volumes, verdict):
    ok = True
    for (m, c), v in volumes.items():
        drift = np.max(np.abs(v - v[0])) / v[0]
        if c == "lagrange":
            good, detail = drift <= 1e-6, f"drift {drift:.2e}"
        elif c == "penalty":
            good, detail = drift <= 1e-3, f"drift {drift:.2e}"
        else:
            good = v[-1] < 0.95 * v[0] and v[-1] < v[-2]
            detail = f"V(T)/V(0) {v[-1] / v[0]:.4f}, last change {v[-1] - v[-2]:.2e}"
        ok &= verdict(f"criterion 4 volume {m}-{c}", good, detail)
    assert ok


def test_criterion_5_residuals(temporal, spatial, dissipation, volumes, residuals, verdict):
    worst = max(residuals.worst.values())
    label = max(residuals.worst, key=residuals.worst.get)
    ok = worst <= 1.0
    assert verdict("criterion 5 scheme residuals", ok,
                   f"{residuals.steps} steps, worst ratio to bound {worst:.2e} ({label})")


def test_criterion_6_woodbury(verdict):
    rng = np.random.default_rng(2024)
    g = Grid(8)
    worst, count = 0.0, 0
    for k in (0, 1, 2):
        for _ in range(40):
            diag = Field.from_interior(g, 10 * rng.random((8, 8)))
            A = LocalOperator(g, 0.5 + 10 * rng.random(), 0.01 + rng.random(), diag)
            terms = [RankOneTerm(oracles.random_field(g, rng), oracles.random_field(g, rng),
                                 float(rng.uniform(-2, 2))) for _ in range(k)]
            b = oracles.random_field(g, rng)
            x = woodbury_solve(A, terms, b, tol=1e-13)
            dense = oracles.corrected_dense(
                A.alpha, A.beta, diag.interior,
                [(t.direction.interior, t.weight.interior, t.coeff) for t in terms], 8)
            ref = np.linalg.solve(dense, b.interior.ravel())
            worst = max(worst, np.linalg.norm(x.interior.ravel() - ref) / np.linalg.norm(ref))
            count += 1
    assert verdict("criterion 6 woodbury vs dense", worst <= 1e-10,
                   f"{count} instances, worst rel err {worst:.2e}")


def test_criterion_7_operator_identities(verdict):
    rng = np.random.default_rng(7)
    sbp, qlap = 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(2, 33))
        g = Grid(n)
        f, h = oracles.random_field(g, rng), oracles.random_field(g, rng)
        lhs, rhs = -inner_l2(laplacian_h(f), h), grad_inner(f, h)
        sbp = max(sbp, abs(lhs - rhs) / max(1.0, abs(rhs)))
        qlap = max(qlap, abs(quad(laplacian_h(f))))
    p = ModelParams(**COSINE)
    eps = 1e-6
    phis = rng.uniform(-0.5, 1.5, 200)
    fd = (eq_aux(phis + eps, p)[0] - eq_aux(phis - eps, p)[0]) / (2 * eps)
    gerr = np.max(np.abs(eq_aux(phis, p)[1] - fd))
    ok = sbp <= 1e-12 and qlap <= 1e-11 and gerr <= 1e-6
    assert verdict("criterion 7 operator identities", ok,
                   f"sbp {sbp:.1e}, quad(lap) {qlap:.1e}, dq/dphi {gerr:.1e}")


def test_criterion_8_fixed_points(verdict):
    worst = 0.0
    for m, c in VARIANTS:
        p = ModelParams(**COSINE, method=m, constraint=c)
        for value in (0.0, 1.0):
            st = advance(init_state(Field.full(Grid(16), value), p), p, 1e-2, 100)
            worst = max(worst, np.max(np.abs(st.phi.values - value)))
    assert verdict("criterion 8 fixed points (6 variants, 100 steps)", worst <= 1e-10,
                   f"max deviation {worst:.1e}")
