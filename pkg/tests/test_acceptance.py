"""Acceptance criteria 1-9, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v``; a summary with one PASS/FAIL
line per criterion is printed at the end. Criteria 3, 4, 5 and 9 need the
MNIST IDX files under ``data/mnist`` (see ``scripts/mnist_from_npm.py``) and
take roughly half an hour together on one CPU core.
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, D_DATA, D_LATENT, S_TOY, identity_map, linear_map, toy_member
from latentgeo import tensor as tc
from latentgeo.cli import main, oracle_rows
from latentgeo.datasets import filter_classes, load_idx
from latentgeo.geometry import (
    EnsembleEnergy,
    GeodesicOptions,
    RbfEnergy,
    SingleEnergy,
    SplineCurve,
    curve_length,
    energy_single,
    exact_report,
    expected_metric,
    minimize_geodesic,
    pullback_metric,
    straight_line_curve,
    uncertainty_field,
)
from latentgeo.models import DecoderEnsemble, Encoder, RbfNet, elbo
from latentgeo.rng import derive_rng
from latentgeo.stats import coefficient_of_variation, paired_t_test, t_cdf
from latentgeo.tensor import Tensor, gradient_check
from latentgeo.training import TrainConfig, train_ensemble

ROOT = Path(__file__).resolve().parents[1]
MNIST = ROOT / "data" / "mnist"
DESK_CONFIG = ROOT / "configs" / "mnist3_desk.json"
MNIST3 = (0, 1, 2)


def record(number, ok, detail, seconds, budget):
    within = seconds <= budget
    verdict = "PASS" if ok and within else "FAIL"
    ACCEPTANCE_LINES.append(f"{verdict} criterion {number}: {detail} [{seconds:.1f}s, budget {budget:.0f}s]")
    assert ok, detail
    assert within, f"criterion {number} took {seconds:.1f}s, budget {budget:.0f}s"


def mnist3_train():
    if not (MNIST / "train" / "images-idx3-ubyte").exists():
        pytest.fail("MNIST IDX files missing; run scripts/mnist_from_npm.py first")
    ds = load_idx(MNIST / "train" / "images-idx3-ubyte", MNIST / "train" / "labels-idx1-ubyte")
    return filter_classes(ds, MNIST3)


@pytest.fixture(scope="module")
def mnist3_ensemble():
    """S=8, d=2 ensemble at the default training settings, timed for criterion 4."""
    ds = mnist3_train()
    start = time.perf_counter()
    model = train_ensemble(TrainConfig(ensemble_size=8, latent_dim=2, seed=0), ds)
    return ds, model, time.perf_counter() - start


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk") / "run"
    start = time.perf_counter()
    code = main(["cv-experiment", str(DESK_CONFIG), "--out", str(out)])
    return out, code, time.perf_counter() - start


# ---------------------------------------------------------------------------


def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    rng = derive_rng(1, "acceptance")
    members = [toy_member(s) for s in range(S_TOY)]
    ens = DecoderEnsemble(members)
    rbf = RbfNet(rng.normal(size=(4, D_LATENT)), rng.uniform(0.5, 2.0, 4), rng.uniform(0.1, 1.0, (4, D_DATA)))
    curve = SplineCurve(rng.normal(size=2), rng.normal(size=2), rng.normal(size=(4, 2)))
    T = 24
    errs = {}

    def energy_of(seg_fn):
        return lambda c: T * tc.sum_(seg_fn(curve.grid(T, c)))

    draws = EnsembleEnergy(ens).draws(T, derive_rng(1, "draws"))
    errs["single"] = gradient_check(energy_of(SingleEnergy(members[0]).exact_segments), curve.controls)
    errs["ensemble-decorrelated"] = gradient_check(energy_of(lambda p: EnsembleEnergy(ens).segments(p, draws=draws)), curve.controls)
    errs["ensemble-exact"] = gradient_check(energy_of(EnsembleEnergy(ens).exact_segments), curve.controls)
    errs["rbf"] = gradient_check(energy_of(RbfEnergy(members[0], rbf).exact_segments), curve.controls)

    enc = Encoder.init(D_DATA, [5], D_LATENT, derive_rng(1, "enc"))
    x = rng.uniform(size=(4, D_DATA))
    eps = rng.normal(size=(4, D_LATENT))
    w = members[0].params

    def elbo_of_decoder(flat):
        parts, i = [], 0
        for p in w:
            parts.append(tc.reshape(tc.take_rows(flat, np.arange(i, i + p.size)), p.shape))
            i += p.size
        return tc.sum_(elbo(enc, members[0], tc.softplus(Tensor(0.1)), x, eps, dec_params=parts))

    errs["elbo"] = gradient_check(elbo_of_decoder, np.concatenate([p.ravel() for p in w]))
    worst = max(errs.values())
    detail = "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + " (tol 1e-5)"
    record(1, worst <= 1e-5, detail, time.perf_counter() - start, 60)


def test_criterion_2_analytic_geometry():
    start = time.perf_counter()
    checks = []
    z0, z1 = np.array([0.5, -1.0]), np.array([2.0, 3.0])
    line = straight_line_curve(z0, z1)
    A = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
    # exact cases (1e-9)
    checks.append(("identity metric", np.abs(pullback_metric(identity_map(), z0) - np.eye(2)).max(), 1e-9))
    checks.append(("linear metric", np.abs(pullback_metric(linear_map(A), z0) - A.T @ A).max(), 1e-9))
    checks.append(("identity energy", abs(energy_single(identity_map(), line, 50).energy - np.sum((z1 - z0) ** 2)), 1e-9))
    checks.append(("identity length", abs(curve_length(SingleEnergy(identity_map()), line, 50) - np.linalg.norm(z1 - z0)), 1e-9))
    checks.append(("linear energy", abs(energy_single(linear_map(A), line, 50).energy - np.sum((A @ (z1 - z0)) ** 2)), 1e-9))

    def circle(z):
        return tc.matmul(tc.sin(z), Tensor([[1.0, 0.0]])) + tc.matmul(tc.cos(z), Tensor([[0.0, 1.0]]))

    def parabola(z):
        return tc.matmul(z, Tensor([[1.0, 0.0]])) + tc.matmul(tc.square(z), Tensor([[0.0, 1.0]]))

    checks.append(("circle metric", abs(pullback_metric(circle, [0.7])[0, 0] - 1.0), 1e-9))
    # quadrature-limited cases (1e-3)
    quarter = straight_line_curve([0.0], [math.pi / 2])
    checks.append(("circle length", abs(curve_length(SingleEnergy(circle), quarter, 1000) - math.pi / 2), 1e-3))
    checks.append(("circle energy", abs(energy_single(circle, quarter, 1000).energy - (math.pi / 2) ** 2), 1e-3))
    unit = straight_line_curve([0.0], [1.0])
    checks.append(("parabola energy", abs(energy_single(parabola, unit, 1000).energy - 7.0 / 3.0), 1e-3))
    bad = [name for name, err, tol in checks if not err <= tol]
    detail = f"{len(checks) - len(bad)}/{len(checks)} closed forms matched" + (f"; failed {bad}" if bad else "")
    record(2, not bad, detail, time.perf_counter() - start, 60)


def test_criterion_3_oracle_equivalence(mnist3_ensemble):
    ds, model, _ = mnist3_ensemble
    start = time.perf_counter()
    anchors = model.encode_means(ds.images)
    lo, hi = anchors.min(axis=0), anchors.max(axis=0)
    pad = 0.1 * (hi - lo)
    bounds = [[lo[0] - pad[0], hi[0] + pad[0]], [lo[1] - pad[1], hi[1] + pad[1]]]
    rows = oracle_rows(model, "single", 10, bounds, 101, {}, seed=0, anchors=anchors)
    gaps = [r["relative_gap"] for r in rows]
    good = sum(g <= 0.05 for g in gaps)
    detail = f"{good}/10 pairs within 5% (median gap {np.median(gaps):.3f}, max {max(gaps):.3f}); need >= 8"
    record(3, good >= 8, detail, time.perf_counter() - start, 600)


def test_criterion_4_uncertainty_growth(mnist3_ensemble):
    ds, model, train_seconds = mnist3_ensemble
    start = time.perf_counter()
    z = model.encode_means(ds.images)
    R = float(np.linalg.norm(z, axis=1).max())
    angles = np.linspace(0.0, 2.0 * np.pi, 360, endpoint=False)
    ring = 3.0 * R * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    at_data = float(uncertainty_field(model.ensemble, z).mean())
    far = float(uncertainty_field(model.ensemble, ring).mean())
    ratio = far / at_data
    detail = f"mean uncertainty at 3R={far:.4f} vs encodings={at_data:.4f}, ratio {ratio:.2f} (need >= 2; R={R:.2f})"
    record(4, ratio >= 2.0, detail, train_seconds + time.perf_counter() - start, 600)


def test_criterion_5_cv_directionality(desk_run):
    out, code, seconds = desk_run
    assert code == 0, "cv-experiment failed"
    cv = {"ensemble": [], "rbf": []}
    for row in csv.DictReader(open(out / "cv.csv")):
        cv[row["method"]].append(float(row["cv"]))
    tt = json.loads((out / "ttest.json").read_text())
    mean_e, mean_r = np.mean(cv["ensemble"]), np.mean(cv["rbf"])
    ok = mean_e < mean_r and tt["t"] < 0 and tt["p"] > 0.5 and tt["alternative"] == "greater"
    detail = f"mean CV ensemble={mean_e:.4f} rbf={mean_r:.4f}, t={tt['t']:.3f}, p(greater)={tt['p']:.4f} (need CV_e < CV_r, t < 0, p > 0.5)"
    record(5, ok, detail, seconds, 3600)


def test_criterion_6_degeneracy():
    start = time.perf_counter()
    f = toy_member(3)
    ens = DecoderEnsemble([f.copy() for _ in range(S_TOY)])
    rng = derive_rng(6, "acceptance")
    curve = SplineCurve(rng.normal(size=2), rng.normal(size=2), rng.normal(size=(4, 2)))
    gaps = {}
    e_ens = exact_report(EnsembleEnergy(ens), curve, 64).energy
    e_dec = T = 64
    e_dec = T * EnsembleEnergy(ens).segments(curve.grid(T), derive_rng(6, "draws")).data.sum()
    e_one = energy_single(f, curve, 64).energy
    gaps["energy"] = max(abs(e_ens - e_one), abs(e_dec - e_one)) / e_one
    opts = GeodesicOptions(iterations=100, T=32)
    g_ens = minimize_geodesic(EnsembleEnergy(ens), straight_line_curve([-1.0, 0.5], [1.0, -0.5]), opts, derive_rng(6, "geo"))
    g_one = minimize_geodesic(SingleEnergy(f), straight_line_curve([-1.0, 0.5], [1.0, -0.5]), opts, derive_rng(6, "geo"))
    gaps["geodesic"] = max(abs(g_ens.length - g_one.length) / g_one.length, np.abs(g_ens.curve.controls - g_one.curve.controls).max())
    pts = rng.normal(scale=2.0, size=(200, 2))
    gaps["uncertainty"] = float(np.abs(uncertainty_field(ens, pts)).max())
    gaps["metric"] = max(np.abs(expected_metric(ens, p) - pullback_metric(f, p)).max() for p in pts[:50])
    worst = max(gaps.values())
    detail = "max gap " + ", ".join(f"{k}={v:.1e}" for k, v in gaps.items()) + " (tol 1e-9)"
    record(6, worst <= 1e-9, detail, time.perf_counter() - start, 60)


def test_criterion_7_statistics():
    start = time.perf_counter()
    grid = np.concatenate([np.linspace(-50, 50, 201), [-1e5, 1e5]])
    err1 = max(abs(t_cdf(float(t), 1) - (0.5 + math.atan(t) / math.pi)) for t in grid)
    err2 = max(abs(t_cdf(float(t), 2) - (0.5 + t / (2 * math.sqrt(2 + t * t)))) for t in grid)
    cv = coefficient_of_variation([1, 2, 3])
    rng = derive_rng(7, "acceptance")
    a, b = rng.uniform(size=20), rng.uniform(size=20)
    anti = all(
        paired_t_test(a, b, alt).p == paired_t_test(b, a, flip).p for alt, flip in (("greater", "less"), ("less", "greater"))
    )
    ok = err1 <= 1e-10 and err2 <= 1e-10 and abs(cv - 0.5) <= 1e-15 and anti
    detail = f"t-CDF err dof1={err1:.1e} dof2={err2:.1e}, CV[1,2,3]={cv}, antisymmetric={anti}"
    record(7, ok, detail, time.perf_counter() - start, 10)


def test_criterion_8_cauchy_schwarz():
    start = time.perf_counter()
    members = [toy_member(s) for s in range(S_TOY)]
    rng = derive_rng(8, "acceptance")
    rbf = RbfNet(rng.normal(size=(4, 2)), rng.uniform(0.5, 2.0, 4), rng.uniform(0.1, 1.0, (4, D_DATA)))
    evaluators = {
        "single": SingleEnergy(members[0]),
        "ensemble": EnsembleEnergy(DecoderEnsemble(members)),
        "rbf": RbfEnergy(members[0], rbf),
    }
    violations = 0
    for _ in range(100):
        curve = SplineCurve(rng.normal(size=2) * 2, rng.normal(size=2) * 2, rng.normal(size=(int(rng.integers(1, 9)), 2)) * 2)
        T = int(rng.integers(2, 200))
        for ev in evaluators.values():
            rep = exact_report(ev, curve, T)
            violations += rep.length**2 > rep.energy * (1 + 1e-12)
    record(8, violations == 0, f"{violations} violations over 100 curves x 3 metrics", time.perf_counter() - start, 60)


def test_criterion_9_determinism(desk_run, tmp_path):
    out, code, first_seconds = desk_run
    assert code == 0
    start = time.perf_counter()
    again = tmp_path / "rerun"
    assert main(["cv-experiment", str(out / "effective_config.json"), "--out", str(again)]) == 0
    names = ["distances.csv", "cv.csv", "histogram.csv", "ttest.json"] + sorted(p.name for p in (out / "trials").iterdir())
    differing = []
    for n in names:
        a = out / n if (out / n).exists() else out / "trials" / n
        b = again / n if (again / n).exists() else again / "trials" / n
        if a.read_bytes() != b.read_bytes():
            differing.append(n)
    detail = f"{len(names) - len(differing)}/{len(names)} output files byte-identical on re-run from effective config"
    record(9, not differing, detail, time.perf_counter() - start, 2 * max(first_seconds, 1.0) + 60)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
