"""Retraining-stability experiment: how much do geodesic distances move across seeds?

For every training seed both an ensemble VAE and an RBF-baseline VAE are
trained; a fixed list of test-set point pairs is encoded by each trial's own
encoder and the geodesic distance between every pair is measured. The
per-pair coefficient of variation across seeds summarizes each method's
stability, and a one-sided paired t-test compares the two methods.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CapabilityError, ContractError, LatentGeoError, TrialError
from .geometry import (
    EnsembleEnergy,
    GeodesicOptions,
    RbfEnergy,
    SingleEnergy,
    minimize_geodesic,
    straight_line_curve,
)
from .rng import derive_rng
from .stats import coefficient_of_variation, paired_t_test
from .training import baseline_config, train_ensemble, train_rbf_baseline

log = logging.getLogger(__name__)

METHODS = ("ensemble", "rbf")
HISTOGRAM_BINS = 30


@dataclass
class TrialMatrix:
    method: str
    distances: np.ndarray
    seeds: list
    pairs: list

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=np.float64)
        if self.distances.shape != (len(self.seeds), len(self.pairs)):
            raise ContractError(
                f"distance matrix {self.distances.shape} does not match {len(self.seeds)} seeds x {len(self.pairs)} pairs"
            )
        if not np.isfinite(self.distances).all() or (self.distances < 0).any():
            raise ContractError("distances must be finite and non-negative")


@dataclass
class CvReport:
    cv: dict
    mean_cv: dict
    bin_edges: np.ndarray
    counts: dict = field(default_factory=dict)


def cv_report(matrices, bins=HISTOGRAM_BINS):
    cv = {m.method: np.array([coefficient_of_variation(col) for col in m.distances.T]) for m in matrices}
    pooled = np.concatenate(list(cv.values()))
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts = {k: np.histogram(v, bins=edges)[0] for k, v in cv.items()}
    return CvReport(cv, {k: float(v.mean()) for k, v in cv.items()}, edges, counts)


def geodesic_distance(evaluator, z0, z1, options, rng=None):
    init = straight_line_curve(z0, z1, options.get("control_points", 8))
    geo = GeodesicOptions(
        iterations=options.get("iterations", 500),
        lr=options.get("lr", 1e-2),
        tolerance=options.get("tolerance", 1e-6),
        patience=options.get("patience", 20),
        T=options.get("segments", 128),
    )
    return minimize_geodesic(evaluator, init, geo, rng)


def evaluator_for(model, method):
    if method == "ensemble":
        return EnsembleEnergy(model.ensemble)
    if method == "rbf":
        if model.rbf is None:
            raise CapabilityError("checkpoint has no RBF network; method 'rbf' is unavailable")
        return RbfEnergy(model.ensemble.members[0], model.rbf)
    if method == "single":
        return SingleEnergy(model.ensemble.members[0])
    raise ContractError(f"unknown method {method!r}")


def draw_pairs(n_test, n_pairs, seed):
    """Fixed list of distinct index pairs into the test set."""
    if n_test < 2:
        raise ContractError("need at least two test points to form pairs")
    rng = derive_rng(seed, "pairs")
    return [tuple(int(i) for i in rng.choice(n_test, size=2, replace=False)) for _ in range(n_pairs)]


def run_trial(seed, train_cfg, train_x, test_x, pairs, geometry, rbf_centers=10, rbf_zeta=1e-4):
    """Distances for every pair under both methods, for one training seed."""
    ens = train_ensemble(replace(train_cfg, seed=seed), train_x)
    base = train_rbf_baseline(baseline_config(replace(train_cfg, seed=seed)), train_x, rbf_centers, rbf_zeta)
    out = {}
    for method, model in (("ensemble", ens), ("rbf", base)):
        evaluator = evaluator_for(model, method)
        z = model.encode_means(test_x)
        row = []
        for p, (i, j) in enumerate(pairs):
            try:
                res = geodesic_distance(evaluator, z[i], z[j], geometry, derive_rng(seed, "geodesic", method, p))
            except LatentGeoError as exc:
                raise TrialError(f"{method} geodesic failed for seed {seed}, pair {p}: {exc}", seed, p) from exc
            row.append(res.length)
        out[method] = row
    return out


def run_cv_experiment(seeds, pairs, train_cfg, train_x, test_x, geometry, rbf_centers=10, rbf_zeta=1e-4, trial_dir=None, on_trial=None):
    """Train both methods for each seed and collect the distance matrices.

    `pairs` is a list of (i, j) test-set indices fixed across trials. When
    `trial_dir` is given, each finished trial is written there immediately so
    a failure leaves the completed trials on disk.
    """
    if len(seeds) < 2:
        raise ContractError("the CV experiment needs at least two seeds")
    rows = {m: [] for m in METHODS}
    for seed in seeds:
        try:
            trial = run_trial(seed, train_cfg, train_x, test_x, pairs, geometry, rbf_centers, rbf_zeta)
        except TrialError:
            raise
        except LatentGeoError as exc:
            raise TrialError(f"training failed for seed {seed}: {exc}", seed) from exc
        for m in METHODS:
            rows[m].append(trial[m])
        if trial_dir is not None:
            path = Path(trial_dir)
            path.mkdir(parents=True, exist_ok=True)
            (path / f"trial_seed{seed}.json").write_text(
                json.dumps({"seed": seed, "pairs": [list(p) for p in pairs], "distances": trial}) + "\n"
            )
        if on_trial is not None:
            on_trial(seed, trial)
    matrices = [TrialMatrix(m, rows[m], list(seeds), list(pairs)) for m in METHODS]
    report = cv_report(matrices)
    ttest = paired_t_test(report.cv["ensemble"], report.cv["rbf"], alternative="greater")
    return matrices, report, ttest


def _fmt(x):
    return repr(float(x))


def emit_reports(matrices, report, ttest, out_dir):
    """Write distances.csv, cv.csv, histogram.csv and ttest.json into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "distances.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "pair", "distance"])
        for m in matrices:
            for si, seed in enumerate(m.seeds):
                for p in range(len(m.pairs)):
                    w.writerow([m.method, seed, p, _fmt(m.distances[si, p])])
    with open(out / "cv.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "pair", "cv"])
        for method, values in report.cv.items():
            for p, v in enumerate(values):
                w.writerow([method, p, _fmt(v)])
    with open(out / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "bin_lo", "bin_hi", "count"])
        edges = report.bin_edges
        for method, counts in report.counts.items():
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([method, _fmt(lo), _fmt(hi), int(c)])
    doc = {"t": ttest.t, "dof": ttest.dof, "p": ttest.p, "alternative": ttest.alternative}
    (out / "ttest.json").write_text(json.dumps(doc, indent=2) + "\n")
    return [out / n for n in ("distances.csv", "cv.csv", "histogram.csv", "ttest.json")]


def summary_line(report, ttest):
    return (
        f"method=ensemble mean_cv={report.mean_cv['ensemble']:.6g} "
        f"method=rbf mean_cv={report.mean_cv['rbf']:.6g} "
        f"t={ttest.t:.6g} p={ttest.p:.6g}"
    )
