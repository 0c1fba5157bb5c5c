"""Command-line entry point: ``latentgeo <command> CONFIG [--out DIR]``.

Commands: train, geodesic, grid, cv-experiment, oracle-check. All settings
come from the JSON config (see :mod:`latentgeo.config`); only paths and the
command word are given as arguments.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_config, write_effective
from .datasets import datasets_from_config
from .errors import CapabilityError, ConfigError, ContractError, LatentGeoError
from .evaluation import (
    draw_pairs,
    emit_reports,
    evaluator_for,
    geodesic_distance,
    run_cv_experiment,
    summary_line,
)
from .geometry import grid_graph_geodesic, magnification, uncertainty_field
from .models import DecoderEnsemble, Encoder, Mlp
from .rng import derive_rng
from .training import TrainConfig, TrainedModel, baseline_config, train_ensemble, train_rbf_baseline, write_training_log

log = logging.getLogger("latentgeo")

CURVE_SAMPLES = 256
TRAIN_KEYS = ("epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "ensemble_size", "latent_dim", "hidden", "seed")


def train_config(model_block):
    return TrainConfig(**{k: model_block[k] for k in TRAIN_KEYS})


def _fmt(x):
    return repr(float(x))


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def debug_model(kind, cfg, data_dim):
    """Hand-built checkpoints with known geometry, for test harnesses."""
    rng = derive_rng(cfg.seed, "debug", kind)
    d, S = cfg.latent_dim, cfg.ensemble_size
    if kind == "identity":
        member = Mlp([d, d], [np.eye(d)], [np.zeros((1, d))], "identity")
        data_dim = d
    elif kind == "constant":
        member = Mlp([d, data_dim], [np.zeros((d, data_dim))], [rng.normal(size=(1, data_dim))], "sigmoid")
    elif kind == "identical":
        member = Mlp.init([d, *cfg.hidden, data_dim], "sigmoid", rng)
    else:
        raise ContractError(f"unknown debug model {kind!r}")
    encoder = Encoder.init(data_dim, list(cfg.hidden), d, derive_rng(cfg.seed, "encoder"))
    return TrainedModel(encoder, DecoderEnsemble([member.copy() for _ in range(S)]), None, [], cfg)


def cmd_train(cfg, debug=None):
    out = Path(cfg["output"])
    train, _ = datasets_from_config(cfg["dataset"])
    tc = train_config(cfg["model"])
    written = []
    if debug:
        model = debug_model(debug, tc, train.dim)
        model.save(out / "ensemble.json")
        written.append(out / "ensemble.json")
    else:
        if cfg["model"]["ensemble"]:
            model = train_ensemble(tc, train)
            model.save(out / "ensemble.json")
            write_training_log(model, out / "ensemble_log.csv")
            written += [out / "ensemble.json", out / "ensemble_log.csv"]
        if cfg["model"]["rbf"]:
            model = train_rbf_baseline(baseline_config(tc), train, cfg["model"]["rbf_centers"], cfg["model"]["rbf_zeta"])
            model.save(out / "rbf.json")
            write_training_log(model, out / "rbf_log.csv")
            written += [out / "rbf.json", out / "rbf_log.csv"]
    write_effective(cfg, out)
    return written


def _latent(spec, model, test, pointer):
    if isinstance(spec, dict):
        if test is None:
            raise ConfigError([(pointer, "an index endpoint needs a dataset block")])
        if spec["index"] >= len(test):
            raise ConfigError([(pointer + "/index", f"index out of range for a test set of {len(test)}")])
        return model.encode_means(test.images[spec["index"]])[0]
    z = np.asarray(spec, dtype=np.float64)
    if z.size != model.latent_dim:
        raise ConfigError([(pointer, f"expected {model.latent_dim} latent coordinates")])
    return z


def cmd_geodesic(cfg):
    out = Path(cfg["output"])
    model = TrainedModel.load(cfg["checkpoint"])
    test = datasets_from_config(cfg["dataset"])[1] if "dataset" in cfg else None
    z0 = _latent(cfg["z0"], model, test, "/z0")
    z1 = _latent(cfg["z1"], model, test, "/z1")
    evaluator = evaluator_for(model, cfg["method"])
    res = geodesic_distance(evaluator, z0, z1, cfg["geometry"], derive_rng(cfg["seed"], "geodesic"))
    out.mkdir(parents=True, exist_ok=True)
    ts = np.linspace(0.0, 1.0, CURVE_SAMPLES)
    pts = res.curve(ts)
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"z{i + 1}" for i in range(pts.shape[1])])
        for t, p in zip(ts, pts):
            w.writerow([_fmt(t)] + [_fmt(v) for v in p])
    summary = {
        "method": cfg["method"],
        "length": res.length,
        "energy": res.report.energy,
        "iterations": res.iterations,
        "z0": z0.tolist(),
        "z1": z1.tolist(),
    }
    _write_json(out / "summary.json", summary)
    write_effective(cfg, out)
    return summary


def _grid_points(bounds, m):
    (lo1, hi1), (lo2, hi2) = bounds
    g1, g2 = np.linspace(lo1, hi1, m), np.linspace(lo2, hi2, m)
    return np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)


def grid_field(model, bounds, resolution, field):
    if model.latent_dim != 2:
        raise CapabilityError(f"grid fields need a 2-D latent space, checkpoint has d={model.latent_dim}")
    pts = _grid_points(bounds, resolution)
    values = uncertainty_field(model.ensemble, pts) if field == "uncertainty" else magnification(model.ensemble, pts)
    return pts, values


def cmd_grid(cfg):
    out = Path(cfg["output"])
    model = TrainedModel.load(cfg["checkpoint"])
    pts, values = grid_field(model, cfg["bounds"], cfg["resolution"], cfg["field"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z1", "z2", "value"])
        for (a, b), v in zip(pts, values):
            w.writerow([_fmt(a), _fmt(b), _fmt(v)])
    write_effective(cfg, out)
    return values


def oracle_rows(model, method, pairs, bounds, resolution, geometry, seed, anchors=None):
    """Spline geodesic vs grid shortest path for random pairs inside `bounds`."""
    if model.latent_dim != 2:
        raise CapabilityError("the grid oracle needs a 2-D latent space")
    evaluator = evaluator_for(model, method)
    rng = derive_rng(seed, "oracle-pairs")
    (lo1, hi1), (lo2, hi2) = bounds
    g1, g2 = np.linspace(lo1, hi1, resolution), np.linspace(lo2, hi2, resolution)

    def snap(z):
        return np.array([g1[np.abs(g1 - z[0]).argmin()], g2[np.abs(g2 - z[1]).argmin()]])

    rows = []
    for p in range(pairs):
        # endpoints sit on grid nodes so both methods connect the same points
        if anchors is not None:
            i, j = rng.choice(len(anchors), size=2, replace=False)
            z0, z1 = snap(anchors[i]), snap(anchors[j])
        else:
            margin = resolution // 10
            i0, j0, i1, j1 = rng.integers(margin, resolution - margin, size=4)
            z0, z1 = np.array([g1[i0], g2[j0]]), np.array([g1[i1], g2[j1]])
        spline = geodesic_distance(evaluator, z0, z1, geometry, derive_rng(seed, "oracle-geodesic", p)).length
        graph = grid_graph_geodesic(evaluator, bounds, resolution, z0, z1)
        gap = 0.0 if spline == graph == 0.0 else abs(spline - graph) / max(graph, spline)
        rows.append({"pair": p, "z0": z0, "z1": z1, "spline_length": spline, "graph_length": graph, "relative_gap": gap})
    return rows


def cmd_oracle_check(cfg):
    out = Path(cfg["output"])
    model = TrainedModel.load(cfg["checkpoint"])
    anchors = None
    bounds = cfg["bounds"]
    if "dataset" in cfg:
        train, _ = datasets_from_config(cfg["dataset"])
        anchors = model.encode_means(train.images)
        if bounds is None:
            lo, hi = anchors.min(axis=0), anchors.max(axis=0)
            pad = 0.1 * (hi - lo)
            bounds = [[float(lo[0] - pad[0]), float(hi[0] + pad[0])], [float(lo[1] - pad[1]), float(hi[1] + pad[1])]]
    if bounds is None:
        raise ConfigError([("/bounds", "required when no dataset block is given")])
    rows = oracle_rows(model, cfg["method"], cfg["pairs"], bounds, cfg["resolution"], cfg["geometry"], cfg["seed"], anchors)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "z0_1", "z0_2", "z1_1", "z1_2", "spline_length", "graph_length", "relative_gap"])
        for r in rows:
            w.writerow([r["pair"], *map(_fmt, r["z0"]), *map(_fmt, r["z1"]), _fmt(r["spline_length"]), _fmt(r["graph_length"]), _fmt(r["relative_gap"])])
    gaps = [r["relative_gap"] for r in rows]
    summary = {"median_gap": float(np.median(gaps)), "max_gap": float(np.max(gaps)), "within_5pct": int(sum(g <= 0.05 for g in gaps)), "pairs": len(rows), "bounds": bounds}
    _write_json(out / "oracle_summary.json", summary)
    write_effective(cfg, out)
    return rows


def cmd_cv_experiment(cfg):
    out = Path(cfg["output"])
    train, test = datasets_from_config(cfg["dataset"])
    exp = cfg["experiment"]
    pairs = draw_pairs(len(test), exp["pairs"], exp["master_seed"])
    write_effective(cfg, out)

    def progress(seed, trial):
        log.info("seed %s done: ensemble mean %.4g, rbf mean %.4g", seed, np.mean(trial["ensemble"]), np.mean(trial["rbf"]))

    matrices, report, ttest = run_cv_experiment(
        exp["seeds"],
        pairs,
        train_config(cfg["model"]),
        train,
        test.images,
        cfg["geometry"],
        cfg["model"]["rbf_centers"],
        cfg["model"]["rbf_zeta"],
        trial_dir=out / "trials",
        on_trial=progress,
    )
    emit_reports(matrices, report, ttest, out)
    line = summary_line(report, ttest)
    print(line)
    return matrices, report, ttest


COMMANDS = {
    "train": cmd_train,
    "geodesic": cmd_geodesic,
    "grid": cmd_grid,
    "cv-experiment": cmd_cv_experiment,
    "oracle-check": cmd_oracle_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="latentgeo", description="Decoder-ensemble latent geometry.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", type=Path, help="JSON run config")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides config 'output')")
        if name == "train":
            p.add_argument("--debug-model", choices=["identity", "constant", "identical"], help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command, args.out)
        if args.command == "train":
            cmd_train(cfg, args.debug_model)
        else:
            COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LatentGeoError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
