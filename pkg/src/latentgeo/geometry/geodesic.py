"""Geodesics by minimizing discretized curve energy over spline control points."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as tc
from ..errors import NumericError, OptimizationError
from ..tensor import Tensor
from ..training import AdamState, adam_step
from .energy import EnergyReport


@dataclass(frozen=True)
class GeodesicOptions:
    iterations: int = 500
    lr: float = 1e-2
    tolerance: float = 1e-6
    patience: int = 20
    T: int = 128


@dataclass
class GeodesicResult:
    curve: object
    report: EnergyReport
    length: float
    iterations: int
    trace: list = field(default_factory=list)


def minimize_geodesic(evaluator, init, options=None, rng=None):
    """Adam on the interior control points of `init`; endpoints never move.

    Stochastic evaluators draw fresh member pairs every iteration. The exact
    energy is evaluated at every iterate and the best curve seen is returned,
    so the result is never worse than `init`. Optimization stops after
    ``options.iterations`` steps, or once the best exact energy has improved
    by less than ``tolerance * max(1, best)`` over the last ``patience``
    iterations.
    """
    opt = options or GeodesicOptions()
    if evaluator.stochastic and rng is None:
        rng = np.random.default_rng(0)
    state = AdamState.zeros([init.controls])
    best_energy, best_controls, best_segments = np.inf, init.controls, None
    trace = []
    it = 0
    for it in range(opt.iterations + 1):
        controls = Tensor(state.params[0], requires_grad=True)
        try:
            points = init.grid(opt.T, controls)
            if evaluator.stochastic:
                exact = evaluator.exact_segments(Tensor(points.data))
                seg = evaluator.segments(points, rng)
            else:
                seg = exact = evaluator.exact_segments(points)
        except NumericError as exc:
            raise OptimizationError(f"non-finite energy at iteration {it}", it) from exc
        energy = opt.T * float(exact.data.sum())
        if not np.isfinite(energy):
            raise OptimizationError(f"non-finite energy at iteration {it}", it)
        if energy < best_energy:
            best_energy, best_controls, best_segments = energy, state.params[0].copy(), exact.data.copy()
        trace.append(best_energy)
        if it == opt.iterations:
            break
        if it >= opt.patience:
            before = trace[-1 - opt.patience]
            if before - best_energy < opt.tolerance * max(1.0, abs(best_energy)):
                break
        loss = opt.T * tc.sum_(seg)
        (g,) = tc.grad(loss, [controls])
        if not np.isfinite(g).all():
            raise OptimizationError(f"non-finite gradient at iteration {it}", it)
        state = adam_step(state, [g], lr=opt.lr)
    curve = init.with_controls(best_controls)
    report = EnergyReport.from_segments(best_segments)
    return GeodesicResult(curve, report, report.length, it, trace)
