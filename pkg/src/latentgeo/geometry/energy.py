"""Discretized curve energies and lengths under learned metrics.

Every evaluator maps a batch of latent points to *features*: a list of
feature blocks ``Y`` and an optional per-point variance ``v``. The exact
squared length of a segment between points a and b is

    sum_blocks |Y_a - Y_b|^2 + v_a + v_b.

For a single decoder this is the squared chord in data space. For an
ensemble, ``Y`` is the member mean and ``v`` the total member variance, which
is the pair-averaged squared distance between independently drawn members.

Energies use ``T * sum(segments)`` so they converge to the continuous
integral as T grows; lengths use ``sum(sqrt(segments))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as tc
from ..errors import ContractError
from ..models import rbf_sigma
from ..tensor import Tensor


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    segments: np.ndarray
    T: int

    @classmethod
    def from_segments(cls, segments):
        seg = np.asarray(segments.data if isinstance(segments, Tensor) else segments, dtype=np.float64)
        return cls(float(len(seg) * seg.sum()), seg, len(seg))

    @property
    def length(self):
        return float(np.sqrt(np.maximum(self.segments, 0.0)).sum())


def _pair_segments(blocks, var, nxt, prv):
    seg = None
    for y in blocks:
        d = tc.sum_(tc.square(tc.take_rows(y, nxt) - tc.take_rows(y, prv)), axis=1)
        seg = d if seg is None else seg + d
    if var is not None:
        seg = seg + tc.take_rows(var, nxt) + tc.take_rows(var, prv)
    return seg


def _consecutive(n_points):
    return np.arange(1, n_points), np.arange(n_points - 1)


class Evaluator:
    """Base class: exact segments from features; stochastic ones override `segments`."""

    stochastic = False
    name = "evaluator"

    def features(self, points):
        raise NotImplementedError

    def exact_segments(self, points):
        blocks, var = self.features(points)
        return _pair_segments(blocks, var, *_consecutive(points.shape[0]))

    def segments(self, points, rng=None):
        return self.exact_segments(points)

    def pair_values(self, feats, a, b):
        """Exact segment values between the point index arrays `a` and `b` (numpy)."""
        blocks, var = feats
        out = np.zeros(len(a))
        for y in blocks:
            y = y.data if isinstance(y, Tensor) else y
            out += ((y[a] - y[b]) ** 2).sum(axis=1)
        if var is not None:
            v = var.data if isinstance(var, Tensor) else var
            out += v[a] + v[b]
        return out


class SingleEnergy(Evaluator):
    """Pull-back geometry of one deterministic map ``f`` (Tensor rows -> Tensor rows)."""

    name = "single"

    def __init__(self, f):
        self.f = f

    def features(self, points):
        return [self.f(points)], None


class EnsembleEnergy(Evaluator):
    """Expected metric of a decoder ensemble with decorrelated segment draws."""

    stochastic = True
    name = "ensemble"

    def __init__(self, members, collapse_identical=True):
        self.members = list(getattr(members, "members", members))
        if not self.members:
            raise ContractError("ensemble energy needs at least one member")
        # identical members: every draw gives the single-decoder value, so use it
        # directly (otherwise rounding noise in zero gradient directions drives Adam)
        first = self.members[0]
        self.degenerate = collapse_identical and all(
            m.widths == first.widths and m.output == first.output and all(np.array_equal(a, b) for a, b in zip(m.params, first.params))
            for m in self.members[1:]
        )

    def features(self, points):
        if self.degenerate:
            return [self.members[0](points)], None
        # deviations from member 0 keep identical members exactly degenerate
        outs = [m(points) for m in self.members]
        S = len(outs)
        if S == 1:
            return [outs[0]], None
        devs = [y - outs[0] for y in outs[1:]]
        shift = devs[0]
        for d in devs[1:]:
            shift = shift + d
        shift = shift / S
        var = tc.sum_(tc.square(shift), axis=1)
        for d in devs:
            var = var + tc.sum_(tc.square(d - shift), axis=1)
        return [outs[0] + shift], var / S

    def draws(self, n_segments, rng):
        """Member indices (for the later point, for the earlier point) of every segment."""
        S = len(self.members)
        pick = rng.integers(S, size=(2, n_segments))
        return pick[0], pick[1]

    def segments(self, points, rng=None, draws=None):
        """One-sample decorrelated estimate: segment t pairs f_s(gamma_{t+1}) with f_s'(gamma_t)."""
        n_seg = points.shape[0] - 1
        if draws is None:
            if rng is None:
                raise ContractError("decorrelated energy needs an rng or explicit draws")
            draws = self.draws(n_seg, rng)
        if self.degenerate:
            return self.exact_segments(points)
        s_next, s_prev = (np.asarray(d) for d in draws)
        nxt, prv = _consecutive(points.shape[0])
        need = np.concatenate([s_next, s_prev])
        rows = np.concatenate([nxt, prv])
        outputs, offset = [], 0
        position = np.empty(len(need), dtype=np.intp)
        for j, member in enumerate(self.members):
            mask = need == j
            if not mask.any():
                continue
            uniq, inverse = np.unique(rows[mask], return_inverse=True)
            outputs.append(member(tc.take_rows(points, uniq)))
            position[mask] = offset + inverse
            offset += len(uniq)
        stacked = tc.concat_rows(outputs)
        return tc.sum_(tc.square(tc.take_rows(stacked, position[:n_seg]) - tc.take_rows(stacked, position[n_seg:])), axis=1)


class RbfEnergy(Evaluator):
    """Metric J_mu^T J_mu + J_sigma^T J_sigma with sigma from an RBF precision net."""

    name = "rbf"

    def __init__(self, decoder, rbf):
        self.decoder = decoder
        self.rbf = rbf

    def features(self, points):
        return [self.decoder(points), rbf_sigma(self.rbf, points)], None


def energy_single(f, curve, T):
    _check_T(T)
    return EnergyReport.from_segments(SingleEnergy(f).exact_segments(curve.grid(T)))


def energy_ensemble_decorrelated(ensemble, curve, T, rng):
    _check_T(T)
    return EnergyReport.from_segments(EnsembleEnergy(ensemble).segments(curve.grid(T), rng))


def energy_ensemble_exact(ensemble, curve, T):
    _check_T(T)
    return EnergyReport.from_segments(EnsembleEnergy(ensemble).exact_segments(curve.grid(T)))


def energy_rbf(decoder, rbf, curve, T):
    _check_T(T)
    return EnergyReport.from_segments(RbfEnergy(decoder, rbf).exact_segments(curve.grid(T)))


def exact_report(evaluator, curve, T):
    _check_T(T)
    return EnergyReport.from_segments(evaluator.exact_segments(curve.grid(T)))


def curve_length(evaluator, curve, T):
    """Sum over segments of the square root of the exact segment value."""
    return exact_report(evaluator, curve, T).length


def _check_T(T):
    if T < 2:
        raise ContractError(f"need at least 2 segments, got T={T}")
