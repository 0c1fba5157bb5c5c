"""Natural cubic spline curves with pinned endpoints."""

from __future__ import annotations

import numpy as np

from .. import tensor as tc
from ..errors import ContractError, DimensionError
from ..tensor import Tensor


def natural_spline_basis(knots, ts):
    """Matrix B with ``B @ y`` the natural cubic interpolant of (knots, y) at `ts`.

    Rows for `ts` that coincide with a knot are exact unit vectors.
    """
    x = np.asarray(knots, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    n = len(x)
    h = np.diff(x)
    # second derivatives M = L y, with M_0 = M_{n-1} = 0
    L = np.zeros((n, n))
    if n > 2:
        A = np.zeros((n - 2, n - 2))
        rhs = np.zeros((n - 2, n))
        for i in range(1, n - 1):
            r = i - 1
            A[r, r] = (h[i - 1] + h[i]) / 3.0
            if r > 0:
                A[r, r - 1] = h[i - 1] / 6.0
            if r < n - 3:
                A[r, r + 1] = h[i] / 6.0
            rhs[r, i + 1] += 1.0 / h[i]
            rhs[r, i] -= 1.0 / h[i] + 1.0 / h[i - 1]
            rhs[r, i - 1] += 1.0 / h[i - 1]
        L[1:-1] = np.linalg.solve(A, rhs)

    seg = np.clip(np.searchsorted(x, ts, side="right") - 1, 0, n - 2)
    B = np.zeros((len(ts), n))
    for row, (t, i) in enumerate(zip(ts, seg)):
        hit = np.flatnonzero(x == t)
        if hit.size:
            B[row, hit[0]] = 1.0
            continue
        a = (x[i + 1] - t) / h[i]
        b = (t - x[i]) / h[i]
        B[row, i] += a
        B[row, i + 1] += b
        B[row] += ((a**3 - a) * L[i] + (b**3 - b) * L[i + 1]) * h[i] ** 2 / 6.0
    return B


class SplineCurve:
    """Latent curve through z0, K interior control points and z1.

    Knots are equispaced, ``t_k = k / (K + 1)``; interpolation is a natural
    cubic spline per latent dimension.
    """

    def __init__(self, z0, z1, controls):
        self.z0 = np.array(z0, dtype=np.float64).reshape(-1)
        self.z1 = np.array(z1, dtype=np.float64).reshape(-1)
        self.controls = np.array(controls, dtype=np.float64)
        if self.controls.ndim != 2 or self.controls.shape[0] < 1:
            raise ContractError("a spline curve needs at least one interior control point")
        if not self.z0.shape == self.z1.shape == self.controls.shape[1:]:
            raise DimensionError("spline", self.z0.shape, self.z1.shape, self.controls.shape)
        self._basis = {}

    @property
    def n_controls(self):
        return self.controls.shape[0]

    @property
    def dim(self):
        return self.z0.size

    @property
    def knots(self):
        k = self.n_controls
        return np.arange(k + 2) / (k + 1)

    def with_controls(self, controls):
        curve = SplineCurve(self.z0, self.z1, controls)
        curve._basis = self._basis
        return curve

    def basis(self, ts):
        key = tuple(np.asarray(ts, dtype=np.float64).tolist())
        if key not in self._basis:
            self._basis[key] = natural_spline_basis(self.knots, ts)
        return self._basis[key]

    def points(self, ts, controls=None):
        """Curve values at times `ts` as a len(ts) x d Tensor.

        `controls` may be a Tensor so the result is differentiable in the
        control points; by default the stored ones are used.
        """
        ts = np.asarray(ts, dtype=np.float64)
        if ts.size and (ts.min() < 0 or ts.max() > 1):
            raise ContractError("curve parameter t must lie in [0, 1]")
        B = self.basis(ts)
        # offsets from z0: basis rows sum to one, so equal points stay exactly equal
        c = Tensor(self.controls) if controls is None else controls
        fixed = self.z0 + B[:, -1:] * (self.z1 - self.z0)
        fixed[B[:, -1] == 1.0] = self.z1
        return tc.matmul(Tensor(B[:, 1:-1]), c - Tensor(self.z0)) + Tensor(fixed)

    def grid(self, T, controls=None):
        """The T + 1 points gamma(t / T), t = 0..T."""
        return self.points(np.arange(T + 1) / T, controls)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = self.points(np.atleast_1d(t)).data
        return out[0] if t.ndim == 0 else out


def straight_line_curve(z0, z1, n_controls=8):
    if n_controls < 1:
        raise ContractError("need at least one control point")
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    z1 = np.asarray(z1, dtype=np.float64).reshape(-1)
    t = (np.arange(1, n_controls + 1) / (n_controls + 1))[:, None]
    return SplineCurve(z0, z1, (1.0 - t) * z0 + t * z1)


def spline_eval(curve, t):
    if not 0.0 <= float(t) <= 1.0:
        raise ContractError(f"t={t} outside [0, 1]")
    return curve(float(t))
