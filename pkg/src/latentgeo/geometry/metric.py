"""Pull-back metrics, expected metrics and ensemble uncertainty fields."""

from __future__ import annotations

import numpy as np

from .. import tensor as tc
from ..tensor import Tensor


def reverse_jacobian(f, z):
    """Jacobian of ``f`` at the single point `z` by one batched reverse pass.

    The point is replicated once per output coordinate; summing the i-th
    output of the i-th replica and back-propagating yields row i of J in the
    i-th replica's adjoint.
    """
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    n_out = f(Tensor(z)).shape[1]
    batch = Tensor(np.repeat(z, n_out, axis=0), requires_grad=True)
    picked = tc.sum_(tc.multiply(f(batch), Tensor(np.eye(n_out))))
    (jac,) = tc.grad(picked, [batch])
    return jac


def jacobian(f, z):
    """J = df/dz at `z` (D x d). Uses ``f.jacobian`` when the map provides one."""
    if hasattr(f, "jacobian"):
        return f.jacobian(np.asarray(z, dtype=np.float64).reshape(1, -1))[0]
    return reverse_jacobian(f, z)


def pullback_metric(f, z):
    J = jacobian(f, z)
    return J.T @ J


def expected_metric(ensemble, z):
    members = list(getattr(ensemble, "members", ensemble))
    return sum(pullback_metric(m, z) for m in members) / len(members)


def expected_metrics(ensemble, points):
    """Batched expected metric for N points, shape N x d x d (members need ``jacobian``)."""
    members = list(getattr(ensemble, "members", ensemble))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    G = 0.0
    for m in members:
        J = m.jacobian(points)
        G = G + np.einsum("nia,nib->nab", J, J)
    return G / len(members)


def magnification(ensemble, points):
    """sqrt det E[G] at each point."""
    return np.sqrt(np.maximum(np.linalg.det(expected_metrics(ensemble, points)), 0.0))


def uncertainty_field(ensemble, points, chunk=4096):
    """Mean over pixels of the population std across members at each point."""
    members = list(getattr(ensemble, "members", ensemble))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = []
    for i in range(0, len(points), chunk):
        ys = np.stack([m.apply(points[i : i + chunk]) for m in members])
        # shifted by member 0 so that identical members give exactly zero
        dev = ys - ys[0]
        var = (dev**2).mean(axis=0) - dev.mean(axis=0) ** 2
        std = np.sqrt(np.maximum(var, 0.0))
        out.append(std.mean(axis=1))
    return np.concatenate(out) if out else np.zeros(0)
