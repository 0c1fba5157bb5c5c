"""Encoder, decoder ensemble, RBF precision network and the ELBO.

Parameters live in plain numpy arrays. Forward passes accept an optional list
of parameter tensors so training can differentiate through them; without it
the parameters enter the graph as constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .errors import ContractError, DimensionError
from .rng import derive_rng
from .tensor import Tensor

LOG_2PI = math.log(2.0 * math.pi)
ACTIVATIONS = ("identity", "sigmoid", "softplus", "tanh")


def _activate(x, tag):
    if tag == "identity":
        return x
    if tag == "sigmoid":
        return tc.sigmoid(x)
    if tag == "softplus":
        return tc.softplus(x)
    if tag == "tanh":
        return tc.tanh(x)
    raise ContractError(f"unknown activation {tag!r}")


def _activate_np(x, tag):
    return _activate(Tensor(x), tag).data


def _activation_slope(y, x, tag):
    """Derivative of the activation, given its input `x` and output `y`."""
    if tag == "identity":
        return np.ones_like(y)
    if tag == "sigmoid":
        return y * (1.0 - y)
    if tag == "softplus":
        return _activate_np(x, "sigmoid")
    return 1.0 - y * y


@dataclass
class Mlp:
    """Dense network with tanh hidden layers and a tagged output activation."""

    widths: list
    weights: list
    biases: list
    output: str = "identity"

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2:
            raise ContractError("an Mlp needs at least input and output widths")
        if self.output not in ACTIVATIONS:
            raise ContractError(f"unknown output activation {self.output!r}")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(1, -1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.widths[i], self.widths[i + 1])
            if w.shape != shape or b.shape != (1, shape[1]):
                raise DimensionError(f"layer {i}", w.shape, b.shape)

    @classmethod
    def init(cls, widths, output, rng, zero=False):
        """Glorot-normal weights and zero biases (all zeros when `zero`)."""
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            std = math.sqrt(2.0 / (n_in + n_out))
            w = np.zeros((n_in, n_out)) if zero else std * rng.standard_normal((n_in, n_out))
            weights.append(w)
            biases.append(np.zeros((1, n_out)))
        return cls(list(widths), weights, biases, output)

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, arrays):
        self.weights = [np.array(a) for a in arrays[0::2]]
        self.biases = [np.array(a) for a in arrays[1::2]]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    def copy(self):
        return Mlp(self.widths, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)

    def forward(self, x, params=None):
        """Apply the network to the rows of `x` (a Tensor or array of shape N x in)."""
        x = tc.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError("mlp", x.shape, (None, self.in_dim))
        if params is None:
            params = [Tensor(p) for p in self.params]
        n_layers = len(self.weights)
        h = x
        for i in range(n_layers):
            h = tc.matmul(h, params[2 * i]) + params[2 * i + 1]
            h = _activate(h, self.output if i == n_layers - 1 else "tanh")
        return h

    def __call__(self, x):
        return self.forward(x)

    def apply(self, x):
        """Plain numpy forward pass; `x` is N x in or a single vector."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        out = self.forward(x.reshape(1, -1) if single else x).data
        return out[0] if single else out

    def jacobian(self, z):
        """Jacobians d out / d in at each row of `z`, shape N x out x in.

        Forward-mode tangent propagation; costs one forward pass per input
        dimension and no graph.
        """
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.in_dim:
            raise DimensionError("jacobian", z.shape, (None, self.in_dim))
        h = z
        # tangent[n, :, a]: derivative of the current layer wrt input coordinate a
        tangent = np.broadcast_to(np.eye(self.in_dim), (len(z), self.in_dim, self.in_dim))
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            tag = self.output if i == n_layers - 1 else "tanh"
            h = _activate_np(pre, tag)
            tangent = np.einsum("nia,ik->nka", tangent, w) * _activation_slope(h, pre, tag)[:, :, None]
        return tangent


@dataclass
class Encoder:
    """Shared tanh trunk with a linear mean head and a softplus std head."""

    trunk: Mlp
    mean_head: Mlp
    std_head: Mlp

    @classmethod
    def init(cls, data_dim, hidden, latent_dim, rng, zero_heads=False):
        trunk = Mlp.init([data_dim, *hidden], "tanh", rng)
        mean_head = Mlp.init([hidden[-1], latent_dim], "identity", rng, zero=zero_heads)
        std_head = Mlp.init([hidden[-1], latent_dim], "softplus", rng, zero=zero_heads)
        return cls(trunk, mean_head, std_head)

    @property
    def params(self):
        return self.trunk.params + self.mean_head.params + self.std_head.params

    def set_params(self, arrays):
        n_t, n_m = len(self.trunk.params), len(self.mean_head.params)
        self.trunk.set_params(arrays[:n_t])
        self.mean_head.set_params(arrays[n_t : n_t + n_m])
        self.std_head.set_params(arrays[n_t + n_m :])

    @property
    def data_dim(self):
        return self.trunk.in_dim

    @property
    def latent_dim(self):
        return self.mean_head.out_dim

    def copy(self):
        return Encoder(self.trunk.copy(), self.mean_head.copy(), self.std_head.copy())


@dataclass
class DecoderEnsemble:
    """S decoders of identical architecture plus one learned observation std."""

    members: list
    sigma_x_raw: float = math.log(math.e - 1.0)

    def __post_init__(self):
        if not self.members:
            raise ContractError("a decoder ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if m.widths != first.widths or m.output != first.output:
                raise ContractError("ensemble members must share one architecture")

    def __len__(self):
        return len(self.members)

    def __getitem__(self, s):
        return self.members[s]

    @property
    def sigma_x(self):
        return float(np.logaddexp(0.0, self.sigma_x_raw))

    @property
    def latent_dim(self):
        return self.members[0].in_dim

    @property
    def data_dim(self):
        return self.members[0].out_dim

    def copy(self):
        return DecoderEnsemble([m.copy() for m in self.members], self.sigma_x_raw)


@dataclass
class RbfNet:
    """Precision model beta_j(z) = sum_k W_kj exp(-lambda_k |z - c_k|^2) + zeta."""

    centers: np.ndarray
    bandwidths: np.ndarray
    weights: np.ndarray
    zeta: float = 1e-4
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        self.bandwidths = np.asarray(self.bandwidths, dtype=np.float64).reshape(-1)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        k = len(self.centers)
        if self.bandwidths.shape != (k,) or self.weights.shape[0] != k:
            raise DimensionError("rbf", self.centers.shape, self.bandwidths.shape, self.weights.shape)
        if (self.bandwidths <= 0).any():
            raise ContractError("rbf bandwidths must be positive")
        if (self.weights < 0).any():
            raise ContractError("rbf weights must be non-negative")
        if not self.zeta > 0:
            raise ContractError("rbf floor zeta must be positive")

    @property
    def latent_dim(self):
        return self.centers.shape[1]

    @property
    def data_dim(self):
        return self.weights.shape[1]


def _rows(x, dim, kind):
    x = tc.as_tensor(x)
    if x.ndim == 1:
        x = tc.reshape(x, (1, -1))
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(kind, x.shape, (None, dim))
    return x


def encode(enc, x, params=None):
    """Posterior mean and std for each row of `x`."""
    x = _rows(x, enc.data_dim, "encode")
    if params is None:
        params = [Tensor(p) for p in enc.params]
    n_t, n_m = len(enc.trunk.params), len(enc.mean_head.params)
    h = enc.trunk.forward(x, params[:n_t])
    mu = enc.mean_head.forward(h, params[n_t : n_t + n_m])
    sigma = enc.std_head.forward(h, params[n_t + n_m :])
    return mu, sigma


def reparameterize(mu, sigma, eps):
    mu, sigma, eps = tc.as_tensor(mu), tc.as_tensor(sigma), tc.as_tensor(eps)
    if not mu.shape == sigma.shape == eps.shape:
        raise DimensionError("reparameterize", mu.shape, sigma.shape, eps.shape)
    return mu + sigma * eps


def decode(member, z, params=None):
    z = _rows(z, member.in_dim, "decode")
    return member.forward(z, params)


def kl_diag_gaussian(mu, sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)) per row; a 1-D input gives a scalar."""
    mu, sigma = tc.as_tensor(mu), tc.as_tensor(sigma)
    if mu.shape != sigma.shape:
        raise DimensionError("kl", mu.shape, sigma.shape)
    if (sigma.data <= 0).any():
        raise ContractError("kl_diag_gaussian requires sigma > 0")
    terms = tc.square(mu) + tc.square(sigma) - 1.0 - 2.0 * tc.log(sigma)
    axis = None if mu.ndim == 1 else -1
    return 0.5 * tc.sum_(terms, axis=axis)


def gaussian_log_likelihood(x, mean, sigma_x):
    """log N(x | mean, sigma_x^2 I) per row; `sigma_x` may be a scalar Tensor."""
    x, mean = tc.as_tensor(x), tc.as_tensor(mean)
    if x.shape != mean.shape:
        raise DimensionError("likelihood", x.shape, mean.shape)
    sigma_x = tc.as_tensor(sigma_x)
    dim = x.shape[-1]
    sq = tc.sum_(tc.square(x - mean), axis=-1)
    inv_var = tc.exp(-2.0 * tc.log(sigma_x))
    return -0.5 * dim * LOG_2PI - dim * tc.log(sigma_x) - 0.5 * sq * inv_var


def elbo(enc, member, sigma_x, x, eps, enc_params=None, dec_params=None):
    """Single-sample ELBO per row of `x` (shape N; N = 1 for a single vector)."""
    mu, sigma = encode(enc, x, enc_params)
    eps = tc.as_tensor(np.asarray(eps, dtype=np.float64).reshape(mu.shape))
    z = reparameterize(mu, sigma, eps)
    xhat = decode(member, z, dec_params)
    x = Tensor(np.asarray(tc.as_tensor(x).data).reshape(xhat.shape))
    return gaussian_log_likelihood(x, xhat, sigma_x) - kl_diag_gaussian(mu, sigma)


def kmeans(points, k, seed, iterations=100):
    """Seeded Lloyd iterations; empty clusters are re-seeded at the farthest point."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k > n:
        raise ContractError(f"cannot place {k} centers on {n} points")
    centers = points[derive_rng(seed, "kmeans").choice(n, size=k, replace=False)].copy()
    assign = None
    for _ in range(iterations):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new = dist.argmin(axis=1)
        for j in range(k):
            if not (new == j).any():
                far = dist[np.arange(n), new].argmax()
                new[far] = j
                dist[far] = np.inf
                dist[far, j] = 0.0
        centers = np.stack([points[new == j].mean(axis=0) for j in range(k)])
        if assign is not None and (new == assign).all():
            break
        assign = new
    return centers, new


def nnls_projected_gradient(phi, targets, tol=1e-8, max_iter=50_000):
    """Minimize |phi W - targets|^2 over W >= 0 by accelerated projected gradient.

    All columns of `targets` are solved jointly. Stops once the largest
    coordinate change falls below ``tol * max(1, max|W|)``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64).T).T
    gram = phi.T @ phi
    rhs = phi.T @ targets
    lipschitz = np.linalg.eigvalsh(gram).max()
    if lipschitz <= 0:
        return np.zeros((phi.shape[1], targets.shape[1])), 0
    w = np.maximum(np.linalg.lstsq(phi, targets, rcond=None)[0], 0.0)
    y, momentum = w.copy(), 1.0
    for it in range(1, max_iter + 1):
        w_next = np.maximum(y - (gram @ y - rhs) / lipschitz, 0.0)
        step = np.abs(w_next - w).max()
        m_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum**2))
        y = w_next + ((momentum - 1.0) / m_next) * (w_next - w)
        # restart momentum when the objective direction turns
        if np.sum((gram @ w_next - rhs) * (w_next - w)) > 0:
            y, m_next = w_next.copy(), 1.0
        w, momentum = w_next, m_next
        if step <= tol * max(1.0, np.abs(w).max()):
            return w, it
    return w, max_iter


def rbf_features(centers, bandwidths, z):
    """exp(-lambda_k |z_i - c_k|^2) as an N x K tensor, differentiable in `z`."""
    z = tc.as_tensor(z)
    c = np.asarray(centers)
    sq_z = tc.sum_(tc.square(z), axis=1, keepdims=True)
    cross = tc.matmul(z, Tensor(c.T))
    sq_dist = sq_z - 2.0 * cross + Tensor((c * c).sum(axis=1)[None, :])
    return tc.exp(-1.0 * (sq_dist * Tensor(np.asarray(bandwidths)[None, :])))


def rbf_precision(net, z):
    z = _rows(z, net.latent_dim, "rbf")
    return tc.matmul(rbf_features(net.centers, net.bandwidths, z), Tensor(net.weights)) + net.zeta


def rbf_sigma(net, z):
    """Per-pixel standard deviation beta(z)^(-1/2), shape N x D."""
    return tc.exp(-0.5 * tc.log(rbf_precision(net, z)))


def fit_rbf(encodings, residual_variances, k, zeta=1e-4, seed=0):
    """Fit an :class:`RbfNet` so that sigma(z) tracks reconstruction error near data.

    Centers come from k-means over `encodings`; each bandwidth is
    1 / (2 r^2) with r the mean member-to-center distance of its cluster;
    weights solve a non-negative least-squares fit to the clipped inverse
    residual variances.
    """
    z = np.asarray(encodings, dtype=np.float64)
    var = np.asarray(residual_variances, dtype=np.float64)
    if len(z) != len(var):
        raise DimensionError("fit_rbf", z.shape, var.shape)
    if k > len(z):
        raise ContractError(f"K={k} exceeds the {len(z)} available encodings")
    centers, assign = kmeans(z, k, seed)
    radii = np.array([np.linalg.norm(z[assign == j] - centers[j], axis=1).mean() for j in range(k)])
    radii = np.maximum(radii, 1e-6)
    bandwidths = 1.0 / (2.0 * radii**2)
    with np.errstate(divide="ignore"):
        targets = np.clip(1.0 / var, zeta, 1.0 / zeta)
    phi = rbf_features(centers, bandwidths, z).data
    weights, iterations = nnls_projected_gradient(phi, targets)
    return RbfNet(centers, bandwidths, weights, zeta, info={"nnls_iterations": iterations})


# -- checkpoints -----------------------------------------------------------


def _mlp_to_dict(m):
    return {
        "widths": m.widths,
        "output": m.output,
        "params": [p.ravel().tolist() for p in m.params],
    }


def _mlp_from_dict(d):
    widths = d["widths"]
    arrays = [np.asarray(p, dtype=np.float64) for p in d["params"]]
    weights = [a.reshape(widths[i], widths[i + 1]) for i, a in enumerate(arrays[0::2])]
    biases = [a.reshape(1, -1) for a in arrays[1::2]]
    return Mlp(widths, weights, biases, d["output"])


def checkpoint_dict(encoder, ensemble, rbf=None, seed=None, extra=None):
    doc = {
        "format": "latentgeo-checkpoint/1",
        "architecture": {
            "data_dim": ensemble.data_dim,
            "latent_dim": ensemble.latent_dim,
            "encoder_widths": encoder.trunk.widths if encoder else None,
            "decoder_widths": ensemble.members[0].widths,
            "ensemble_size": len(ensemble),
        },
        "seed": seed,
        "encoder": None
        if encoder is None
        else {k: _mlp_to_dict(getattr(encoder, k)) for k in ("trunk", "mean_head", "std_head")},
        "decoders": [_mlp_to_dict(m) for m in ensemble.members],
        "sigma_x_raw": ensemble.sigma_x_raw,
        "rbf": None
        if rbf is None
        else {
            "centers": rbf.centers.tolist(),
            "bandwidths": rbf.bandwidths.tolist(),
            "weights": rbf.weights.tolist(),
            "zeta": rbf.zeta,
        },
    }
    if extra:
        doc.update(extra)
    return doc


def parts_from_dict(doc):
    enc = doc.get("encoder")
    encoder = None if enc is None else Encoder(*(_mlp_from_dict(enc[k]) for k in ("trunk", "mean_head", "std_head")))
    ensemble = DecoderEnsemble([_mlp_from_dict(d) for d in doc["decoders"]], doc["sigma_x_raw"])
    r = doc.get("rbf")
    rbf = None if r is None else RbfNet(r["centers"], r["bandwidths"], r["weights"], r["zeta"])
    return encoder, ensemble, rbf


def save_json(doc, path):
    """Write `doc` as JSON; floats use repr so reals round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, allow_nan=False) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())
