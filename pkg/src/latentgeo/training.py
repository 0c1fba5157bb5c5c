"""Training loops for the decoder-ensemble VAE and the RBF baseline."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor as tc
from .errors import ContractError, NumericError, TrainingError
from .models import (
    DecoderEnsemble,
    Encoder,
    Mlp,
    checkpoint_dict,
    elbo,
    encode,
    fit_rbf,
    load_json,
    parts_from_dict,
    save_json,
)
from .rng import derive_rng
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ensemble_size: int = 8
    latent_dim: int = 2
    hidden: tuple = (128, 128)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.ensemble_size < 1:
            raise ContractError("ensemble_size must be at least 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if self.epochs < 0 or self.latent_dim < 1 or not self.hidden:
            raise ContractError("epochs >= 0, latent_dim >= 1 and at least one hidden layer are required")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class AdamState:
    params: list
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros(cls, params):
        params = [np.array(p, dtype=np.float64) for p in params]
        return cls(params, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(state, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns a new state and leaves `state` intact."""
    if len(grads) != len(state.params):
        raise ContractError(f"{len(grads)} gradients for {len(state.params)} parameters")
    step = state.step + 1
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    params, ms, vs = [], [], []
    for p, m, v, g in zip(state.params, state.m, state.v, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        ms.append(m)
        vs.append(v)
    return AdamState(params, ms, vs, step)


@dataclass
class TrainedModel:
    encoder: Encoder
    ensemble: DecoderEnsemble
    rbf: object = None
    log: list = field(default_factory=list)
    config: TrainConfig = None

    @property
    def latent_dim(self):
        return self.ensemble.latent_dim

    def encode_means(self, x, chunk=2048):
        """Posterior means for the rows of `x`."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = [encode(self.encoder, x[i : i + chunk])[0].data for i in range(0, len(x), chunk)]
        return np.concatenate(out) if out else np.zeros((0, self.latent_dim))

    def to_dict(self):
        return checkpoint_dict(
            self.encoder,
            self.ensemble,
            self.rbf,
            seed=None if self.config is None else self.config.seed,
            extra={
                "train_config": None if self.config is None else self.config.to_dict(),
                "training_log": list(self.log),
            },
        )

    @classmethod
    def from_dict(cls, doc):
        encoder, ensemble, rbf = parts_from_dict(doc)
        cfg = doc.get("train_config")
        return cls(encoder, ensemble, rbf, list(doc.get("training_log", [])), None if cfg is None else TrainConfig(**cfg))

    def save(self, path):
        save_json(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(load_json(path))


def write_training_log(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_elbo"])
        for epoch, value in enumerate(model.log, start=1):
            w.writerow([epoch, repr(float(value))])


def init_model(cfg, data_dim):
    encoder = Encoder.init(data_dim, list(cfg.hidden), cfg.latent_dim, derive_rng(cfg.seed, "encoder"))
    widths = [cfg.latent_dim, *cfg.hidden, data_dim]
    members = [Mlp.init(widths, "sigmoid", derive_rng(cfg.seed, "decoder", s)) for s in range(cfg.ensemble_size)]
    return encoder, DecoderEnsemble(members, math.log(math.e - 1.0))


def decoder_schedule(cfg, n_data):
    """The decoder index drawn for every minibatch, epoch by epoch."""
    rng = derive_rng(cfg.seed, "schedule")
    n_batches = -(-n_data // cfg.batch_size)
    return [rng.integers(cfg.ensemble_size, size=n_batches) for _ in range(cfg.epochs)]


def train_ensemble(cfg, ds, on_epoch=None):
    """Train one encoder and `cfg.ensemble_size` decoders.

    Each minibatch updates the encoder, the observation std and a single
    decoder drawn uniformly at random; the other members are untouched.
    """
    x_all = ds.images if hasattr(ds, "images") else np.asarray(ds, dtype=np.float64)
    n = len(x_all)
    if n == 0:
        raise ContractError("cannot train on an empty dataset")
    encoder, ensemble = init_model(cfg, x_all.shape[1])
    shuffle = derive_rng(cfg.seed, "shuffle")
    noise = derive_rng(cfg.seed, "noise")
    schedule = decoder_schedule(cfg, n)

    adam = dict(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    shared = AdamState.zeros(encoder.params + [np.array(ensemble.sigma_x_raw)])
    member_states = [AdamState.zeros(m.params) for m in ensemble.members]
    n_enc = len(encoder.params)

    history = []
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for b, s in enumerate(schedule[epoch]):
            rows = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            x = x_all[rows]
            eps = noise.standard_normal((len(rows), cfg.latent_dim))
            enc_t = [Tensor(p, requires_grad=True) for p in shared.params]
            dec_t = [Tensor(p, requires_grad=True) for p in member_states[s].params]
            try:
                terms = elbo(
                    encoder,
                    ensemble.members[s],
                    tc.softplus(enc_t[-1]),
                    x,
                    eps,
                    enc_params=enc_t[:n_enc],
                    dec_params=dec_t,
                )
                loss = -1.0 * tc.sum_(terms) / len(rows)
                grads = tc.backward(loss)
            except NumericError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b}", epoch + 1, b) from exc
            total += float(terms.data.sum())
            shared = adam_step(shared, [grads[t] for t in enc_t], **adam)
            member_states[s] = adam_step(member_states[s], [grads[t] for t in dec_t], **adam)
            encoder.set_params(shared.params[:n_enc])
            ensemble.members[s].set_params(member_states[s].params)
        ensemble.sigma_x_raw = float(shared.params[-1])
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch + 1, history[-1])
    log.debug("trained S=%d for %d epochs, final ELBO %.4f", cfg.ensemble_size, cfg.epochs, history[-1] if history else float("nan"))
    return TrainedModel(encoder, ensemble, None, history, cfg)


def residual_variances(model, x, chunk=2048):
    """Squared reconstruction residuals of the first decoder at posterior means."""
    x = np.asarray(x, dtype=np.float64)
    z = model.encode_means(x, chunk)
    xhat = np.concatenate([model.ensemble.members[0].apply(z[i : i + chunk]) for i in range(0, len(z), chunk)])
    return z, (x - xhat) ** 2


def train_rbf_baseline(cfg, ds, k=10, zeta=1e-4, on_epoch=None):
    """Single-decoder VAE followed by an RBF fit of its per-pixel precision."""
    if cfg.ensemble_size != 1:
        raise ContractError("the RBF baseline trains a single decoder (ensemble_size=1)")
    model = train_ensemble(cfg, ds, on_epoch)
    z, var = residual_variances(model, ds.images if hasattr(ds, "images") else ds)
    model.rbf = fit_rbf(z, var, k, zeta, seed=cfg.seed)
    return model


def baseline_config(cfg):
    return replace(cfg, ensemble_size=1)
