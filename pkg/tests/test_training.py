import numpy as np
import pytest

from latentgeo import tensor as tc
from latentgeo.datasets import synthetic_clusters
from latentgeo.errors import ContractError, TrainingError
from latentgeo.models import elbo
from latentgeo.rng import derive_rng
from latentgeo.tensor import Tensor
from latentgeo.training import (
    AdamState,
    TrainConfig,
    TrainedModel,
    adam_step,
    baseline_config,
    init_model,
    train_ensemble,
    train_rbf_baseline,
)
from latentgeo.models import rbf_sigma

SMALL = dict(epochs=3, batch_size=32, hidden=(8,), latent_dim=2)


@pytest.fixture(scope="module")
def blobs():
    return synthetic_clusters(3, 40, 9, 0.1, seed=0)


def test_adam_examples():
    st = AdamState.zeros([np.array([1.0, 2.0])])
    same = adam_step(st, [np.zeros(2)], lr=0.1)
    np.testing.assert_array_equal(same.params[0], [1.0, 2.0])
    one = adam_step(AdamState.zeros([np.array(0.0)]), [np.array(1.0)], lr=0.1)
    assert float(one.params[0]) == pytest.approx(-0.1, rel=1e-6)
    a, b = adam_step(st, [np.ones(2)]), adam_step(st, [np.ones(2)])
    np.testing.assert_array_equal(a.params[0], b.params[0])
    assert st.step == 0  # input state untouched


def test_adam_matches_reference_sequence():
    # hand-rolled bias-corrected Adam on f(x) = x^2
    x, m, v = 3.0, 0.0, 0.0
    st = AdamState.zeros([np.array(3.0)])
    for t in range(1, 6):
        g = 2 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        st = adam_step(st, [2 * st.params[0]], lr=0.05)
        assert float(st.params[0]) == pytest.approx(x, rel=1e-14)


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(ensemble_size=0)
    with pytest.raises(ContractError):
        TrainConfig(learning_rate=0.0)


def test_training_is_deterministic(blobs):
    cfg = TrainConfig(ensemble_size=3, seed=5, **SMALL)
    a, b = train_ensemble(cfg, blobs), train_ensemble(cfg, blobs)
    assert a.to_dict() == b.to_dict()
    assert len(a.log) == cfg.epochs


def test_members_have_distinct_parameters(blobs):
    m = train_ensemble(TrainConfig(ensemble_size=3, seed=1, **SMALL), blobs)
    w = [mem.weights[0] for mem in m.ensemble.members]
    assert not np.array_equal(w[0], w[1]) and not np.array_equal(w[1], w[2])


def test_single_member_matches_plain_vae_loop(blobs):
    cfg = TrainConfig(ensemble_size=1, seed=2, **SMALL)
    model = train_ensemble(cfg, blobs)
    # plain VAE loop with the same streams: one decoder, every batch updates everything
    encoder, ensemble = init_model(cfg, blobs.dim)
    dec = ensemble.members[0]
    shuffle, noise = derive_rng(cfg.seed, "shuffle"), derive_rng(cfg.seed, "noise")
    state = AdamState.zeros(encoder.params + [np.array(ensemble.sigma_x_raw)] + dec.params)
    n_enc = len(encoder.params)
    x_all = blobs.images
    for _ in range(cfg.epochs):
        order = shuffle.permutation(len(x_all))
        for start in range(0, len(x_all), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            eps = noise.standard_normal((len(rows), cfg.latent_dim))
            ts = [Tensor(p, requires_grad=True) for p in state.params]
            loss = -1.0 * tc.sum_(elbo(encoder, dec, tc.softplus(ts[n_enc]), x_all[rows], eps, ts[:n_enc], ts[n_enc + 1 :])) / len(rows)
            g = tc.backward(loss)
            state = adam_step(state, [g[t] for t in ts], lr=cfg.learning_rate)
            encoder.set_params(state.params[:n_enc])
            dec.set_params(state.params[n_enc + 1 :])
    for a, b in zip(model.ensemble.members[0].params, dec.params):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    for a, b in zip(model.encoder.params, encoder.params):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_elbo_improves_on_blobs(blobs):
    m = train_ensemble(TrainConfig(ensemble_size=2, seed=0, epochs=60, batch_size=32, hidden=(16,)), blobs)
    assert m.log[-1] > m.log[0]


def test_divergence_reports_epoch_and_batch(blobs):
    cfg = TrainConfig(ensemble_size=1, seed=0, epochs=2, batch_size=32, hidden=(8,), learning_rate=1e300)
    with pytest.raises(TrainingError) as info:
        train_ensemble(cfg, blobs)
    assert info.value.epoch >= 1 and info.value.batch >= 0


def test_rbf_baseline(blobs, tmp_path):
    cfg = baseline_config(TrainConfig(seed=0, epochs=20, batch_size=32, hidden=(16,)))
    assert cfg.ensemble_size == 1
    m = train_rbf_baseline(cfg, blobs, k=5, zeta=1e-4)
    assert len(m.rbf.centers) == 5
    far = rbf_sigma(m.rbf, np.array([1e3, 1e3])).data
    np.testing.assert_allclose(far, 100.0, rtol=1e-12)
    near = rbf_sigma(m.rbf, m.encode_means(blobs.images)).data
    assert near.max() <= 100.0
    with pytest.raises(ContractError):
        train_rbf_baseline(TrainConfig(ensemble_size=2, **SMALL), blobs)
    m.save(tmp_path / "rbf.json")
    again = TrainedModel.load(tmp_path / "rbf.json")
    assert again.to_dict() == m.to_dict()
