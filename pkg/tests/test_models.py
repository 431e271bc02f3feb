import numpy as np
import pytest

from ctvae.data import BlobSpec, Dataset, make_blobs
from ctvae.models import (
    TABLE3_ARCH,
    ArchSpec,
    AutoEncoder,
    ConstrainedTwinVAE,
    TrainConfig,
    TwinVAE,
    VariationalAutoEncoder,
    build_network,
    extract,
    load_model,
    loss_and_grads,
    parameters,
    save_model,
    train,
)
from ctvae.losses import ae_loss, ctvae_loss, tvae_loss
from ctvae.priors import fit_priors

from _helpers import model_gradcheck, perturbed_network


@pytest.mark.parametrize("kind", ["ae", "vae", "tvae"])
@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_baseline_gradients(kind, act):
    rng = np.random.default_rng(21)
    err = model_gradcheck(kind, ArchSpec(6, 3, 2, 3, 4), rng, activation=act)
    assert err.max() < 1e-4


def test_ctvae_gradients_on_spec_shape():
    rng = np.random.default_rng(22)
    pri = fit_priors(rng.random((30, 6)), np.repeat([0, 1, 2], 10), 2, 1.5)
    err = model_gradcheck("ctvae", ArchSpec(6, 3, 2, 3, 3), rng, n=6, priors=pri, labels=np.array([0, 1, 2, 0, 1, 2]))
    assert err.max() < 1e-4


def forward_values(kind, rng, betas=(1.0, 1.0, 1.0, 1.0)):
    arch = ArchSpec(5, 4, 2, 4, 3)
    net = perturbed_network(kind, arch, rng)
    X = rng.random((6, 5))
    eta = rng.standard_normal((6, 2))
    y = np.array([0, 1, 0, 1, 0, 1])
    pri = fit_priors(rng.random((10, 5)), np.repeat([0, 1], 5), 2, 2.0)
    loss, _, v = loss_and_grads(net, kind, X, eta, y, pri, betas, need_grad=False)
    return loss, v, X, y, pri


def test_training_losses_agree_with_loss_functions(rng):
    loss, v, X, _, _ = forward_values("ae", rng)
    assert abs(loss - ae_loss(X, v["x_hat"])) < 1e-12
    loss, v, X, _, _ = forward_values("tvae", rng)
    assert abs(loss - tvae_loss(X, v["x_hat"], v["z"], v["z_hat"], v["mu"], v["logvar"])) < 1e-12
    betas = (0.5, 2.0, 1.5, 0.25)
    loss, v, X, y, pri = forward_values("ctvae", rng, betas)
    ref = ctvae_loss(X, v["x_hat"], v["z"], v["z_hat"], v["mu"], v["logvar"], y, pri, betas)
    assert abs(loss - ref) < 1e-12


def test_zero_betas_reduce_to_reconstruction(rng):
    loss, v, X, _, _ = forward_values("ctvae", rng, (0.0, 0.0, 0.0, 0.0))
    assert abs(loss - ae_loss(X, v["x_hat"])) < 1e-12


def test_each_beta_toggles_one_term(rng):
    seed = 99
    base, v, X, y, pri = forward_values("ctvae", np.random.default_rng(seed), (0, 0, 0, 0))
    t = pri.mu_hat[y]
    terms = [
        np.mean(np.sum((v["z"] - v["z_hat"]) ** 2, 1)),
        np.mean(0.5 * np.sum(-1 - v["logvar"] + v["mu"] ** 2 + np.exp(v["logvar"]), 1)),
        np.mean(np.sum((v["z"] - t) ** 2, 1)),
        np.mean(np.sum((v["z_hat"] - t) ** 2, 1)),
    ]
    for k in range(4):
        betas = [0.0] * 4
        betas[k] = 1.0
        loss = forward_values("ctvae", np.random.default_rng(seed), tuple(betas))[0]
        assert abs((loss - base) - terms[k]) < 1e-10


def test_arch_auto_and_table3():
    assert ArchSpec.auto(115) == ArchSpec(115, 57, 10, 57, 57)
    assert TABLE3_ARCH.d_z == 10
    with pytest.raises(ValueError):
        ArchSpec(3, 0, 1, 1, 1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_table3_extraction_width(rng):
    X = rng.random((40, 115))
    y = np.repeat([0, 1], 20)
    m = ConstrainedTwinVAE(latent_dim=10, hidden=50, epochs=1, scale=1.0).fit(X, y)
    assert m.transform(X).shape == (40, 10)


def small_blobs():
    return make_blobs(BlobSpec(n_train=300, n_test=90, d=4, seed=2))


def test_ctvae_loss_decreases_and_deterministic():
    tr, _ = small_blobs()
    kw = dict(latent_dim=2, hidden=6, epochs=200, lr=1e-2, batch_size=50, scale=1.0, activation="tanh", seed=4)
    a = ConstrainedTwinVAE(**kw).fit(tr.features, tr.labels)
    b = ConstrainedTwinVAE(**kw).fit(tr.features, tr.labels)
    assert a.loss_history_[-1] < a.loss_history_[0]
    assert np.array_equal(a.loss_history_, b.loss_history_)


def test_ae_memorizes_single_point():
    X = np.tile(np.array([[0.2, 0.7, 0.4, 0.9]]), (10, 1))
    m = AutoEncoder(latent_dim=2, epochs=500, batch_size=10, lr=1e-2, seed=0).fit(X)
    assert np.mean(np.sum((m.reconstruct(X) - X) ** 2, axis=1)) < 1e-3


def test_extract_semantics():
    tr, te = small_blobs()
    cfg = TrainConfig(epochs=3, batch_size=50)
    pri = fit_priors(tr.features, tr.labels, 2, 1.0)
    for kind, tag in (("ae", "latent-z"), ("vae", "latent-mu"), ("tvae", "reconstruction-zhat"), ("ctvae", "reconstruction-zhat")):
        model, hist = train(kind, tr, pri if kind == "ctvae" else None, cfg, latent_dim=2)
        assert len(hist) == 3
        r1, r2 = extract(model, te), extract(model, te)
        assert r1.source == tag and np.array_equal(r1.matrix, r2.matrix)
        assert r1.matrix.shape == (te.n, 2)
    # the twin representation is the decoder applied to raw features
    from ctvae.nn import forward

    np.testing.assert_array_equal(model.transform(te.features), forward(model.network_["decoder"], te.features)[0])


def test_extract_ignores_labels():
    tr, te = small_blobs()
    m = ConstrainedTwinVAE(latent_dim=2, epochs=2, scale=1.0).fit(tr.features, tr.labels)
    shuffled = Dataset(te.features, np.zeros(te.n, dtype=int))
    np.testing.assert_array_equal(extract(m, te).matrix, extract(m, shuffled).matrix)


def test_errors():
    tr, _ = small_blobs()
    with pytest.raises(ValueError):
        train("ctvae", tr)
    with pytest.raises(ValueError):
        train("ae", Dataset(np.zeros((0, 3)), np.zeros(0)))
    with pytest.raises(ValueError):
        ConstrainedTwinVAE(epochs=1).fit(tr.features)
    m = AutoEncoder(epochs=1).fit(tr.features)
    with pytest.raises(ValueError):
        m.transform(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        AutoEncoder(epochs=1, betas=(1, 1, -1, 1)).fit(tr.features)


def test_mc_samples_and_estimator_api():
    tr, _ = small_blobs()
    m = VariationalAutoEncoder(epochs=2, mc_samples=3)
    assert m.get_params()["mc_samples"] == 3
    m.fit(tr.features)
    assert np.isfinite(m.loss_history_).all()
    assert TwinVAE().set_params(lr=0.5).lr == 0.5


@pytest.mark.parametrize("kind", ["ae", "vae", "tvae", "ctvae"])
def test_model_file_roundtrip(tmp_path, kind):
    from ctvae.data import fit_normalizer

    tr, te = small_blobs()
    cls = {"ae": AutoEncoder, "vae": VariationalAutoEncoder, "tvae": TwinVAE, "ctvae": ConstrainedTwinVAE}[kind]
    m = cls(epochs=2, latent_dim=2, scale=1.0) if kind == "ctvae" else cls(epochs=2, latent_dim=2)
    m.fit(tr.features, tr.labels if kind == "ctvae" else None)
    norm = fit_normalizer(tr).to_normalizer()
    save_model(tmp_path / "a.ctv", m, norm)
    save_model(tmp_path / "b.ctv", m, norm)
    assert (tmp_path / "a.ctv").read_bytes() == (tmp_path / "b.ctv").read_bytes()
    back, bnorm = load_model(tmp_path / "a.ctv")
    np.testing.assert_array_equal(back.transform(te.features), m.transform(te.features))
    np.testing.assert_array_equal(bnorm.data_min_, norm.data_min_)
    if kind == "ctvae":
        np.testing.assert_array_equal(back.priors_.mu_hat, m.priors_.mu_hat)


def test_model_file_rejects_garbage(tmp_path):
    (tmp_path / "x.ctv").write_bytes(b"not a model")
    with pytest.raises(ValueError):
        load_model(tmp_path / "x.ctv")
