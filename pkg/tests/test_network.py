import numpy as np
import pytest

from chargeplan.predictor import Architecture, DemandNetwork, PredictorModel
from chargeplan.predictor import layers as L
from chargeplan.predictor.network import init_buffers, init_params


def tiny_arch(**kw):
    base = dict(lam=3, d=4, T=3, conv_channels=(2, 3), profile_widths=(4, 3), demand_widths=(5, 4),
                embed_dim=2, domain_width=4, dropout=0.0)
    base.update(kw)
    return Architecture(**base)


def net_for(arch, seed=0):
    return DemandNetwork(arch, init_params(arch, np.random.default_rng(seed)), init_buffers(arch))


def zero(params, prefix):
    for k in params:
        if k.startswith(prefix):
            params[k][...] = 0.0


def test_zero_conv_gives_zero_context_vector():
    net = net_for(tiny_arch())
    zero(net.params, "conv")
    fc = np.random.default_rng(1).random((4, 3, 4))
    assert np.array_equal(net.context_forward(fc), np.zeros((4, 3)))


def test_single_cell_forward_by_hand():
    # 1x1 map, one channel, no batch norm: only the kernel centers matter
    arch = tiny_arch(lam=1, d=1, conv_channels=(1, 1), batch_norm=False)
    net = net_for(arch)
    zero(net.params, "att")
    net.params["conv1_w"][...] = 0.0
    net.params["conv1_w"][0, 0, 1, 1] = 2.0
    net.params["conv1_b"][...] = 0.5
    net.params["conv2_w"][...] = 0.0
    net.params["conv2_w"][0, 0, 1, 1] = 3.0
    net.params["conv2_b"][...] = -1.0
    out = net.context_forward(np.array([[[1.5]]]))
    # relu(2 * 1.5 + 0.5) = 3.5, attention residual keeps it, relu(3 * 3.5 - 1) = 9.5
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(9.5)


def test_context_forward_is_deterministic():
    net = net_for(tiny_arch())
    fc = np.random.default_rng(2).random((1, 3, 4))
    both = net.context_forward(np.concatenate([fc, fc]))
    assert np.array_equal(both[0], both[1])
    assert np.array_equal(net.context_forward(fc), net.context_forward(fc))


def test_attention_zero_params_is_identity():
    p = {k: np.zeros(3) for k in ("att_w1", "att_w2", "att_w3", "att_wa", "att_ba")}
    p.update({k: np.zeros(1) for k in ("att_b1", "att_b2", "att_b3")})
    e = np.random.default_rng(3).random((2, 3, 4, 5))
    out, cache = L.attention_forward(e, p)
    assert np.array_equal(out, e)
    a = cache[4]
    assert np.allclose(a.sum(axis=2), 1.0)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(4)
    p = {k: rng.standard_normal(3) for k in ("att_w1", "att_w2", "att_w3", "att_wa", "att_ba")}
    p.update({k: rng.standard_normal(1) for k in ("att_b1", "att_b2", "att_b3")})
    _, cache = L.attention_forward(rng.standard_normal((2, 3, 3, 2)) * 5, p)
    assert np.allclose(cache[4].sum(axis=2), 1.0)


def test_attention_two_positions_by_hand():
    # one channel, grid of two positions with values 1 and 2
    p = {"att_w1": np.array([1.0]), "att_w2": np.array([0.5]), "att_w3": np.array([2.0]),
         "att_wa": np.array([1.0]), "att_ba": np.array([0.0]),
         "att_b1": np.zeros(1), "att_b2": np.zeros(1), "att_b3": np.zeros(1)}
    e = np.array([1.0, 2.0]).reshape(1, 1, 2, 1)
    out, _ = L.attention_forward(e, p)
    m1, m2, m3 = np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([2.0, 4.0])
    expect = []
    for j in range(2):
        w = np.exp([m2[j] * m1[0], m2[j] * m1[1]])
        w /= w.sum()
        expect.append(e.ravel()[j] + w @ m3)
    assert np.allclose(out.ravel(), expect)


def test_profile_net_examples():
    arch = tiny_arch(profile_widths=(5, 5))
    net = net_for(arch)
    zero(net.params, "prof")
    assert np.array_equal(net.profile_forward(np.array([1.0, 2, 3, 4, 5])), np.zeros((1, 5)))
    net.params["prof_w1"][...] = np.eye(5)
    net.params["prof_w2"][...] = np.eye(5)
    x = np.array([[0.0, 1, 2, 3, 4]])
    assert np.array_equal(net.profile_forward(x), x)

    net = net_for(tiny_arch(), seed=7)
    x = np.array([1.0, 2, 3, 4, 5])
    p = net.params
    h = np.maximum(p["prof_w1"] @ x + p["prof_b1"], 0)
    h = np.maximum(p["prof_w2"] @ h + p["prof_b2"], 0)
    assert np.allclose(net.profile_forward(x)[0], h)


def test_demand_head_examples():
    arch = tiny_arch()
    net = net_for(arch)
    zero(net.params, "dem_")
    net.params["emb"][...] = 0.0
    net.params["dem_b3"][...] = 0.3
    f = np.random.default_rng(5).random((3, arch.feature_dim))
    assert np.allclose(net.demand_forward(f, np.array([0, 1, 2])), 0.3)

    # one-hot embeddings with distinct output weights separate the intervals
    net.params["emb"][...] = np.eye(3, 2)
    net.params["dem_w3"][0, -2:] = [1.0, 2.0]
    y = net.demand_forward(f[[0, 0, 0]], np.array([0, 1, 2]))
    assert len(set(np.round(y, 12))) == 3
    with pytest.raises(ValueError):
        net.demand_forward(f[:1], np.array([3]))


def test_inference_clamps():
    arch = tiny_arch()
    m = PredictorModel.initialize(arch, seed=0)
    zero(m.params, "dem_")
    m.params["emb"][...] = 0.0
    m.params["dem_b3"][...] = -0.2
    from chargeplan.predictor import build_instances

    inst = build_instances(np.zeros((2, 3, 4)), np.zeros((2, 5)), 3)
    assert np.array_equal(m.predict_instances(inst), np.zeros(6))
    assert np.allclose(m.predict_instances(inst, clamp=False), -0.2)


def test_domain_head_zero_weights_is_half():
    net = net_for(tiny_arch())
    zero(net.params, "dom_")
    f = np.random.default_rng(6).random((4, net.arch.feature_dim))
    assert np.allclose(net.domain_forward(f), 0.5)


def test_domain_probability_stays_open_interval():
    net = net_for(tiny_arch())
    f = np.random.default_rng(7).standard_normal((200, net.arch.feature_dim)) * 5
    d = net.domain_forward(f)
    assert np.all((d > 0) & (d < 1))
    # saturated logits stay finite instead of overflowing
    net.params["dom_w2"] *= 1e4
    assert np.all(np.isfinite(net.domain_forward(f * 100)))


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 2, 4, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out, _ = L.conv_forward(x, w, b)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 3, 4, 5))
    for n in range(2):
        for o in range(3):
            for i in range(4):
                for j in range(5):
                    ref[n, o, i, j] = (xp[n, :, i:i + 3, j:j + 3] * w[o]).sum() + b[o]
    assert np.allclose(out, ref)
