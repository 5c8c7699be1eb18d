"""The demand network: context/profile feature extractors, demand head, domain head.

Parameters live in one flat ``dict`` of float64 arrays so that training,
checkpointing and finite-difference checks can treat them uniformly.  The
three parameter groups are:

* ``shared`` -- context and profile extractors (conv blocks, batch norm,
  spatial attention, profile layers);
* ``demand`` -- the demand head (hidden layers, time embedding, output);
* ``domain`` -- the domain classifier.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L

SHARED_PREFIXES = ("conv1_", "bn1_", "att_", "conv2_", "bn2_", "prof_")
DEMAND_PREFIXES = ("dem_", "emb")
DOMAIN_PREFIXES = ("dom_",)


@dataclass(frozen=True)
class Architecture:
    lam: int = 5
    d: int = 24
    n_profile: int = 5
    T: int = 13
    conv_channels: tuple = (16, 32)
    kernel: int = 3
    profile_widths: tuple = (16, 16)
    demand_widths: tuple = (64, 32)
    embed_dim: int = 8
    domain_width: int = 32
    dropout: float = 0.25
    batch_norm: bool = True
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "profile_widths", tuple(self.profile_widths))
        object.__setattr__(self, "demand_widths", tuple(self.demand_widths))
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")

    @property
    def feature_dim(self) -> int:
        return self.conv_channels[1] + self.profile_widths[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("conv_channels", "profile_widths", "demand_widths"):
            d[k] = list(d[k])
        return d


def param_group(name: str) -> str:
    if name.startswith(SHARED_PREFIXES):
        return "shared"
    if name.startswith(DEMAND_PREFIXES):
        return "demand"
    if name.startswith(DOMAIN_PREFIXES):
        return "domain"
    raise KeyError(name)


def init_params(arch: Architecture, rng: np.random.Generator) -> dict:
    c1, c2 = arch.conv_channels
    k = arch.kernel
    p1, p2 = arch.profile_widths
    h1, h2 = arch.demand_widths
    F = arch.feature_dim

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    p = {
        "conv1_w": he((c1, 1, k, k), k * k),
        "conv1_b": np.zeros(c1),
        "bn1_g": np.ones(c1),
        "bn1_b": np.zeros(c1),
        "att_w1": rng.standard_normal(c1) * 0.1,
        "att_b1": np.zeros(1),
        "att_w2": rng.standard_normal(c1) * 0.1,
        "att_b2": np.zeros(1),
        "att_w3": rng.standard_normal(c1) * 0.1,
        "att_b3": np.zeros(1),
        "att_wa": rng.standard_normal(c1) * 0.1,
        "att_ba": np.zeros(c1),
        "conv2_w": he((c2, c1, k, k), c1 * k * k),
        "conv2_b": np.zeros(c2),
        "bn2_g": np.ones(c2),
        "bn2_b": np.zeros(c2),
        "prof_w1": he((p1, arch.n_profile), arch.n_profile),
        "prof_b1": np.zeros(p1),
        "prof_w2": he((p2, p1), p1),
        "prof_b2": np.zeros(p2),
        "dem_w1": he((h1, F), F),
        "dem_b1": np.zeros(h1),
        "dem_w2": he((h2, h1), h1),
        "dem_b2": np.zeros(h2),
        "emb": rng.standard_normal((arch.T, arch.embed_dim)) * 0.1,
        "dem_w3": rng.standard_normal((1, h2 + arch.embed_dim)) * np.sqrt(1.0 / (h2 + arch.embed_dim)),
        "dem_b3": np.zeros(1),
        "dom_w1": he((arch.domain_width, F), F),
        "dom_b1": np.zeros(arch.domain_width),
        "dom_w2": rng.standard_normal((2, arch.domain_width)) * np.sqrt(1.0 / arch.domain_width),
        "dom_b2": np.zeros(2),
    }
    return p


def init_buffers(arch: Architecture) -> dict:
    c1, c2 = arch.conv_channels
    return {
        "bn1_mean": np.zeros(c1),
        "bn1_var": np.ones(c1),
        "bn2_mean": np.zeros(c2),
        "bn2_var": np.ones(c2),
    }


@dataclass
class Forward:
    y: np.ndarray          # raw (unclamped) demand predictions, shape (N,)
    d_prob: np.ndarray     # probability of domain 1, shape (N,)
    features: np.ndarray   # concatenated shared feature f, shape (N, F)
    cache: dict = field(repr=False, default_factory=dict)


class DemandNetwork:
    """Forward and backward passes over a parameter dict."""

    def __init__(self, arch: Architecture, params: dict, buffers: dict):
        self.arch = arch
        self.params = params
        self.buffers = buffers

    # ---- sub-networks ---------------------------------------------------
    def _conv_block(self, x, idx, training, update, cache):
        p, b = self.params, self.buffers
        z, cc = L.conv_forward(x, p[f"conv{idx}_w"], p[f"conv{idx}_b"])
        cache[f"conv{idx}"] = cc
        if self.arch.batch_norm:
            z, cb = L.bn_forward(
                z, p[f"bn{idx}_g"], p[f"bn{idx}_b"], b[f"bn{idx}_mean"], b[f"bn{idx}_var"],
                training, self.arch.bn_momentum, update,
            )
            cache[f"bn{idx}"] = cb
        cache[f"relu{idx}"] = z > 0
        return np.maximum(z, 0.0)

    def context_forward(self, fc, training=False, rng=None, update_stats=False, dropout=True, cache=None):
        """ContextNet: conv block, dropout, spatial attention, conv block, global average pool."""
        cache = {} if cache is None else cache
        fc = np.asarray(fc, dtype=float)
        if fc.ndim == 2:
            fc = fc[None]
        if fc.shape[1:] != (self.arch.lam, self.arch.d):
            raise ValueError(f"context map shape {fc.shape[1:]} != {(self.arch.lam, self.arch.d)}")
        a1 = self._conv_block(fc[:, None, :, :], 1, training, update_stats, cache)
        rate = self.arch.dropout
        if training and dropout and rate > 0:
            if rng is None:
                raise ValueError("training with dropout needs an rng")
            mask = (rng.random(a1.shape) >= rate) / (1.0 - rate)
            a1 = a1 * mask
            cache["drop"] = mask
        e, cache["att"] = L.attention_forward(a1, self.params)
        a2 = self._conv_block(e, 2, training, update_stats, cache)
        cache["pool_shape"] = a2.shape
        return a2.mean(axis=(2, 3))

    def profile_forward(self, fp, cache=None):
        cache = {} if cache is None else cache
        p = self.params
        fp = np.atleast_2d(np.asarray(fp, dtype=float))
        if fp.shape[1] != self.arch.n_profile:
            raise ValueError(f"profile length {fp.shape[1]} != {self.arch.n_profile}")
        z1, cache["prof_x1"] = L.dense_forward(fp, p["prof_w1"], p["prof_b1"])
        h1 = np.maximum(z1, 0.0)
        z2, cache["prof_x2"] = L.dense_forward(h1, p["prof_w2"], p["prof_b2"])
        cache["prof_r1"], cache["prof_r2"] = z1 > 0, z2 > 0
        return np.maximum(z2, 0.0)

    def demand_forward(self, f, t, cache=None):
        cache = {} if cache is None else cache
        p = self.params
        t = np.atleast_1d(np.asarray(t))
        if np.any(t < 0) or np.any(t >= self.arch.T) or not np.issubdtype(t.dtype, np.integer):
            raise ValueError(f"time index out of range [0, {self.arch.T})")
        z1, cache["dem_x1"] = L.dense_forward(f, p["dem_w1"], p["dem_b1"])
        h1 = np.maximum(z1, 0.0)
        z2, cache["dem_x2"] = L.dense_forward(h1, p["dem_w2"], p["dem_b2"])
        h2 = np.maximum(z2, 0.0)
        hy = np.concatenate([h2, p["emb"][t]], axis=1)
        out, cache["dem_x3"] = L.dense_forward(hy, p["dem_w3"], p["dem_b3"])
        cache["dem_r1"], cache["dem_r2"], cache["t"] = z1 > 0, z2 > 0, t
        return out[:, 0]

    def domain_forward(self, f, cache=None):
        cache = {} if cache is None else cache
        p = self.params
        z1, cache["dom_x1"] = L.dense_forward(f, p["dom_w1"], p["dom_b1"])
        h = np.maximum(z1, 0.0)
        z2, cache["dom_x2"] = L.dense_forward(h, p["dom_w2"], p["dom_b2"])
        cache["dom_r1"] = z1 > 0
        # two-way softmax, probability of class 1
        prob = L.sigmoid(z2[:, 1] - z2[:, 0])
        cache["dom_prob"] = prob
        return prob

    # ---- full pass --------------------------------------------------------
    def forward(self, fc, fp, t, training=False, rng=None, update_stats=False, dropout=True) -> Forward:
        cache: dict = {}
        f_c = self.context_forward(fc, training, rng, update_stats, dropout, cache)
        f_p = self.profile_forward(fp, cache)
        f = np.concatenate([f_c, f_p], axis=1)
        y = self.demand_forward(f, t, cache)
        d = self.domain_forward(f, cache)
        return Forward(y=y, d_prob=d, features=f, cache=cache)

    def backward(self, fwd: Forward, dy, dd, domain_scale: float) -> tuple[dict, dict]:
        """Back-propagate demand-loss gradient ``dy`` and domain-loss gradient ``dd``.

        ``dy`` and ``dd`` are gradients w.r.t. the raw demand output and the
        domain-1 probability.  The domain gradient reaching the shared
        extractors is multiplied by ``domain_scale`` (the reversal factor).
        Returns ``(grads, domain_head_grads)``: ``grads`` covers the shared
        and demand groups; the domain head gradients are those of the domain
        loss itself.
        """
        p, c = self.params, fwd.cache
        g: dict = {}
        # demand head
        dout = np.asarray(dy, dtype=float)[:, None]
        dhy, g["dem_w3"], g["dem_b3"] = L.dense_backward(dout, c["dem_x3"], p["dem_w3"])
        h2w = self.arch.demand_widths[1]
        demb = np.zeros_like(p["emb"])
        np.add.at(demb, c["t"], dhy[:, h2w:])
        g["emb"] = demb
        dz2 = dhy[:, :h2w] * c["dem_r2"]
        dh1, g["dem_w2"], g["dem_b2"] = L.dense_backward(dz2, c["dem_x2"], p["dem_w2"])
        dz1 = dh1 * c["dem_r1"]
        df, g["dem_w1"], g["dem_b1"] = L.dense_backward(dz1, c["dem_x1"], p["dem_w1"])

        # domain head: d prob / d (z1 - z0) = prob (1 - prob)
        gd: dict = {}
        prob = c["dom_prob"]
        dlogit = np.asarray(dd, dtype=float) * prob * (1.0 - prob)
        dz = np.stack([-dlogit, dlogit], axis=1)
        dh, gd["dom_w2"], gd["dom_b2"] = L.dense_backward(dz, c["dom_x2"], p["dom_w2"])
        dzd = dh * c["dom_r1"]
        df_dom, gd["dom_w1"], gd["dom_b1"] = L.dense_backward(dzd, c["dom_x1"], p["dom_w1"])
        if domain_scale != 0.0:
            df = df + domain_scale * df_dom

        # profile extractor
        c2 = self.arch.conv_channels[1]
        dfp = df[:, c2:] * c["prof_r2"]
        dh1p, g["prof_w2"], g["prof_b2"] = L.dense_backward(dfp, c["prof_x2"], p["prof_w2"])
        dz1p = dh1p * c["prof_r1"]
        _, g["prof_w1"], g["prof_b1"] = L.dense_backward(dz1p, c["prof_x1"], p["prof_w1"])

        # context extractor
        n, ch, h, w = c["pool_shape"]
        da2 = np.broadcast_to(df[:, :c2, None, None] / (h * w), (n, ch, h, w))
        de = self._conv_block_backward(da2, 2, c, g)
        da1, ag = L.attention_backward(de, c["att"], p)
        g.update(ag)
        if "drop" in c:
            da1 = da1 * c["drop"]
        self._conv_block_backward(da1, 1, c, g, need_dx=False)
        return g, gd

    def _conv_block_backward(self, dout, idx, c, g, need_dx=True):
        dz = dout * c[f"relu{idx}"]
        if self.arch.batch_norm:
            dz, g[f"bn{idx}_g"], g[f"bn{idx}_b"] = L.bn_backward(dz, c[f"bn{idx}"])
        else:
            g[f"bn{idx}_g"] = np.zeros_like(self.params[f"bn{idx}_g"])
            g[f"bn{idx}_b"] = np.zeros_like(self.params[f"bn{idx}_b"])
        dx, g[f"conv{idx}_w"], g[f"conv{idx}_b"] = L.conv_backward(dz, c[f"conv{idx}"], need_dx)
        return dx
