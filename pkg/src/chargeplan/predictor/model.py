"""Trainable demand predictor: model container, training loop, checks, checkpoints."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..citydata import ChargerPlan, CityDataset
from ..features import CityFeatures, Normalizer, fit_normalizer
from . import losses
from .network import Architecture, DemandNetwork, init_buffers, init_params, param_group

CHARGER_TYPES = ("slow", "fast")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch, self.batch, self.value = epoch, batch, value
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of adversarial training.

    ``alpha`` weighs the ranking loss against the regression loss,
    ``beta`` scales the reversed domain gradient, ``lr`` is the plain SGD
    step size.  ``use_domain=False`` detaches the domain head entirely.
    """

    alpha: float = 0.3
    beta: float = 0.1
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 30
    dropout_rate: float = 0.25
    seed: int = 0
    use_domain: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class InstanceSet:
    """Training/prediction instances: one row per (station, interval).

    ``context`` is (N, lam, d) normalized, ``profile`` (N, 5) normalized,
    ``t`` the interval index, ``y`` the utilization target (``None`` for the
    target city) and ``domain`` 0 for source and 1 for target rows.
    """

    context: np.ndarray
    profile: np.ndarray
    t: np.ndarray
    y: Optional[np.ndarray]
    domain: np.ndarray
    station: np.ndarray

    def __len__(self):
        return len(self.t)

    def subset(self, idx) -> "InstanceSet":
        return InstanceSet(
            self.context[idx], self.profile[idx], self.t[idx],
            None if self.y is None else self.y[idx], self.domain[idx], self.station[idx],
        )


def concat_instances(a: InstanceSet, b: InstanceSet) -> InstanceSet:
    y = None
    if a.y is not None or b.y is not None:
        ya = a.y if a.y is not None else np.full(len(a), np.nan)
        yb = b.y if b.y is not None else np.full(len(b), np.nan)
        y = np.concatenate([ya, yb])
    return InstanceSet(
        np.concatenate([a.context, b.context]), np.concatenate([a.profile, b.profile]),
        np.concatenate([a.t, b.t]), y, np.concatenate([a.domain, b.domain]), np.concatenate([a.station, b.station]),
    )


def build_instances(context_maps, profiles, T: int, targets=None, domain: int = 0) -> InstanceSet:
    """Expand per-station maps/profiles over ``T`` intervals (station-major)."""
    n = len(context_maps)
    st = np.repeat(np.arange(n), T)
    t = np.tile(np.arange(T), n)
    y = None
    if targets is not None:
        y = np.asarray(targets, dtype=float).reshape(n, T).reshape(-1)
    return InstanceSet(
        context=np.asarray(context_maps, dtype=float)[st],
        profile=np.asarray(profiles, dtype=float)[st],
        t=t, y=y, domain=np.full(n * T, domain, dtype=int), station=st,
    )


@dataclass
class PredictorModel:
    """All learnable state of one charger-type predictor plus feature scaling."""

    arch: Architecture
    params: dict
    buffers: dict
    context_norm: Optional[Normalizer] = None
    profile_norm: Optional[Normalizer] = None
    radius: float = 1000.0
    charger_type: str = "slow"
    config: Optional[TrainConfig] = None
    trace: list = field(default_factory=list)

    @classmethod
    def initialize(cls, arch: Architecture, seed: int = 0, **kw) -> "PredictorModel":
        rng = np.random.default_rng(seed)
        return cls(arch=arch, params=init_params(arch, rng), buffers=init_buffers(arch), **kw)

    @property
    def network(self) -> DemandNetwork:
        return DemandNetwork(self.arch, self.params, self.buffers)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "PredictorModel":
        return replace(
            self,
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            trace=list(self.trace),
        )

    def predict_instances(self, inst: InstanceSet, clamp: bool = True) -> np.ndarray:
        out = self.network.forward(inst.context, inst.profile, inst.t, training=False).y
        return np.clip(out, 0.0, 1.0) if clamp else out

    def shared_features(self, inst: InstanceSet) -> np.ndarray:
        """Inference-mode shared feature vectors f (one row per instance)."""
        return self.network.forward(inst.context, inst.profile, inst.t, training=False).features


# ---------------------------------------------------------------------------
# losses on a batch


def batch_losses(net: DemandNetwork, src: InstanceSet, tgt: Optional[InstanceSet], cfg: TrainConfig,
                 rng=None, training=True, update_stats=True, dropout=True):
    """Forward a mixed batch; return (losses dict, forward, dy, dd, labels)."""
    batch = src if tgt is None or len(tgt) == 0 else concat_instances(src, tgt)
    fwd = net.forward(batch.context, batch.profile, batch.t, training=training, rng=rng,
                      update_stats=update_stats, dropout=dropout)
    ns = len(src)
    ys, y = fwd.y[:ns], src.y
    l_reg = losses.loss_regression(ys, y)
    l_rank = losses.loss_ranking(ys, y) if ns >= 2 else 0.0
    dy = np.zeros(len(batch))
    dy[:ns] = (1.0 - cfg.alpha) * losses.grad_regression(ys, y)
    if ns >= 2 and cfg.alpha != 0.0:
        dy[:ns] += cfg.alpha * losses.grad_ranking(ys, y)
    if cfg.use_domain:
        l_dom = losses.loss_domain(fwd.d_prob, batch.domain)
        dd = losses.grad_domain(fwd.d_prob, batch.domain)
    else:
        l_dom, dd = 0.0, np.zeros(len(batch))
    beta = cfg.beta if cfg.use_domain else 0.0
    out = {
        "reg": l_reg, "rank": l_rank, "domain": l_dom,
        "joint": losses.joint_loss(l_reg, l_rank, l_dom, cfg.alpha, beta),
    }
    return out, fwd, dy, dd


def joint_gradient(model: PredictorModel, src: InstanceSet, tgt: Optional[InstanceSet], cfg: TrainConfig) -> tuple[float, dict]:
    """Joint loss and its exact gradient for every parameter (deterministic mode).

    Dropout is off and batch norm uses the batch statistics without touching
    the running buffers, so the loss is a smooth deterministic function of
    the parameters (up to ReLU kinks).
    """
    net = model.network
    lv, fwd, dy, dd = batch_losses(net, src, tgt, cfg, training=True, update_stats=False, dropout=False)
    beta = cfg.beta if cfg.use_domain else 0.0
    g, gd = net.backward(fwd, dy, dd, domain_scale=-beta)
    grads = dict(g)
    for k, v in gd.items():
        grads[k] = -beta * v
    for k in model.params:
        grads.setdefault(k, np.zeros_like(model.params[k]))
    return lv["joint"], grads


def gradient_check(model: PredictorModel, src: InstanceSet, tgt: Optional[InstanceSet], cfg: TrainConfig,
                   eps: float = 1e-4, atol: float = 1e-6, return_details: bool = False):
    """Max relative error between analytic and central-difference gradients.

    The relative error per entry is ``|a - n| / max(|a|, |n|, atol)``; entries
    whose gradients are both below ``atol`` are judged on an absolute scale.
    """
    _, grads = joint_gradient(model, src, tgt, cfg)
    worst = 0.0
    per_param = {}
    for name, w in model.params.items():
        num = np.zeros_like(w)
        flat = w.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = joint_gradient_loss(model, src, tgt, cfg)
            flat[i] = orig - eps
            lm = joint_gradient_loss(model, src, tgt, cfg)
            flat[i] = orig
            nflat[i] = (lp - lm) / (2.0 * eps)
        a = grads[name]
        rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), atol)
        per_param[name] = float(rel.max()) if rel.size else 0.0
        worst = max(worst, per_param[name])
    return (worst, per_param) if return_details else worst


def joint_gradient_loss(model, src, tgt, cfg) -> float:
    lv, *_ = batch_losses(model.network, src, tgt, cfg, training=True, update_stats=False, dropout=False)
    return lv["joint"]


# ---------------------------------------------------------------------------
# training


def train(source: InstanceSet, target: Optional[InstanceSet], config: TrainConfig,
          arch: Optional[Architecture] = None, model: Optional[PredictorModel] = None) -> PredictorModel:
    """Mini-batch adversarial training by plain gradient descent.

    Each step draws ``batch_size`` source rows (a shuffled pass per epoch)
    and as many target rows (cycled through a shuffled order).  Updates:

    * shared extractors descend the demand loss gradient minus ``beta``
      times the domain loss gradient (gradient reversal);
    * the demand head descends the demand loss gradient;
    * the domain head descends the domain loss gradient.

    The per-epoch mean losses are stored on ``model.trace``.
    """
    if len(source) == 0 or source.y is None:
        raise ValueError("training needs a non-empty labeled source set")
    if model is None:
        if arch is None:
            raise ValueError("pass either an architecture or an initialized model")
        model = PredictorModel.initialize(replace(arch, dropout=config.dropout_rate), seed=config.seed)
    model.config = config
    rng = np.random.default_rng([config.seed, 1])
    net = model.network
    groups = {k: param_group(k) for k in model.params}
    beta = config.beta if config.use_domain else 0.0
    # target rows join every batch even when the domain head is detached, so
    # batch statistics and rng draws do not depend on that switch
    has_target = target is not None and len(target) > 0
    tgt_order = rng.permutation(len(target)) if has_target else None
    tgt_pos = 0
    bs = config.batch_size

    for epoch in range(config.epochs):
        order = rng.permutation(len(source))
        sums = {"reg": 0.0, "rank": 0.0, "domain": 0.0, "joint": 0.0}
        n_batches = 0
        for b, start in enumerate(range(0, len(order), bs)):
            idx = order[start : start + bs]
            if len(idx) < 2 and n_batches > 0:
                continue
            src = source.subset(idx)
            tgt = None
            if has_target:
                take = []
                while len(take) < len(idx):
                    if tgt_pos >= len(tgt_order):
                        tgt_order = rng.permutation(len(target))
                        tgt_pos = 0
                    k = min(len(idx) - len(take), len(tgt_order) - tgt_pos)
                    take.extend(tgt_order[tgt_pos : tgt_pos + k])
                    tgt_pos += k
                tgt = target.subset(np.array(take, dtype=int))
            lv, fwd, dy, dd = batch_losses(net, src, tgt, config, rng=rng, training=True, update_stats=True)
            if not all(math.isfinite(v) for v in lv.values()):
                bad = next(v for v in lv.values() if not math.isfinite(v))
                raise TrainingDivergedError(epoch, b, bad)
            g, gd = net.backward(fwd, dy, dd, domain_scale=-beta)
            lr = config.lr
            for k, w in model.params.items():
                if groups[k] == "domain":
                    if config.use_domain:
                        w -= lr * gd[k]
                else:
                    w -= lr * g[k]
            for k in sums:
                sums[k] += lv[k]
            n_batches += 1
        model.trace.append({"epoch": epoch, **{k: v / max(n_batches, 1) for k, v in sums.items()}})
    return model


def refresh_batch_norm(model: PredictorModel, instances: InstanceSet) -> None:
    """Replace the running batch-norm statistics by exact ones over ``instances``.

    A deterministic forward pass (dropout off) in training mode with momentum
    1 sets every running mean/variance to the statistics of the given rows.
    """
    if len(instances) == 0:
        return
    net = DemandNetwork(replace(model.arch, bn_momentum=1.0), model.params, model.buffers)
    net.forward(instances.context, instances.profile, instances.t, training=True, update_stats=True, dropout=False)


def evaluate_rmse(predictions_or_model, instances=None, targets=None) -> float:
    """RMSE of a model on labeled instances, or of explicit prediction/target arrays."""
    if isinstance(predictions_or_model, PredictorModel):
        if instances is None or len(instances) == 0:
            raise ValueError("RMSE of an empty instance set")
        pred = predictions_or_model.predict_instances(instances)
        y = instances.y
    else:
        pred = np.asarray(predictions_or_model, dtype=float)
        y = np.asarray(targets, dtype=float)
    if pred.size == 0:
        raise ValueError("RMSE of an empty instance set")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


# ---------------------------------------------------------------------------
# city-level fitting and prediction


@dataclass
class ModelPair:
    slow: PredictorModel
    fast: PredictorModel

    def __getitem__(self, kind: str) -> PredictorModel:
        return getattr(self, kind)


def _type_seed(seed: int, kind: str) -> int:
    return int(np.random.SeedSequence([seed, CHARGER_TYPES.index(kind)]).generate_state(1)[0])


def fit_normalizers(source: CityFeatures, target: CityFeatures, target_plan: ChargerPlan,
                    source_plan: Optional[ChargerPlan] = None) -> tuple[Normalizer, Normalizer]:
    """Context and profile scalers fitted on the union of both cities."""
    sp = source_plan if source_plan is not None else source.ds.deployed_plan()
    ctx = fit_normalizer(source.context, target.context)
    prof = fit_normalizer(source.profiles(sp), target.profiles(target_plan))
    return ctx, prof


def city_instances(feats: CityFeatures, plan: ChargerPlan, ctx_norm: Normalizer, prof_norm: Normalizer,
                   targets=None, domain: int = 0, profiles: Optional[np.ndarray] = None) -> InstanceSet:
    prof = feats.profiles(plan) if profiles is None else profiles
    return build_instances(feats.context_maps(ctx_norm), prof_norm.apply(prof), feats.ds.T, targets, domain)


def fit_models(source: CityFeatures, target: CityFeatures, target_plan: ChargerPlan, config: TrainConfig,
               arch: Optional[Architecture] = None) -> ModelPair:
    """Train one model per charger type with ``target_plan`` deployed in the target city."""
    if source.lam != target.lam or source.r != target.r:
        raise ValueError("source and target features use different settings")
    arch = arch or Architecture(lam=source.lam, T=source.ds.T)
    arch = replace(arch, lam=source.lam, T=source.ds.T)
    ctx_norm, prof_norm = fit_normalizers(source, target, target_plan)
    ys, yf = source.ds.demand_arrays()
    tgt = city_instances(target, target_plan, ctx_norm, prof_norm, domain=1)
    models = {}
    for kind, y in (("slow", ys), ("fast", yf)):
        src = city_instances(source, source.ds.deployed_plan(), ctx_norm, prof_norm, targets=y, domain=0)
        cfg = replace(config, seed=_type_seed(config.seed, kind))
        m = PredictorModel.initialize(replace(arch, dropout=config.dropout_rate), seed=cfg.seed,
                                      context_norm=ctx_norm, profile_norm=prof_norm,
                                      radius=source.r, charger_type=kind)
        models[kind] = train(src, tgt, cfg, model=m)
        models[kind].config = config
    return ModelPair(**models)


def predict_city(models: ModelPair, feats: CityFeatures, plan: ChargerPlan,
                 profiles: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Clamped (slow, fast) demand predictions, each (n_stations, T)."""
    out = []
    n, T = len(feats.ds.stations), feats.ds.T
    for kind in CHARGER_TYPES:
        m = models[kind]
        inst = city_instances(feats, plan, m.context_norm, m.profile_norm, profiles=profiles, domain=1)
        out.append(m.predict_instances(inst).reshape(n, T))
    return out[0], out[1]


def predict(models: ModelPair, ds: CityDataset, plan: ChargerPlan, station: str, t: int,
            feats: Optional[CityFeatures] = None) -> tuple[float, float]:
    """Predicted (slow, fast) utilization of one station at interval ``t``."""
    m0 = models.slow
    feats = feats or CityFeatures(ds, m0.radius, m0.arch.lam)
    if not plan.covers(ds.station_ids):
        raise KeyError("plan does not cover every station")
    if not 0 <= t < ds.T:
        raise ValueError(f"time index {t} out of range [0, {ds.T})")
    ys, yf = predict_city(models, feats, plan)
    i = ds.index[station]
    return float(ys[i, t]), float(yf[i, t])


# ---------------------------------------------------------------------------
# checkpoints


def model_to_dict(m: PredictorModel) -> dict:
    return {
        "format": "chargeplan-predictor/1",
        "charger_type": m.charger_type,
        "radius": m.radius,
        "architecture": m.arch.to_dict(),
        "params": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in m.params.items()},
        "buffers": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in m.buffers.items()},
        "context_norm": None if m.context_norm is None else m.context_norm.to_dict(),
        "profile_norm": None if m.profile_norm is None else m.profile_norm.to_dict(),
        "train_config": None if m.config is None else asdict(m.config),
        "trace": m.trace,
    }


def model_from_dict(d: dict) -> PredictorModel:
    def arr(e):
        return np.array(e["data"], dtype=np.float64).reshape(e["shape"])

    return PredictorModel(
        arch=Architecture(**d["architecture"]),
        params={k: arr(v) for k, v in d["params"].items()},
        buffers={k: arr(v) for k, v in d["buffers"].items()},
        context_norm=None if d["context_norm"] is None else Normalizer.from_dict(d["context_norm"]),
        profile_norm=None if d["profile_norm"] is None else Normalizer.from_dict(d["profile_norm"]),
        radius=d["radius"],
        charger_type=d["charger_type"],
        config=None if d["train_config"] is None else TrainConfig(**d["train_config"]),
        trace=list(d.get("trace", [])),
    )


def save_checkpoint(model: PredictorModel, path) -> None:
    """JSON checkpoint; floats are written with round-trip precision."""
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True))


def load_checkpoint(path) -> PredictorModel:
    return model_from_dict(json.loads(Path(path).read_text()))
