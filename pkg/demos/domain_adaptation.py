"""Does the adversarial domain head help when the target city looks different?

Trains the demand model on a labelled source city with and without the
domain classifier (beta = 0.1 vs beta = 0) and measures how well each
predicts the target city's true demand, plus how far apart the two cities'
learned features sit (MMD).

    python demos/domain_adaptation.py [n_seeds]
"""
import sys

import numpy as np

from chargeplan.citydata import ChargerPlan
from chargeplan.features import CityFeatures, mmd
from chargeplan.predictor import Architecture, TrainConfig, evaluate_rmse, train
from chargeplan.predictor.model import city_instances, fit_normalizers
from chargeplan.synth import SynthConfig, generate_city_pair


def main(n_seeds=3):
    print("seed  beta  target RMSE  feature MMD")
    for seed in range(n_seeds):
        src_ds, tgt_ds, oracle = generate_city_pair(SynthConfig(domain_shift=1.0, seed=seed, n_stations=30,
                                                                n_target_stations=30))
        rng = np.random.default_rng(seed)
        plan = ChargerPlan.from_arrays(tgt_ds.station_ids, rng.integers(0, 11, 30), rng.integers(0, 7, 30))
        ys, _ = oracle.demand(tgt_ds, plan)
        fs, ft = CityFeatures(src_ds), CityFeatures(tgt_ds)
        cn, pn = fit_normalizers(fs, ft, plan)
        src = city_instances(fs, src_ds.deployed_plan(), cn, pn, targets=src_ds.demand_arrays()[0])
        # target labels are used only for scoring, never for training
        tgt = city_instances(ft, plan, cn, pn, targets=ys.ravel(), domain=1)
        for beta in (0.1, 0.0):
            m = train(src, tgt, TrainConfig(lr=0.05, epochs=60, beta=beta, seed=seed), arch=Architecture())
            gap = mmd(m.shared_features(src), m.shared_features(tgt))
            print(f"{seed:4d}  {beta:4.1f}  {evaluate_rmse(m, tgt):11.4f}  {gap:11.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
