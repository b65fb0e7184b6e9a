"""Calibration run for the toy-training acceptance profile (criterion 4)."""
import json
import time

import numpy as np
import torch

torch.set_num_threads(1)

from citygen.datasets import make_toy_city
from citygen.diffusion import BlockGenerator
from citygen.fields import class_fractions, default_palette
from citygen.metrics import FeatureSpec, fid, make_extractor

t0 = time.time()
palette = default_palette()
corpus = [make_toy_city(seed, side=64) for seed in range(500)]
held_out = [make_toy_city(10_000 + seed, side=64) for seed in range(256)]
print(f"[{time.time()-t0:.0f}s] corpus built", flush=True)

profile = dict(timesteps=200, train_side=64, base_width=24, depth=2, batch_size=16)
trained = BlockGenerator(epochs=20, learning_rate=1e-4, seed=0, **profile).fit(corpus)
print(f"[{time.time()-t0:.0f}s] trained; loss curve:", [round(v, 4) for v in trained.loss_curve_], flush=True)

first5 = np.median(trained.loss_curve_[:5])
last5 = np.median(trained.loss_curve_[-5:])
print("loss medians first5/last5:", first5, last5, "decreasing:", last5 < first5, flush=True)

samples = trained.sample(64, seed=123)
print(f"[{time.time()-t0:.0f}s] sampled 64", flush=True)

def mean_fractions(fields):
    out = np.zeros(len(palette))
    for f in fields:
        for c, v in class_fractions(f).items():
            out[c] += v
    return out / len(fields)

corpus_frac = mean_fractions(corpus)
sample_frac = mean_fractions(samples)
gap = np.abs(corpus_frac - sample_frac)
print("corpus fracs:", np.round(corpus_frac, 3).tolist(), flush=True)
print("sample fracs:", np.round(sample_frac, 3).tolist(), flush=True)
print("max gap (pp):", round(100 * gap.max(), 2), flush=True)

untrained = BlockGenerator(epochs=0, seed=0, **profile).fit(corpus[:1])
unsamples = untrained.sample(64, seed=123)
extractor = make_extractor(FeatureSpec(feature_dim=128, input_side=64, seed=0), len(palette))
ref = extractor(held_out)
fid_trained = fid(extractor(samples), ref)
fid_untrained = fid(extractor(unsamples), ref)
print(f"[{time.time()-t0:.0f}s] fid trained={fid_trained:.3f} untrained={fid_untrained:.3f} ratio={fid_trained/fid_untrained:.3f}", flush=True)
json.dump(
    {
        "loss_curve": trained.loss_curve_,
        "max_gap_pp": float(100 * gap.max()),
        "fid_trained": fid_trained,
        "fid_untrained": fid_untrained,
        "wall_s": time.time() - t0,
    },
    open("/tmp/calibrate_c4.json", "w"),
)
print("TOTAL", round(time.time() - t0), "s", flush=True)
