"""Experiment: batch-8 + EMA training for the criterion-4 profile."""
import time
import numpy as np
import torch
torch.set_num_threads(1)
from citygen.datasets import make_toy_city
from citygen.diffusion import schedule_tensors, noise_batch, ancestral_sample, decode_sample_tensor, fields_to_training_tensor
from citygen.fields import class_fractions, default_palette
from citygen.schedule import make_schedule
from citygen.unet import UNet

t0 = time.time()
palette = default_palette()
corpus = [make_toy_city(seed, side=64) for seed in range(500)]
x0 = fields_to_training_tensor(corpus, palette, 64, "one_hot")
sched = make_schedule(200)
tensors = schedule_tensors(sched)

def run(batch_size, epochs, ema_decay, lr=1e-4, width=24, seed=0, label=""):
    torch.manual_seed(seed)
    model = UNet(8, 8, base_width=width, depth=2)
    shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    g = torch.Generator("cpu").manual_seed(seed ^ 0x5EED)
    shuffler = np.random.default_rng(seed)
    n = x0.shape[0]
    curve = []
    for ep in range(epochs):
        order = shuffler.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = x0[order[start:start+batch_size]]
            t, eps, xt = noise_batch(batch, tensors, g)
            pred = model(xt, t)
            loss = torch.mean((pred - eps)**2)
            opt.zero_grad(); loss.backward(); opt.step()
            if ema_decay:
                with torch.no_grad():
                    sd = model.state_dict()
                    for k in shadow:
                        shadow[k] += (1.0 - ema_decay) * (sd[k] - shadow[k])
            losses.append(float(loss.detach()))
        curve.append(float(np.mean(losses)))
    if ema_decay:
        model.load_state_dict(shadow)
    xs = ancestral_sample(model, sched, (64, 8, 64, 64), seed=123)
    samples = decode_sample_tensor(xs, palette, "one_hot", "S128")
    def mf(fs):
        out = np.zeros(8)
        for f in fs:
            for c, v in class_fractions(f).items(): out[c] += v
        return out / len(fs)
    gap = 100*np.abs(mf(samples) - mf(corpus)).max()
    print(f"{label}: loss {curve[0]:.3f}->{curve[-1]:.3f} (med last5 {np.median(curve[-5:]):.3f}) gap {gap:.1f}pp  [{time.time()-t0:.0f}s]", flush=True)
    print("   sample fracs:", np.round(mf(samples), 3).tolist(), flush=True)
    return gap

run(8, 20, 0.995, label="b8 ema0.995 20ep")
run(8, 20, None, label="b8 noema 20ep")
