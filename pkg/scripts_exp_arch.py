"""Experiment: restructured UNet, batch 8, EMA, 10-then-20 epochs."""
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

def mf(fs):
    out = np.zeros(8)
    for f in fs:
        for c, v in class_fractions(f).items(): out[c] += v
    return out / len(fs)

def agreement(grid):
    return float(((grid[:, :-1] == grid[:, 1:]).mean() + (grid[:-1, :] == grid[1:, :]).mean()) / 2)

corpus_f = mf(corpus)
torch.manual_seed(0)
model = UNet(8, 8, base_width=24, depth=2)
print("params:", sum(p.numel() for p in model.parameters()), flush=True)
shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}
opt = torch.optim.Adam(model.parameters(), lr=1e-4)
g = torch.Generator("cpu").manual_seed(0x5EED)
shuffler = np.random.default_rng(0)
n = x0.shape[0]
batch_size = 8

def evaluate(tag):
    backup = {k: v.detach().clone() for k, v in model.state_dict().items()}
    model.load_state_dict(shadow)
    xs = ancestral_sample(model, sched, (16, 8, 64, 64), seed=123)
    samples = decode_sample_tensor(xs, palette, "one_hot", "S128")
    gap = 100*np.abs(mf(samples) - corpus_f).max()
    agr = np.mean([agreement(s.grid) for s in samples])
    print(f"{tag}: gap={gap:.1f}pp agreement={agr:.3f} fracs={np.round(mf(samples),3).tolist()} [{time.time()-t0:.0f}s]", flush=True)
    model.load_state_dict(backup)

for ep in range(20):
    order = shuffler.permutation(n)
    losses = []
    for start in range(0, n, batch_size):
        batch = x0[order[start:start+batch_size]]
        t, eps, xt = noise_batch(batch, tensors, g)
        pred = model(xt, t)
        loss = torch.mean((pred - eps)**2)
        opt.zero_grad(); loss.backward(); opt.step()
        with torch.no_grad():
            sd = model.state_dict()
            for k in shadow:
                shadow[k] += 0.005 * (sd[k] - shadow[k])
        losses.append(float(loss.detach()))
    print(f"epoch {ep}: loss {np.mean(losses):.4f} [{time.time()-t0:.0f}s]", flush=True)
    if ep in (9, 14, 19):
        evaluate(f"after ep{ep}")
