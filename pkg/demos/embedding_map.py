"""Project learned representations onto two principal axes and look at time structure."""
import numpy as np

from tessl import ExperimentConfig, generate_synthetic
from tessl.pipeline import pca2, pretrain, representations

ds, stage = generate_synthetic(600, 32, censor_rate=0.25, seed=0, return_stages=True)
cfg = ExperimentConfig(mode="tessl", pretrain_epochs=20)
ckpt = pretrain(cfg, ds, seed=0)

test = ds.get_split("test")
scores, _ = pca2(representations(ckpt, test.features))
test_stage = stage[np.isin(ds.ids, test.ids)]

# correlation of the first axis with log time, and the mean position per latent stage
r = np.corrcoef(scores[:, 0], np.log1p(test.times))[0, 1]
print(f"corr(pc0, log time) = {r:+.3f}")
for s in np.unique(test_stage):
    m = scores[test_stage == s].mean(axis=0)
    print(f"stage {s}: pc0 {m[0]:+.3f}  pc1 {m[1]:+.3f}")
