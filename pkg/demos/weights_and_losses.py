"""Time-aware pair weights and the three contrastive objectives on a toy batch."""
import numpy as np

from tessl.autodiff import Tensor, l2_normalize_rows
from tessl.contrastive import ContrastiveConfig, MultiViewBatch, compute_weight_matrix, essl_loss, ssl_loss, tessl_loss

np.set_printoptions(precision=3, suppress=True)

# four subjects, months to event (or censoring)
times = np.array([6.0, 12.0, 30.0, 60.0])
events = np.array([1, 1, 0, 1])

# closest pair gets alpha, farthest gets beta, everything else in between
w = compute_weight_matrix(times, alpha=1.0, beta=0.5)
print("pair weights\n", w)

# two augmented views per subject: rows i and i + 4 are partners
rng = np.random.default_rng(0)
base = rng.normal(size=(4, 8))
views = np.vstack([base + 0.1 * rng.normal(size=base.shape), base + 0.1 * rng.normal(size=base.shape)])
z = l2_normalize_rows(Tensor(views))
origin = np.tile(np.arange(4), 2)
pair = np.concatenate([np.arange(4, 8), np.arange(4)])
batch = MultiViewBatch(z, origin, pair, labels=np.tile(events, 2), times=np.tile(times, 2))

cfg = ContrastiveConfig(tau=0.07, alpha=1.0, beta=0.5)
for name, fn in [("ssl", ssl_loss), ("essl", essl_loss), ("tessl", tessl_loss)]:
    print(f"{name:6s}{fn(batch, cfg).item():.4f}")

# with alpha == beta every weight is the same and the time-aware loss collapses to the event-aware one
flat = ContrastiveConfig(alpha=1.0, beta=1.0)
print("tessl(alpha=beta) - essl =", tessl_loss(batch, flat).item() - essl_loss(batch, flat).item())
