"""Coordinate change under w -> w^2 near z = 2: the sup-difference statistic and distance ratios at three scales."""
import numpy as np

from lqglab.conformal import CoordinateChange, Power2
from lqglab.gff import LqgParams, Normalization, SamplerKind, sample_field
from lqglab.lattice import GridSpec

P = LqgParams.pure_gravity()
z = 2.0
for r in (0.4, 0.2, 0.1):
    grid = GridSpec.centered(z, 3 * r, r / 16)
    sups, ratios = [], []
    for seed in range(5):
        h = sample_field(grid, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
        cc = CoordinateChange(h, Power2(), r / 4, P, anchor=z, region_radius=2 * r)
        sups.append(cc.sup_difference(z, r, 8, seed=seed))
        ratios += list(cc.ratio_sample(z, r, 8, 0.25, seed=seed))
    q25, q75 = np.percentile(ratios, [25, 75])
    print(f"r={r}: median sup|log D_phi - log D| = {np.median(sups):.3f}, ratio IQR = {q75 - q25:.4f}")
