"""LFPP distances on a sampled GFF: one geodesic, the e^{xi c} Weyl scaling, and eps normalization."""
import numpy as np

from lqglab.gff import LqgParams, Normalization, SamplerKind, heat_mollify, sample_field
from lqglab.lattice import GridSpec
from lqglab.metric import MetricOracle, weyl_scale

P = LqgParams.pure_gravity()
grid = GridSpec.centered(0, 1.0, 1 / 64)
h = sample_field(grid, SamplerKind(normalization=Normalization.MEAN_ZERO), seed=0)
print(f"gamma={P.gamma:.4f} xi={P.xi:.4f} Q={P.q:.4f} d_gamma={P.d_gamma}")

for eps in (1 / 8, 1 / 16, 1 / 32):
    o = MetricOracle(heat_mollify(h, eps), P, epsilon=eps)
    a, b = grid.nearest(-0.4 - 0.3j), grid.nearest(0.4 + 0.3j)
    res = o.distance([a], [b])
    print(f"eps={eps:.4f}: raw D={res.value:.4f}  normalized D={res.value * o.normalization:.4f}  "
          f"geodesic vertices={len(res.geodesic.vertices)}")

o = MetricOracle(heat_mollify(h, 1 / 16), P)
shifted = weyl_scale(o, 1.0)
d0 = o.distance([a], [b]).value
d1 = shifted.distance([a], [b]).value
print(f"Weyl check: D_(h+1) / (e^xi D_h) = {d1 / (np.exp(P.xi) * d0):.15f}")
