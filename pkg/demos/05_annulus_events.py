"""Annulus events: the constant-field crossing ratio and the narrow-annulus length event as alpha varies."""
import math

from lqglab.events import AnnulusEventParams, check_condition3, narrow_annulus_length_event
from lqglab.gff import Field, LqgParams, Normalization, SamplerKind, heat_mollify, sample_field
from lqglab.lattice import GridSpec
from lqglab.metric import MetricOracle

P = LqgParams.pure_gravity()
g = GridSpec(0, 1.0, 128, 128)
rep = check_condition3(MetricOracle(Field.constant(g), P), 63.5 + 63.5j, 62.0, AnnulusEventParams(alpha=0.75))
print(f"h = 0: around / across = {rep.detail['ratio']:.3f} vs 2 pi alpha / (1 - alpha) = {6 * math.pi:.3f}")

g = GridSpec.centered(0, 1.0, 1 / 64)
for alpha in (0.75, 0.85, 0.95):
    hits = 0
    for seed in range(20):
        h = sample_field(g, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
        o = MetricOracle(heat_mollify(h, 1 / 16), P)
        hits += narrow_annulus_length_event(o, 0, 0.6, alpha, s=1.5, big_s=2.0, pair_budget=16, seed=seed,
                                            field_for_average=h).verdict
    print(f"alpha={alpha}: narrow-annulus event in {hits}/20 samples")
