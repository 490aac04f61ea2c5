"""LQG area measure: covariance under z -> 2z, and ball volume growth for h = 0 and for the GFF."""
from pathlib import Path

from lqglab.conformal import Affine
from lqglab.gff import LqgParams, Normalization, SamplerKind, sample_field
from lqglab.harness import load_config, run
from lqglab.lattice import GridSpec, vertices_in_ball
from lqglab.measure import measure_coordinate_change

P = LqgParams.pure_gravity()
grid = GridSpec.centered(0, 0.75, 0.05 / 8)
for seed in range(3):
    h = sample_field(grid, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
    res = measure_coordinate_change(h, Affine(2, 0), vertices_in_ball(grid, 0, 0.25), 0.05, P)
    print(f"seed {seed}: mu(phi(U)) / pushed-forward mass = {res.ratio:.4f}")

for name in ("ac8_ball_flat.yaml", "ac8_ball_gff.yaml"):
    cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / name)
    cfg.sample_count = min(cfg.sample_count, 10)
    row = run(cfg).rows[0]
    print(f"{name}: pooled log-log volume growth slope {row['stat']:.3f} over {row['n']} samples")
