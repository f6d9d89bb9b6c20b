"""The six joint-network fusion structures on one pair of representation rows."""

import numpy as np

from rnnt_fusion import autodiff as ad
from rnnt_fusion import fusion
from rnnt_fusion.rng import Stream

rng = np.random.default_rng(1)
h_enc = ad.constant(rng.uniform(-1, 1, 6))   # one acoustic row
h_pred = ad.constant(rng.uniform(-1, 1, 5))  # one text row

print("fused representations (D_joint = 4):")
for kind in fusion.FUSION_KINDS:
    rank = 3 if kind in ("bilinear-lowrank", "combination") else None
    spec = fusion.FusionSpec(kind=kind, d_enc=6, d_pred=5, d_joint=4, d_rank=rank)
    nodes = fusion.FusionNodes(spec, fusion.init_fusion(spec, Stream(0, 1)))
    out = fusion.fuse(h_enc, h_pred, nodes).value
    print(f"  {kind:18s} -> {np.array2string(out, precision=4)}")

# Parameter accounting at the dimensions used for reporting model sizes
print("\njoint-network parameter counts at D_enc=512, D_pred=640, D_joint=640:")
for kind, rank in [("fc-add", None), ("fc-mul", None), ("gating", None),
                   ("bilinear-lowrank", 640), ("bilinear-lowrank", 1280),
                   ("combination", 640)]:
    spec = fusion.FusionSpec(kind=kind, d_enc=512, d_pred=640, d_joint=640,
                             d_rank=rank)
    suffix = f" (rank {rank})" if rank else ""
    print(f"  {kind + suffix:28s} {fusion.param_count(spec):>10,}")

# The full bilinear form equals its vectorized outer-product formulation.
w_bi = rng.uniform(-1, 1, (4, 6, 5))
e = rng.uniform(-1, 1, 6)
p = rng.uniform(-1, 1, 5)
spec = fusion.FusionSpec(kind="bilinear-full", d_enc=6, d_pred=5, d_joint=4)
nodes = fusion.FusionNodes(spec, {"w_bi": w_bi})
per_d = fusion.fuse(ad.constant(e), ad.constant(p), nodes).value
vectorized = fusion.bilinear_vectorized_reference(w_bi, e, p)
print(f"\nbilinear per-element vs outer-product form, max diff: "
      f"{np.max(np.abs(per_d - vectorized)):.2e}")
