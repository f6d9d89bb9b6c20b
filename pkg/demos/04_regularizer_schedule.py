"""Gradient damping into the prediction network on a piece-wise linear ramp."""

import numpy as np

from rnnt_fusion import autodiff as ad
from rnnt_fusion.data import TaskConfig, generate
from rnnt_fusion.model import ModelConfig, TransducerModel
from rnnt_fusion.regularizer import Schedule, alpha_at

sched = Schedule(m1=250, m2=2000)
print("alpha over training steps (m1=250, m2=2000):")
for m in [0, 100, 250, 500, 1000, 1500, 2000, 3000]:
    bar = "#" * int(40 * alpha_at(m, sched))
    print(f"  step {m:>5}: alpha = {alpha_at(m, sched):5.3f} |{bar}")

cfg = ModelConfig(vocab_size=6, feature_width=10, d_enc=16, d_pred=16,
                  d_joint=16, d_rank=8, fusion_kind="gating", embed_dim=16,
                  enc_hidden=16, enc_layers=1, pred_hidden=16, pred_layers=1,
                  stack_factor=1)
model = TransducerModel(cfg, seed=2)
task = TaskConfig(vocab_size=6, feature_width=10, frames_per_label=(1, 2),
                  noise_std=0.2, label_len=(2, 4), seed=8)
utt = generate(task, 0)

print("\nloss value never depends on alpha; gradients into the prediction")
print("network scale with it:")
plain = float(model.loss(utt).value)
probe = "pred.l0.w_x"
for step in [100, 1125, 2500]:  # alpha 0, 0.5, 1 on this schedule
    loss = model.loss(utt, step=step, schedule=sched)
    grads = {n.name: g for n, g in ad.backward(loss).items()}
    norm = float(np.sqrt(np.sum(grads[probe] ** 2)))
    print(f"  step {step:>5}: alpha={alpha_at(step, sched):4.2f}  "
          f"loss == unregularized: {float(loss.value) == plain}  "
          f"|grad {probe}| = {norm:.6f}")
