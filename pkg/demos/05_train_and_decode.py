"""Train a small transducer on the synthetic task, then decode and inspect."""

import numpy as np

from rnnt_fusion.data import TaskConfig, generate, split
from rnnt_fusion.decoding import edit_distance, greedy_decode
from rnnt_fusion.model import ModelConfig
from rnnt_fusion.regularizer import Schedule
from rnnt_fusion.trainer import TrainConfig, train

model_cfg = ModelConfig(vocab_size=6, feature_width=10, d_enc=16, d_pred=16,
                        d_joint=16, d_rank=8, fusion_kind="bilinear-lowrank",
                        embed_dim=16, enc_hidden=16, enc_layers=1,
                        pred_hidden=16, pred_layers=1, stack_factor=1)
task = TaskConfig(vocab_size=6, feature_width=10, frames_per_label=(1, 1),
                  noise_std=0.0, silence_prob=0.0, label_len=(2, 4), seed=21)
config = TrainConfig(model=model_cfg, task=task, schedule=Schedule(50, 400),
                     reg_enabled=True, batch_size=8, total_steps=400,
                     eval_every=100, n_train=128, n_dev=16, seed=21)

print("training a low-rank bilinear joint on the noiseless task...")
result = train(config)
print("step  train_loss  dev_loss  dev_WER%  alpha")
for row in result.history:
    print(f"{row.step:>4}  {row.train_loss:10.4f}  {row.dev_loss:8.4f}  "
          f"{row.dev_wer:8.3f}  {row.alpha:5.3f}")

model = result.model
_, dev_range = split(config.n_train, config.n_dev)
print("\ngreedy decodes on the first few dev utterances:")
for idx in list(dev_range)[:5]:
    utt = generate(task, idx)
    hyp = greedy_decode(model, utt.features)
    dist = edit_distance(utt.labels, hyp.labels)
    print(f"  ref {utt.labels} -> hyp {hyp.labels}  (edit distance {dist})")

# The text-only view: distributions conditioned on the history alone.
labels = generate(task, dev_range[0]).labels
ilm = model.internal_lm_logprobs(labels).value
print("\ninternal-LM next-symbol argmax after each history prefix:")
for u in range(ilm.shape[0]):
    print(f"  after {labels[:u]}: class {int(np.argmax(ilm[u]))} "
          f"(blank is {model.blank_id})")
