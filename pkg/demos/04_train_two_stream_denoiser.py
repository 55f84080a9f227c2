"""Train the two-stream denoiser end to end on synthetic data (a few minutes).

Pretrains the subject classifier, then runs joint training of the content
and subject streams under the four losses, printing the loss trajectory.
Artifacts (metrics.csv, checkpoints) land in ./demo_run/.
"""

import numpy as np

from diffsep import TrainConfig, LossWeights, generate_synthetic_dataset, train
from diffsep.metrics import load_metrics

data = generate_synthetic_dataset(n_subjects=3, n_classes=4, trials_per_cell=12,
                                  channels=4, length=96, sample_rate=128.0,
                                  snr=1.0, seed=42)

cfg = TrainConfig(
    T=60, beta_start=1e-4, beta_end=0.05, window=32, stride=16,
    weights=LossWeights(lambda_r=1.0, lambda_o=0.1, lambda_arc=0.1, lambda_td=5.0),
    learning_rate=2e-3, batch_size=16, total_steps=600, pretrain_steps=800,
    seed=0, width_config=(8, 16, 24), subject_width=16, token_dim=16,
    n_heads=4, time_dim=16, embed_dim=32, pretrain_lr=2e-3,
    checkpoint_interval=300, metrics_flush=100)

def show_pretrain(report):
    print(f"classifier pretraining: holdout accuracy {report.final_accuracy:.3f}")

state = train(data, cfg, "demo_run", pretrain_report_sink=show_pretrain)
print(f"trained to step {state.step}; checkpoints under demo_run/")

m = load_metrics("demo_run/metrics.csv")
print("\nloss trajectory (100-step means):")
print("  steps   l_r     l_o     l_arc   l_td    td_mse  total")
for lo in range(0, 600, 100):
    sl = slice(lo, lo + 100)
    print(f"  {lo + 1:4d}+ "
          + " ".join(f"{m[k][sl].mean():7.4f}" for k in
                     ("l_r", "l_o", "l_arc", "l_td", "td_mse", "total")))
print("\nreconstruction pressure drives l_r down; the overlap penalty keeps")
print("td_mse bounded while the margin loss pins the subject stream to its labels.")
