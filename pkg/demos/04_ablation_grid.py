"""Sweeping the three MI loss weights over a small Cartesian grid.

The (0,0,0) corner reproduces plain cross-entropy training bit-for-bit;
every other corner switches one or more MI objectives on. The same sweep is
available from the command line via `mimkd ablate`.

Run: python3 demos/04_ablation_grid.py
"""

import itertools
import tempfile

from mimkd.data import synth_shapes_dataset
from mimkd.objectives import LossWeights
from mimkd.trainer import TrainConfig, distill, train_teacher

handle = synth_shapes_dataset(num_classes=8, per_class=150, seed=0)
train, test = handle.split(960)

short = dict(epochs=5, decay_epochs=(4,))
out = tempfile.mkdtemp(prefix="mimkd_ablate_")
teacher = train_teacher(TrainConfig(mode="teacher", **short), train, test,
                        out_dir=out)
print(f"teacher: {teacher.final_acc:.2f}%\n")

print("lambda_g  lambda_l  lambda_f  student_acc")
for lg, ll, lf in itertools.product((0.0, 1.0), repeat=3):
    cfg = TrainConfig(mode="mimkd",
                      weights=LossWeights(1.0, lg, ll, lf), **short)
    record = distill(cfg, teacher.checkpoint_path, train, test)
    print(f"{lg:8.1f}  {ll:8.1f}  {lf:8.1f}  {record.final_acc:10.2f}")
