"""Generate ground truth on a dynamic BA graph, train the coupled model and compare it
with an untrained copy and with the last-snapshot static baseline.

Same setup as the desk-scale acceptance check; about five minutes on one core.
"""

import time

from dysuse.diffusion import DiffusionModelSpec
from dysuse.dyngraph import make_ba_dynamic
from dysuse.evaluation import evaluate
from dysuse.model import DySuseModel, ModelConfig, static_config, static_view, train
from dysuse.oracle import generate_ground_truth

g = make_ba_dynamic(n=100, m_attach=3, T=5, seed=0)
spec = DiffusionModelSpec("IC")
sizes = [5, 10, 15, 20, 25]

t0 = time.time()
train_set = generate_ground_truth(g, spec, sizes, 20, 1000, master_seed=0)
test_set = generate_ground_truth(g, spec, sizes, 5, 1000, master_seed=1, exclude=train_set.seeds())
print(f"ground truth: {len(train_set)} train / {len(test_set)} test sets in {time.time() - t0:.1f}s")

cfg = ModelConfig(T=g.T)  # lr 3e-3, up to 600 epochs, patience 50
untrained = evaluate(DySuseModel(cfg), g, test_set, "untrained").overall_mae()

model = DySuseModel(cfg)
log = train(model, g, train_set)
print(f"trained {len(log.rows) - 1} epochs, best val MAE {log.best_val_mae:.4f} at epoch {log.best_epoch}")

sg = static_view(g)
static = DySuseModel(static_config(cfg))
train(static, sg, train_set, inductive=True)

report = evaluate(model, g, test_set, "dynamic")
evaluate(static, sg, test_set, "static", report=report)
print(report.to_text())
print(f"untrained MAE {untrained:.3f}")
