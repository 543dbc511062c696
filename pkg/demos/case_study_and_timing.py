"""Top-k susceptible nodes for one seed set, model against Monte-Carlo, and a timing
comparison of one model forward with a 1000-simulation estimate.  About a minute on one core."""

from dysuse.diffusion import DiffusionModelSpec
from dysuse.dyngraph import make_ba_dynamic, seed_sets
from dysuse.evaluation import benchmark, topk_overlap_report
from dysuse.model import DySuseModel, ModelConfig, train
from dysuse.oracle import estimate_susceptibility, generate_ground_truth

g = make_ba_dynamic(n=80, m_attach=2, T=3, seed=5)
spec = DiffusionModelSpec("IC")
model = DySuseModel(ModelConfig(T=g.T))
train(model, g, generate_ground_truth(g, spec, [4, 8, 12], 20, 1000, master_seed=2))

seeds = seed_sets(g, 4, 1, rng_seed=0)[0]  # the top-degree set
truth = estimate_susceptibility(g, spec, seeds, 1000, master_seed=3).final
pred = model.predict(g, [seeds])[0]
print(f"seeds {seeds}")
print(topk_overlap_report(pred, truth, 8, exclude=seeds).to_text())

print(benchmark(g, model, spec, seeds, 1000, runs=3).to_text())
