"""Acceptance criteria AC-1 .. AC-9.

Each test records its criterion id and a one-line measurement; the terminal
summary prints one PASS/FAIL line per criterion.  The desk-scale learning
setup (AC-5, AC-7, AC-8) is built once per module and takes several minutes.
"""

import itertools
import time

import numpy as np
import pytest

from dysuse import numerics as nx
from dysuse.cli import main as cli_main
from dysuse.diffusion import DiffusionModelSpec
from dysuse.dyngraph import make_ba_dynamic, seed_sets
from dysuse.evaluation import benchmark, mae
from dysuse.model import DySuseModel, ModelConfig, static_config, static_view, train
from dysuse.oracle import estimate_susceptibility, exact_susceptibility, generate_ground_truth
from dysuse.structural import coupledgnn_forward, gcn_forward, initial_representation
from gradcheck import check
from toy import graph, random_small_graph

IC, TR = DiffusionModelSpec("IC"), DiffusionModelSpec("TR")

# desk-scale protocol shared by AC-5 / AC-7 / AC-8
DESK_GRAPH = dict(n=100, m_attach=3, T=5, seed=0)
DESK_SIZES = [5, 10, 15, 20, 25]
DESK_TRAIN_SETS = 20
DESK_TEST_SETS = 5
DESK_SIMS = 1000
DESK_LR = 3e-3
DESK_EPOCHS = 600
DESK_PATIENCE = 50


def tag(record_property, ac, detail):
    record_property("criterion", ac)
    record_property("detail", detail)


# ---------------------------------------------------------------------------
# shared data


@pytest.fixture(scope="module")
def oracle_runs():
    """MC (20k sims) and exact tables on random small dynamic graphs, IC and TR."""
    rng = np.random.default_rng(2024)
    runs = []
    start = time.perf_counter()
    for i in range(24):
        g = random_small_graph(rng, max_nodes=5, max_edges=5, max_T=3)
        k = int(rng.integers(1, min(2, g.n_global) + 1))
        seeds = tuple(sorted(rng.choice(g.n_global, size=k, replace=False).tolist()))
        for spec in (IC, TR):
            mc = estimate_susceptibility(g, spec, seeds, 20000, master_seed=i)
            ex = exact_susceptibility(g, spec, seeds)
            runs.append((spec.kind, mc, ex))
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def desk():
    start = time.perf_counter()
    g = make_ba_dynamic(**DESK_GRAPH)
    train_set = generate_ground_truth(g, IC, DESK_SIZES, DESK_TRAIN_SETS, DESK_SIMS, master_seed=0)
    test_set = generate_ground_truth(
        g, IC, DESK_SIZES, DESK_TEST_SETS, DESK_SIMS, master_seed=1, exclude=train_set.seeds()
    )
    base = ModelConfig(T=g.T, lr=DESK_LR, epochs=DESK_EPOCHS, patience=DESK_PATIENCE)
    return {"g": g, "train": train_set, "test": test_set, "config": base, "setup_seconds": time.perf_counter() - start}


def _test_mae(model, g, ds):
    return mae(model.predict(g, ds.seeds()), ds.targets())


@pytest.fixture(scope="module")
def desk_full(desk):
    start = time.perf_counter()
    model = DySuseModel(desk["config"])
    untrained = _test_mae(model, desk["g"], desk["test"])
    train(model, desk["g"], desk["train"])
    return model, untrained, _test_mae(model, desk["g"], desk["test"]), time.perf_counter() - start


@pytest.fixture(scope="module")
def desk_static(desk):
    start = time.perf_counter()
    sg = static_view(desk["g"])
    model = DySuseModel(static_config(desk["config"]))
    # the last snapshot has a different fingerprint but the same node universe
    train(model, sg, desk["train"], inductive=True)
    return _test_mae(model, sg, desk["test"]), time.perf_counter() - start


# ---------------------------------------------------------------------------


def test_ac1_oracle_agreement(oracle_runs, record_property):
    runs, seconds = oracle_runs
    worst = max(np.abs(mc.values - ex.values).max() for _, mc, ex in runs)
    n_graphs = len(runs) // 2
    tag(record_property, "AC-1", f"{n_graphs} graphs x IC/TR, max |MC-exact| = {worst:.4f} (<= 0.02), {seconds:.1f}s (<= 60s)")
    assert n_graphs >= 20
    assert worst <= 0.02
    assert seconds <= 60


def _single_snapshot_graphs():
    # every directed edge set of size <= 4 on 3 nodes, plus random 4- and 5-node graphs
    rng = np.random.default_rng(7)
    pairs = [(u, v) for u in range(3) for v in range(3) if u != v]
    for k in range(5):
        for chosen in itertools.combinations(pairs, k):
            w = rng.uniform(0.05, 1.0, size=k)
            yield graph(3, (range(3), [(u, v, float(x)) for (u, v), x in zip(chosen, w)]))
    for _ in range(60):
        n = int(rng.integers(4, 6))
        cand = [(u, v) for u in range(n) for v in range(n) if u != v]
        k = int(rng.integers(0, 5))
        chosen = [cand[i] for i in rng.choice(len(cand), size=k, replace=False)]
        w = rng.choice([0.1, 0.25, 0.5, 0.75, 1.0], size=k)
        yield graph(n, (range(n), [(u, v, float(x)) for (u, v), x in zip(chosen, w)]))


def test_ac2_tr_generalizes_ic(record_property):
    worst, count = 0.0, 0
    for g in _single_snapshot_graphs():
        for seeds in [(0,), (0, 1)]:
            a = exact_susceptibility(g, IC, seeds).values
            b = exact_susceptibility(g, TR, seeds).values
            worst = max(worst, float(np.abs(a - b).max()))
            count += 1
    tag(record_property, "AC-2", f"{count} single-snapshot cases, max |TR-IC| = {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


def test_ac3_gradient_correctness(record_property):
    g = make_ba_dynamic(n=10, m_attach=2, T=3, seed=4)
    assert g.T == 3
    rng = np.random.default_rng(11)
    errors, draws, kinked_draws = [], 0, 0
    while len(errors) < 5:
        draws += 1
        model = DySuseModel(ModelConfig(T=3, n_layers=3, attention_layers=1, seed=draws))
        for p in model.parameters():
            p.data[...] += rng.normal(0.0, 0.3, p.shape)
        seeds = [tuple(sorted(rng.choice(g.snapshots[0].nodes, size=2, replace=False).tolist())) for _ in range(2)]
        target = rng.uniform(size=(2, g.n_global))
        worst, kinked = check(lambda: nx.sum_abs_error(model.forward_batch(g, seeds), target), model.parameters())
        if kinked:
            kinked_draws += 1
            continue
        errors.append(worst)
    tag(record_property, "AC-3", f"5 draws, max relative error {max(errors):.2e} (<= 1e-4); {kinked_draws} kinked draws redrawn")
    assert max(errors) <= 1e-4


def test_ac4_structural_contracts(record_property):
    rng = np.random.default_rng(5)
    bad = {"range": 0, "seed": 0, "mask": 0, "causal": 0}
    for i in range(1000):
        g = random_small_graph(rng, max_nodes=7, max_edges=9, max_T=4)
        structural = "coupled" if i % 2 == 0 else "gcn"
        model = DySuseModel(ModelConfig(T=g.T, structural=structural, seed=i))
        for p in model.parameters():
            p.data[...] += rng.normal(0.0, 1.5, p.shape)
        n = g.n_global
        seeds = [tuple(sorted(rng.choice(n, size=int(rng.integers(1, n)), replace=False).tolist())) for _ in range(2)]
        trace = {}
        with nx.no_grad():
            y = model.forward_batch(g, seeds, trace=trace).data
        bad["range"] += int(not ((y >= 0) & (y <= 1)).all())

        S = np.zeros((2, n))
        for b, s in enumerate(seeds):
            S[b, list(s)] = 1.0
        with nx.no_grad():
            for t, snap in enumerate(g.snapshots):
                x = trace["x_bar"][t]
                if structural == "coupled":
                    r = initial_representation(n, model.config.rep_dim, model.config.seed)
                    for layer in model.structural.layers:
                        x, r = coupledgnn_forward(snap, x, r, [layer], S)
                        bad["seed"] += int(not (x.data[S == 1] == 1.0).all())
                else:
                    for theta in model.structural.thetas:
                        x = gcn_forward(snap, x, [theta], S)
                        bad["seed"] += int(not (x.data[S == 1] == 1.0).all())

        X = nx.stack(trace["x"], axis=-1).data
        masked = ~np.isfinite(model.temporal.mask)
        bad["mask"] += sum(int((w[..., masked] != 0).any()) for w in model.temporal.weights(X))
        if g.T > 1:
            t = int(rng.integers(0, g.T - 1))
            Y = X.copy()
            Y[..., t + 1 :] = rng.normal(0.0, 5.0, Y[..., t + 1 :].shape)
            with nx.no_grad():
                za, zb = model.temporal(X).data, model.temporal(Y).data
            bad["causal"] += int(not np.array_equal(za[..., : t + 1], zb[..., : t + 1]))
    tag(record_property, "AC-4", "1000 random inputs, violations " + ", ".join(f"{k}={v}" for k, v in bad.items()))
    assert not any(bad.values())


def test_ac5_desk_learning(desk, desk_full, desk_static, record_property):
    _, untrained, trained, full_seconds = desk_full
    static, static_seconds = desk_static
    total = desk["setup_seconds"] + full_seconds + static_seconds
    tag(
        record_property,
        "AC-5",
        f"test MAE {trained:.4f} (<= 0.15), untrained {untrained:.4f}, static {static:.4f}, {total / 60:.1f} min (<= 15)",
    )
    assert trained <= 0.15
    assert trained < untrained
    assert trained < static
    assert total <= 15 * 60


def test_ac6_monotone_ground_truth(oracle_runs, desk, record_property):
    tables = [mc for _, mc, _ in oracle_runs[0]]
    tables += [tab for ds in (desk["train"], desk["test"]) for _, tab in ds.records]
    violations = sum(int((np.diff(tab.values, axis=0) < 0).any()) for tab in tables)
    tag(record_property, "AC-6", f"{len(tables)} MC tables, {violations} with a decrease over t")
    assert violations == 0


def test_ac7_speed_ratio(desk_full, record_property):
    model = desk_full[0]
    g = make_ba_dynamic(n=1000, m_attach=3, T=5, seed=1)
    seeds = seed_sets(g, 10, 2, rng_seed=3)[0]
    rep = benchmark(g, model, IC, seeds, 1000, runs=5, master_seed=0, workers=1)
    tag(
        record_property,
        "AC-7",
        f"forward {rep.model_median * 1e3:.1f} ms vs MC {rep.mc_median:.2f} s, ratio {rep.ratio:.0f}x (>= 100x) [{rep.machine}]",
    )
    assert rep.ratio >= 100


def test_ac8_ablations(desk, desk_full, record_property):
    full = desk_full[2]
    out = {}
    for name, change in (("no-attention", {"attention": False}), ("no-progressive", {"progressive": False})):
        cfg = ModelConfig(**{**desk["config"].__dict__, **change})
        model = DySuseModel(cfg)
        train(model, desk["g"], desk["train"])
        out[name] = _test_mae(model, desk["g"], desk["test"])
    tag(
        record_property,
        "AC-8",
        f"full {full:.4f} vs no-attention {out['no-attention']:.4f}, no-progressive {out['no-progressive']:.4f} (both must be higher)",
    )
    assert out["no-attention"] > full
    assert out["no-progressive"] > full


def _pipeline(d):
    args = [
        ["graph", "--n", 40, "--m", 2, "--t", 3],
        ["truth", "--graph", d / "graph.txt", "--sizes", "3,6", "--sets", 5, "--sims", 300],
        ["train", "--graph", d / "graph.txt", "--truth", d / "truth.csv", "--epochs", 5, "--lr", 0.003],
    ]
    for a in args:
        assert cli_main([str(x) for x in a + ["--seed", 42, "--out", d]]) == 0


def test_ac9_reproducibility(tmp_path, record_property):
    names = ["graph.txt", "truth.csv", "train_loss.csv", "model.ckpt"]
    for run in ("a", "b"):
        _pipeline(tmp_path / run)
    same = {n: (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names}
    tag(record_property, "AC-9", "byte-identical across two runs: " + ", ".join(f"{n}={v}" for n, v in same.items()))
    assert all(same.values())
