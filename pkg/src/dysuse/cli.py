"""Command-line pipeline: graph, simulate, truth, train, eval, bench, ablate, case-study.

Every option can also be given in a ``key = value`` config file passed with
``--config``; keys carry a section prefix (``graph.n = 100``,
``model.lr = 0.003``).  Command-line flags win over the file.  A master seed
is mandatory and drives every random choice.  Each run writes its artifacts
into ``--out`` together with ``manifest.json`` (resolved config plus sha256
of every artifact).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from . import model as mdl
from .diffusion import DiffusionModelSpec
from .dyngraph import (
    build_snapshots,
    generate_ba,
    load_temporal_edgelist,
    perturb_snapshots,
    read_graph,
    seed_sets,
    symmetrize,
    assign_weights,
    write_graph,
)
from .errors import CapacityError, CorruptFileError, ParseError, ValidationError
from .evaluation import EvalReport, benchmark, evaluate, topk_overlap_report, write_report
from .oracle import estimate_susceptibility, generate_ground_truth, read_dataset, write_dataset, write_table_csv
from .rng import derive_seed

MANIFEST = "manifest.json"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text) -> list[int]:
    return [int(tok) for tok in str(text).replace(" ", "").split(",") if tok]


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


# key -> (type, default, help)
OPTIONS = {
    "seed": (int, None, "master seed (mandatory)"),
    "workers": (int, None, "worker threads for simulation and evaluation (env DYSUSE_WORKERS)"),
    "out": (str, None, "output directory"),
    "graph.source": (str, "ba", "'ba' to generate, or a temporal edge list path to ingest"),
    "graph.directed": (_bool, False, "treat an ingested edge list as directed"),
    "graph.n": (int, 100, "BA node count"),
    "graph.m": (int, 3, "BA edges per new node"),
    "graph.t": (int, 5, "number of snapshots"),
    "graph.initial_fraction": (float, 0.5, "fraction of edges forming the first snapshot"),
    "graph.node_frac": (float, 0.05, "node add/delete fraction per snapshot"),
    "graph.edge_frac": (float, 0.10, "edge add/delete fraction per snapshot"),
    "graph.randomize": (_bool, True, "draw each snapshot's fractions uniformly below the given maxima"),
    "graph.path": (str, None, "graph archive to read"),
    "diffusion.model": (str, "IC", "IC, LT or TR"),
    "diffusion.hop_cap": (_opt_int, None, "maximum hops per snapshot"),
    "diffusion.policy": (str, "per-snapshot", "per-snapshot or once-ever"),
    "diffusion.sims": (int, 1000, "Monte-Carlo simulations"),
    "simulate.seeds": (_int_list, None, "comma-separated seed nodes"),
    "truth.sizes": (_int_list, [5, 10, 15, 20, 25], "comma-separated seed-set sizes"),
    "truth.sets": (int, 20, "seed sets per size"),
    "truth.path": (str, None, "ground-truth CSV to read"),
    "truth.exclude": (str, None, "ground-truth CSV whose seed sets must not be reused"),
    "model.structural": (str, "coupled", "coupled or gcn"),
    "model.layers": (int, 3, "structural layers"),
    "model.rep_dim": (int, 8, "influence representation width"),
    "model.gate_width": (int, 8, "state-gate hidden width"),
    "model.attention_layers": (int, 1, "temporal attention layers"),
    "model.mask": (str, "causal", "causal or paper-literal"),
    "model.progressive": (_bool, True, "progressive coupling of snapshots"),
    "model.attention": (_bool, True, "temporal self-attention"),
    "model.lr": (float, mdl.ModelConfig.lr, "Adam learning rate"),
    "model.epochs": (int, mdl.ModelConfig.epochs, "maximum epochs"),
    "model.patience": (int, mdl.ModelConfig.patience, "early-stopping patience"),
    "model.batch_size": (int, mdl.ModelConfig.batch_size, "seed sets per gradient step"),
    "model.val_fraction": (float, mdl.ModelConfig.val_fraction, "validation share of the seed sets"),
    "model.inductive": (_bool, False, "allow ground truth from a different graph"),
    "model.checkpoint": (str, None, "model checkpoint to read"),
    "eval.truth": (str, None, "held-out ground truth for ablations"),
    "eval.name": (str, "test", "dataset label in reports"),
    "eval.k": (int, 5, "k for Precision@k / top-k lists"),
    "eval.runs": (int, 5, "benchmark repetitions"),
    "eval.seeds": (_int_list, None, "seed nodes for bench / case-study (default: top-degree set)"),
    "eval.size": (int, 10, "seed-set size when eval.seeds is not given"),
}

# flag spelling -> key, per subcommand
COMMON = {"--seed": "seed", "--workers": "workers", "--out": "out"}
GRAPH_IN = {"--graph": "graph.path"}
DIFFUSION = {"--model": "diffusion.model", "--hop-cap": "diffusion.hop_cap", "--policy": "diffusion.policy", "--sims": "diffusion.sims"}
MODEL = {
    "--structural": "model.structural",
    "--layers": "model.layers",
    "--rep-dim": "model.rep_dim",
    "--gate-width": "model.gate_width",
    "--attention-layers": "model.attention_layers",
    "--mask": "model.mask",
    "--progressive": "model.progressive",
    "--attention": "model.attention",
    "--lr": "model.lr",
    "--epochs": "model.epochs",
    "--patience": "model.patience",
    "--batch-size": "model.batch_size",
    "--val-fraction": "model.val_fraction",
}

COMMANDS = {
    "graph": (
        "build, perturb and weight a dynamic graph",
        {
            "--generate": "graph.source",
            "--ingest": "graph.source",
            "--directed": "graph.directed",
            "--n": "graph.n",
            "--m": "graph.m",
            "--t": "graph.t",
            "--initial-fraction": "graph.initial_fraction",
            "--node-frac": "graph.node_frac",
            "--edge-frac": "graph.edge_frac",
            "--randomize": "graph.randomize",
        },
    ),
    "simulate": ("Monte-Carlo susceptibility table for one seed set", {**GRAPH_IN, **DIFFUSION, "--seeds": "simulate.seeds"}),
    "truth": (
        "ground-truth dataset over many seed sets",
        {**GRAPH_IN, **DIFFUSION, "--sizes": "truth.sizes", "--sets": "truth.sets", "--exclude": "truth.exclude"},
    ),
    "train": ("train a model on a ground-truth dataset", {**GRAPH_IN, **MODEL, "--truth": "truth.path", "--inductive": "model.inductive"}),
    "eval": (
        "score a trained checkpoint on a ground-truth dataset",
        {**GRAPH_IN, "--truth": "truth.path", "--checkpoint": "model.checkpoint", "--name": "eval.name", "--k": "eval.k"},
    ),
    "bench": (
        "time a model forward against Monte-Carlo simulation",
        {**GRAPH_IN, **DIFFUSION, "--checkpoint": "model.checkpoint", "--runs": "eval.runs", "--seeds": "eval.seeds", "--size": "eval.size"},
    ),
    "ablate": (
        "train full, no-progressive and no-attention variants and compare test MAE",
        {**GRAPH_IN, **MODEL, "--truth": "truth.path", "--test-truth": "eval.truth", "--inductive": "model.inductive"},
    ),
    "case-study": (
        "top-k susceptible nodes: model versus Monte-Carlo",
        {
            **GRAPH_IN,
            **DIFFUSION,
            "--checkpoint": "model.checkpoint",
            "--seeds": "eval.seeds",
            "--size": "eval.size",
            "--k": "eval.k",
        },
    ),
}


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dysuse",
        description=__doc__.split("\n\n")[0],
        epilog="Config keys: " + ", ".join(k for k in OPTIONS),
    )
    parser.add_argument("--version", action="version", version=f"dysuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, flags) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value config file")
        for flag, key in {**COMMON, **flags}.items():
            typ, default, text = OPTIONS[key]
            shown = f"{text} [config: {key}; default: {default}]"
            if flag == "--generate":
                p.add_argument(flag, dest=key, choices=["ba"], default=None, help="generate a synthetic BA graph")
            elif flag == "--ingest":
                p.add_argument(flag, dest=key, default=None, metavar="PATH", help="ingest a temporal edge list `src dst time [weight]`")
            elif typ is _bool:
                p.add_argument(flag, dest=key, type=_bool, nargs="?", const=True, default=None, metavar="BOOL", help=shown)
            else:
                p.add_argument(flag, dest=key, type=str, default=None, help=shown)
    return parser


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "master_seed":
            key = "seed"
        if key not in OPTIONS:
            raise CliError(f"{path}:{no}: unknown config key {key!r}")
        out[key] = value
    return out


def resolve(ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into typed values."""
    cfg = read_config(ns.config) if ns.config else {}
    flags = {k: v for k, v in vars(ns).items() if k in OPTIONS and v is not None}
    out = {}
    for key, (typ, default, _) in OPTIONS.items():
        raw = flags.get(key, cfg.get(key))
        if raw is None:
            out[key] = default
            continue
        try:
            out[key] = typ(raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid value for {key}: {raw!r} ({exc})") from None
    if out["seed"] is None:
        raise CliError("a master seed is required (--seed or 'seed = ...' in the config)")
    if out["out"] is None:
        raise CliError("an output directory is required (--out or 'out = ...' in the config)")
    if out["workers"] is None:
        try:
            out["workers"] = max(1, int(os.environ.get("DYSUSE_WORKERS", "1")))
        except ValueError:
            raise CliError("DYSUSE_WORKERS must be an integer") from None
    if out["workers"] < 1:
        raise CliError("workers must be >= 1")
    return out


# ---------------------------------------------------------------------------
# artifacts


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Tracks the files a run writes so they can be hashed or rolled back."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.created_dir = not self.dir.exists()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.untracked: set[Path] = set()

    def path(self, name: str, *, hashed: bool = True) -> Path:
        p = self.dir / name
        self.files.append(p)
        if not hashed:
            self.untracked.add(p)
        return p

    def rollback(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_dir:
            try:
                self.dir.rmdir()
            except OSError:
                pass

    def write_manifest(self, command: str, config: dict):
        path = self.dir / MANIFEST
        manifest = {"artifacts": {}, "runs": []}
        if path.exists():
            try:
                manifest = json.loads(path.read_text(encoding="utf-8"))
            except ValueError:
                raise CorruptFileError(f"{path} is not valid JSON") from None
        for p in self.files:
            if p.exists() and p not in self.untracked:
                manifest["artifacts"][p.name] = {"sha256": sha256(p), "command": command}
        manifest["runs"].append(
            {
                "command": command,
                "version": __version__,
                "config": {k: v for k, v in sorted(config.items())},
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            }
        )
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def verify(path) -> Path:
    """Check ``path`` against the manifest in its directory, if it is listed there."""
    path = Path(path)
    if not path.exists():
        raise CliError(f"missing input file {path}")
    manifest = path.parent / MANIFEST
    if manifest.exists():
        try:
            entries = json.loads(manifest.read_text(encoding="utf-8")).get("artifacts", {})
        except ValueError:
            raise CorruptFileError(f"{manifest} is not valid JSON") from None
        entry = entries.get(path.name)
        if entry is not None and entry["sha256"] != sha256(path):
            raise CorruptFileError(f"{path} does not match the hash recorded in {manifest}")
    return path


def _need(cfg, key, what):
    if cfg[key] is None:
        flag = next((f for f, k in {**COMMON, **GRAPH_IN, **MODEL}.items() if k == key), key)
        raise CliError(f"{what} is required ({flag} or '{key} = ...')")
    return cfg[key]


def _spec(cfg) -> DiffusionModelSpec:
    return DiffusionModelSpec(cfg["diffusion.model"], cfg["diffusion.hop_cap"], cfg["diffusion.policy"])


def _load_graph(cfg):
    return read_graph(verify(_need(cfg, "graph.path", "a graph archive")))


def _load_truth(cfg, key="truth.path"):
    path = verify(_need(cfg, key, "a ground-truth file"))
    side = path.with_name(path.name + ".meta.json")
    verify(side)
    return read_dataset(path)


def _load_model(cfg):
    path = cfg["model.checkpoint"]
    if path is None or not Path(path).exists():
        raise CliError(f"no trained checkpoint found ({path or 'pass --checkpoint'})")
    return mdl.load(verify(path))


def _model_config(cfg, T: int) -> mdl.ModelConfig:
    return mdl.ModelConfig(
        T=T,
        structural=cfg["model.structural"],
        n_layers=cfg["model.layers"],
        rep_dim=cfg["model.rep_dim"],
        gate_width=cfg["model.gate_width"],
        attention_layers=cfg["model.attention_layers"],
        mask=cfg["model.mask"],
        progressive=cfg["model.progressive"],
        attention=cfg["model.attention"],
        lr=cfg["model.lr"],
        epochs=cfg["model.epochs"],
        patience=cfg["model.patience"],
        batch_size=cfg["model.batch_size"],
        val_fraction=cfg["model.val_fraction"],
        seed=derive_seed(cfg["seed"], 10) % 2**31,
    )


def _eval_seeds(cfg, g) -> tuple[int, ...]:
    if cfg["eval.seeds"]:
        return tuple(cfg["eval.seeds"])
    return seed_sets(g, cfg["eval.size"], 1, cfg["seed"])[-1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph(cfg, out: Outputs):
    seed = cfg["seed"]
    if cfg["graph.source"] == "ba":
        records = symmetrize(generate_ba(cfg["graph.n"], cfg["graph.m"], seed))
    else:
        records = load_temporal_edgelist(verify(cfg["graph.source"]), directed=cfg["graph.directed"])
    g = build_snapshots(records, cfg["graph.t"], cfg["graph.initial_fraction"])
    nf, ef = cfg["graph.node_frac"], cfg["graph.edge_frac"]
    g = perturb_snapshots(g, nf, nf, ef, ef, rng_seed=derive_seed(seed, 3), randomize=cfg["graph.randomize"])
    g = assign_weights(g)
    write_graph(g, out.path("graph.txt"))
    sizes = " ".join(f"{len(s.nodes)}/{s.n_edges}" for s in g.snapshots)
    print(f"graph: N={g.n_global} T={g.T} nodes/edges per snapshot: {sizes}")


def cmd_simulate(cfg, out: Outputs):
    g = _load_graph(cfg)
    seeds = _need(cfg, "simulate.seeds", "a seed set")
    table = estimate_susceptibility(g, _spec(cfg), seeds, cfg["diffusion.sims"], cfg["seed"], workers=cfg["workers"])
    write_table_csv(table, out.path("susceptibility.csv"))
    print(f"simulate: expected spread at T-1 = {table.spread():.4f}")


def cmd_truth(cfg, out: Outputs):
    g = _load_graph(cfg)
    exclude = read_dataset(verify(cfg["truth.exclude"])).seeds() if cfg["truth.exclude"] else ()
    ds = generate_ground_truth(
        g, _spec(cfg), cfg["truth.sizes"], cfg["truth.sets"], cfg["diffusion.sims"], cfg["seed"], workers=cfg["workers"], exclude=exclude
    )
    path = out.path("truth.csv")
    out.files.append(write_dataset(ds, path))
    print(f"truth: {len(ds)} seed sets, {ds.n_sims} simulations each")


def _train_one(cfg, g, ds, config, out: Outputs, prefix: str):
    model = mdl.DySuseModel(config)
    log = mdl.train(model, g, ds, rng_seed=derive_seed(cfg["seed"], 11), inductive=cfg["model.inductive"])
    log.write_csv(out.path(f"{prefix}train_log.csv", hashed=False))
    log.write_csv(out.path(f"{prefix}train_loss.csv"), include_seconds=False)
    mdl.save(model, out.path(f"{prefix}model.ckpt"))
    return model, log


def cmd_train(cfg, out: Outputs):
    g = _load_graph(cfg)
    ds = _load_truth(cfg)
    _, log = _train_one(cfg, g, ds, _model_config(cfg, g.T), out, "")
    print(f"train: best epoch {log.best_epoch}, validation MAE {log.best_val_mae:.4f}")


def cmd_eval(cfg, out: Outputs):
    model = _load_model(cfg)
    g = _load_graph(cfg)
    ds = _load_truth(cfg)
    report = evaluate(model, g, ds, cfg["eval.name"], k=cfg["eval.k"], workers=cfg["workers"])
    report.config = {"checkpoint_config": asdict(model.config)}
    out.path("eval.csv")
    out.path("eval.txt")
    write_report(report, out.dir)
    print(report.to_text(), end="")


def cmd_bench(cfg, out: Outputs):
    g = _load_graph(cfg)
    if cfg["model.checkpoint"] is not None:
        model = _load_model(cfg)
    else:
        model = mdl.DySuseModel(_model_config(cfg, g.T))
    seeds = _eval_seeds(cfg, g)
    rep = benchmark(g, model, _spec(cfg), seeds, cfg["diffusion.sims"], runs=cfg["eval.runs"], master_seed=cfg["seed"], workers=cfg["workers"])
    out.path("timing.txt", hashed=False).write_text(rep.to_text(), encoding="utf-8")
    print(rep.to_text(), end="")


ABLATIONS = (("full", {}), ("no-progressive", {"progressive": False}), ("no-attention", {"attention": False}))


def cmd_ablate(cfg, out: Outputs):
    g = _load_graph(cfg)
    ds = _load_truth(cfg)
    test = _load_truth(cfg, "eval.truth")
    base = _model_config(cfg, g.T)
    report = EvalReport()
    lines = ["variant,test_mae"]
    for name, change in ABLATIONS:
        model, _ = _train_one(cfg, g, ds, replace(base, **change), out, f"{name}_")
        evaluate(model, g, test, name, k=cfg["eval.k"], workers=cfg["workers"], report=report)
        lines.append(f"{name},{report.overall_mae(name):.17g}")
    out.path("ablation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    out.path("ablation.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")


def cmd_case_study(cfg, out: Outputs):
    model = _load_model(cfg)
    g = _load_graph(cfg)
    seeds = _eval_seeds(cfg, g)
    pred = model.predict(g, [seeds])[0]
    truth = estimate_susceptibility(g, _spec(cfg), seeds, cfg["diffusion.sims"], cfg["seed"], workers=cfg["workers"]).final
    rep = topk_overlap_report(pred, truth, cfg["eval.k"], exclude=seeds)
    text = f"seeds: {' '.join(map(str, seeds))}\n" + rep.to_text()
    out.path("topk.txt").write_text(text, encoding="utf-8")
    with open(out.path("topk.csv"), "w", encoding="utf-8") as fh:
        fh.write("rank,model_node,model_value,truth_node,truth_value\n")
        for i, (p, t) in enumerate(zip(rep.predicted, rep.truth), 1):
            fh.write(f"{i},{p},{pred[p]:.17g},{t},{truth[t]:.17g}\n")
    print(text, end="")


HANDLERS = {
    "graph": cmd_graph,
    "simulate": cmd_simulate,
    "truth": cmd_truth,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "case-study": cmd_case_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve(ns)
    except CliError as exc:
        print(f"dysuse {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    # only keys this subcommand reads go into the manifest echo
    allowed = set(COMMON.values()) | set(COMMANDS[ns.command][1].values())
    echo = {k: v for k, v in cfg.items() if k in allowed}
    out = Outputs(cfg["out"])
    try:
        HANDLERS[ns.command](cfg, out)
        out.write_manifest(ns.command, echo)
    except (CliError, ValidationError, ParseError, CorruptFileError, CapacityError, OSError) as exc:
        out.rollback()
        print(f"dysuse {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.rollback()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
