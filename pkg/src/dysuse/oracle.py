"""Ground-truth susceptibility: Monte-Carlo estimation and exact enumeration.

The Monte-Carlo path runs the batched engine in :mod:`dysuse.diffusion`.
The exact path is a separate, deliberately plain set-based implementation
of the same semantics that enumerates every joint outcome of the random
draws.  It exists to check the first one.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DiffusionModelSpec, run_dynamic
from .dyngraph import DynamicGraph, seed_sets
from .errors import CapacityError, CorruptFileError, ValidationError
from .rng import SimulationStreams, derive_seed

__all__ = [
    "SusceptibilityTable",
    "GroundTruthDataset",
    "estimate_susceptibility",
    "exact_susceptibility",
    "generate_ground_truth",
    "write_table_csv",
    "write_dataset",
    "read_dataset",
]

EXACT_BUDGET = 2**20
LT_EXACT_MAX_NODES = 6


@dataclass
class SusceptibilityTable:
    """Per-timestamp, per-node influence probabilities.

    ``values[t, v]`` is the fraction of simulations in which ``v`` is
    influenced by the end of snapshot ``t``.  ``counts`` holds the integer
    tallies behind the Monte-Carlo values (``None`` for exact tables).
    """

    values: np.ndarray
    n_simulations: int
    seeds: tuple[int, ...]
    counts: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def spread(self, t: int = -1) -> float:
        return float(self.values[t].sum())


@dataclass
class GroundTruthDataset:
    records: list[tuple[tuple[int, ...], SusceptibilityTable]]
    graph_fingerprint: str
    spec: DiffusionModelSpec
    n_sims: int = 0
    master_seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def seeds(self) -> list[tuple[int, ...]]:
        return [s for s, _ in self.records]

    def targets(self) -> np.ndarray:
        """Final-timestamp values, shape ``(records, N)``."""
        return np.stack([tab.final for _, tab in self.records])


# ---------------------------------------------------------------------------
# Monte-Carlo


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DYSUSE_WORKERS", "1")))
    except ValueError:
        return 1


def _count_chunk(g, spec, seeds, master_seed, idx):
    traj = run_dynamic(g, spec, seeds, SimulationStreams(master_seed, idx))
    return traj.sum(axis=1, dtype=np.int64)


def estimate_susceptibility(
    g: DynamicGraph,
    spec: DiffusionModelSpec,
    seeds,
    n_sims: int = 1000,
    master_seed: int = 0,
    *,
    workers: int | None = None,
    chunk: int = 250,
) -> SusceptibilityTable:
    """Monte-Carlo estimate of every node's susceptibility at every timestamp.

    Simulation ``i`` draws from the counter-based stream ``(master_seed, i)``,
    so the result does not depend on ``workers`` or ``chunk``.
    """
    if n_sims < 1:
        raise ValidationError("n_sims must be >= 1")
    seeds = tuple(sorted(set(int(s) for s in seeds)))
    workers = workers or _default_workers()
    chunks = [np.arange(a, min(a + chunk, n_sims)) for a in range(0, n_sims, chunk)]
    counts = np.zeros((g.T, g.n_global), dtype=np.int64)
    if workers == 1 or len(chunks) == 1:
        for idx in chunks:
            counts += _count_chunk(g, spec, seeds, master_seed, idx)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(lambda idx: _count_chunk(g, spec, seeds, master_seed, idx), chunks):
                counts += part
    return SusceptibilityTable(counts / n_sims, n_sims, seeds, counts)


# ---------------------------------------------------------------------------
# exact enumeration


def _cells(thresholds) -> list[tuple[float, float]]:
    """Split [0, 1] at the given thresholds; return (midpoint, length) per cell."""
    cuts = sorted({0.0, 1.0} | {min(max(float(x), 0.0), 1.0) for x in thresholds})
    merged = [cuts[0]]
    for c in cuts[1:]:
        if c - merged[-1] > 1e-12:
            merged.append(c)
    merged[-1] = 1.0
    return [((a + b) / 2, b - a) for a, b in zip(merged, merged[1:])]


def _subset_sums(weights) -> set[float]:
    sums = {0.0}
    for w in weights:
        sums |= {s + w for s in sums}
    return sums


def _reference_run(g, spec, seeds, coin, theta):
    """Plain set-based dynamic diffusion for one fixed outcome of all draws.

    ``coin(kind, t, u, v)`` returns the uniform draw for an edge; ``theta``
    maps each node to its LT threshold.
    """
    influenced = set(seeds)
    tried = set()
    first_w = {}
    for snap in g.snapshots:
        for u, v, w in snap.edges():
            first_w.setdefault((u, v), w)
    trajectory = []
    for t, snap in enumerate(g.snapshots):
        present = set(snap.nodes.tolist())
        out_edges = {}
        in_edges = {}
        for u, v, w in snap.edges():
            out_edges.setdefault(u, []).append((v, w))
            in_edges.setdefault(v, []).append((u, w))
        frontier = influenced & present
        hops = 0
        while frontier and (spec.hop_cap is None or hops < spec.hop_cap):
            new = set()
            if spec.kind == "LT":
                for v in present - influenced:
                    mass = sum(w for u, w in in_edges.get(v, []) if u in influenced)
                    if mass >= theta[v]:
                        new.add(v)
            else:
                for u in frontier:
                    for v, w in out_edges.get(u, []):
                        if v in influenced:
                            continue
                        if spec.kind == "IC":
                            if spec.attempt_policy == "once-ever":
                                if (u, v) in tried:
                                    continue
                                tried.add((u, v))
                                ok = coin("ic_once", None, u, v) < w
                            else:
                                ok = coin("ic", t, u, v) < w
                        else:
                            if spec.attempt_policy == "once-ever":
                                ok = coin("tr_once", None, u, v) < first_w[(u, v)]
                            else:
                                ok = coin("tr", t, u, v) < w
                        if ok:
                            new.add(v)
            if not new:
                break
            influenced |= new
            frontier = new
            hops += 1
        trajectory.append(frozenset(influenced))
    return trajectory


def exact_susceptibility(g: DynamicGraph, spec: DiffusionModelSpec, seeds, *, budget: int = EXACT_BUDGET) -> SusceptibilityTable:
    """Exact susceptibilities by enumerating every joint outcome of the draws.

    Each uniform draw is only ever compared against a finite set of values
    (edge weights for IC/TR, reachable in-weight sums for LT), so ``[0, 1]``
    splits into cells on which the whole run is constant.  The product of
    cells is enumerated with its probability mass.
    """
    seeds = tuple(sorted(set(int(s) for s in seeds)))
    variables = []  # (key, cells)
    if spec.kind in ("IC", "TR"):
        if spec.attempt_policy == "per-snapshot":
            kind = spec.kind.lower()
            for t, snap in enumerate(g.snapshots):
                for u, v, w in snap.edges():
                    variables.append(((kind, t, u, v), _cells([w])))
        else:
            seen: dict[tuple[int, int], list[float]] = {}
            for snap in g.snapshots:
                for u, v, w in snap.edges():
                    seen.setdefault((u, v), []).append(w)
            kind = spec.kind.lower() + "_once"
            for (u, v), ws in seen.items():
                cuts = ws if spec.kind == "IC" else ws[:1]
                variables.append(((kind, None, u, v), _cells(cuts)))
    else:
        active = sorted(set().union(*(set(s.nodes.tolist()) for s in g.snapshots)))
        if len(active) > LT_EXACT_MAX_NODES:
            raise CapacityError(f"exact LT supports at most {LT_EXACT_MAX_NODES} nodes, got {len(active)}")
        for v in active:
            sums = set()
            for snap in g.snapshots:
                _, ws = snap.in_neighbors(v)
                sums |= _subset_sums(ws.tolist())
            variables.append((("lt", v), _cells(sums)))

    total = math.prod(len(c) for _, c in variables)
    if total > budget:
        raise CapacityError(f"{total} joint outcomes exceed the enumeration budget {budget}")

    values = np.zeros((g.T, g.n_global))
    keys = [k for k, _ in variables]
    for combo in itertools.product(*(c for _, c in variables)):
        prob = 1.0
        assignment = {}
        for key, (mid, length) in zip(keys, combo):
            prob *= length
            assignment[key] = mid
        if prob == 0.0:
            continue
        theta = {key[1]: val for key, val in assignment.items() if key[0] == "lt"}
        traj = _reference_run(g, spec, seeds, lambda kind, t, u, v: assignment[(kind, t, u, v)], theta)
        for t, inf in enumerate(traj):
            for v in inf:
                values[t, v] += prob
    return SusceptibilityTable(np.clip(values, 0.0, 1.0), 0, seeds)


# ---------------------------------------------------------------------------
# datasets


def generate_ground_truth(
    g: DynamicGraph,
    spec: DiffusionModelSpec,
    seed_sizes,
    sets_per_size: int,
    n_sims: int = 1000,
    master_seed: int = 0,
    *,
    workers: int | None = None,
    exclude=(),
) -> GroundTruthDataset:
    """Monte-Carlo ground truth for ``sets_per_size`` seed sets of each size.

    Seed sets come from :func:`dysuse.dyngraph.seed_sets`; sets listed in
    ``exclude`` are dropped (used to keep test sets disjoint from training).
    """
    exclude = {tuple(sorted(s)) for s in exclude}
    records = []
    for k in seed_sizes:
        for seeds in seed_sets(g, int(k), sets_per_size, derive_seed(master_seed, 1, int(k))):
            if seeds in exclude:
                continue
            table = estimate_susceptibility(
                g, spec, seeds, n_sims, derive_seed(master_seed, 2, len(records)), workers=workers
            )
            records.append((seeds, table))
    return GroundTruthDataset(records, g.fingerprint(), spec, n_sims, master_seed)


def write_table_csv(table: SusceptibilityTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,node,value\n")
        T, n = table.values.shape
        for t in range(T):
            for v in range(n):
                fh.write(f"{t},{v},{table.values[t, v]:.17g}\n")


def write_dataset(ds: GroundTruthDataset, path) -> Path:
    """Write ``path`` (CSV) and ``path.meta.json``; returns the sidecar path."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("seed_set_id,t,node,value\n")
        for i, (_, tab) in enumerate(ds.records):
            T, n = tab.values.shape
            for t in range(T):
                row = tab.values[t]
                for v in range(n):
                    fh.write(f"{i},{t},{v},{row[v]:.17g}\n")
    meta = {
        "format": "dysuse-truth v1",
        "graph_hash": ds.graph_fingerprint,
        "spec": ds.spec.as_dict(),
        "n_sims": ds.n_sims,
        "master_seed": ds.master_seed,
        "seed_sets": [list(s) for s in ds.seeds()],
        **ds.meta,
    }
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return side


def read_dataset(path) -> GroundTruthDataset:
    path = Path(path)
    side = path.with_name(path.name + ".meta.json")
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
        seeds = [tuple(s) for s in meta["seed_sets"]]
        spec = DiffusionModelSpec(**meta["spec"])
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, KeyError, ValueError) as exc:
        raise CorruptFileError(f"cannot read ground truth {path}: {exc}") from None
    if len(seeds) == 0:
        return GroundTruthDataset([], meta["graph_hash"], spec, meta["n_sims"], meta["master_seed"])
    ids, ts, vs = raw[:, 0].astype(int), raw[:, 1].astype(int), raw[:, 2].astype(int)
    T, n = ts.max() + 1, vs.max() + 1
    values = np.zeros((len(seeds), T, n))
    values[ids, ts, vs] = raw[:, 3]
    records = [(s, SusceptibilityTable(values[i], meta["n_sims"], s)) for i, s in enumerate(seeds)]
    extra = {k: v for k, v in meta.items() if k not in ("format", "graph_hash", "spec", "n_sims", "master_seed", "seed_sets")}
    return GroundTruthDataset(records, meta["graph_hash"], spec, meta["n_sims"], meta["master_seed"], extra)
