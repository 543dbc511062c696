"""Dynamic graphs: ingestion, snapshot construction, perturbation and weighting.

A :class:`DynamicGraph` is a fixed node universe ``[0, n_global)`` plus an
ordered list of :class:`Snapshot` objects.  Nodes missing from a snapshot are
simply isolated there, which keeps every per-snapshot array the same shape.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import CorruptFileError, ParseError, ValidationError

__all__ = [
    "TemporalEdgeRecord",
    "Snapshot",
    "DynamicGraph",
    "load_temporal_edgelist",
    "symmetrize",
    "build_snapshots",
    "perturb_snapshots",
    "assign_weights",
    "generate_ba",
    "seed_sets",
    "make_ba_dynamic",
    "graph_to_text",
    "graph_from_text",
    "write_graph",
    "read_graph",
]


class TemporalEdgeRecord(NamedTuple):
    src: int
    dst: int
    time: float
    weight: float | None = None


def _readonly(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Snapshot:
    """One timestamp of a dynamic graph.

    Edges are stored as parallel arrays ``src``, ``dst``, ``weight``; their
    order is the insertion order used to build the snapshot.
    """

    index: int
    nodes: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.unique(self.nodes), np.int64))
        object.__setattr__(self, "src", _readonly(self.src, np.int64))
        object.__setattr__(self, "dst", _readonly(self.dst, np.int64))
        object.__setattr__(self, "weight", _readonly(self.weight, np.float64))
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise ValidationError("edge arrays must have equal length")
        if len(self.src):
            if not (np.isin(self.src, self.nodes).all() and np.isin(self.dst, self.nodes).all()):
                raise ValidationError(f"snapshot {self.index}: edge endpoint not among present nodes")
            pairs = np.stack([self.src, self.dst], axis=1)
            if len(np.unique(pairs, axis=0)) != len(pairs):
                raise ValidationError(f"snapshot {self.index}: duplicate (src, dst) pair")
            if (self.weight < 0).any() or (self.weight > 1).any() or np.isnan(self.weight).any():
                raise ValidationError(f"snapshot {self.index}: edge weight outside [0, 1]")

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def present_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[self.nodes] = True
        return mask

    def in_neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(sources, weights)`` of the edges entering ``v``."""
        sel = self.dst == v
        return self.src[sel], self.weight[sel]

    def out_neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(targets, weights)`` of the edges leaving ``v``."""
        sel = self.src == v
        return self.dst[sel], self.weight[sel]

    def in_degree(self, n: int) -> np.ndarray:
        return np.bincount(self.dst, minlength=n)

    def out_degree(self, n: int) -> np.ndarray:
        return np.bincount(self.src, minlength=n)

    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()))


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    n_global: int
    snapshots: tuple[Snapshot, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.snapshots:
            raise ValidationError("a dynamic graph needs at least one snapshot")
        for t, s in enumerate(self.snapshots):
            if s.index != t:
                raise ValidationError(f"snapshot indices must be 0..T-1, got {s.index} at position {t}")
            if len(s.nodes) and s.nodes.max() >= self.n_global:
                raise ValidationError(f"snapshot {t} references node >= n_global={self.n_global}")
            if len(s.nodes) and s.nodes.min() < 0:
                raise ValidationError("node ids must be non-negative")

    @property
    def T(self) -> int:
        return len(self.snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, t: int) -> Snapshot:
        return self.snapshots[t]

    @cached_property
    def edge_index(self) -> tuple[int, tuple[np.ndarray, ...]]:
        """Global ids for every distinct (src, dst) pair.

        Returns the number of distinct pairs and, per snapshot, the global id
        of each of its edges.
        """
        keys = [s.src * self.n_global + s.dst for s in self.snapshots]
        uniq = np.unique(np.concatenate(keys)) if keys else np.empty(0, np.int64)
        return len(uniq), tuple(np.searchsorted(uniq, k) for k in keys)

    @cached_property
    def first_weight(self) -> np.ndarray:
        """Weight of each global edge in the first snapshot that contains it."""
        n, gids = self.edge_index
        w = np.full(n, np.nan)
        for s, g in zip(reversed(self.snapshots), reversed(gids)):
            w[g] = s.weight
        return w

    def present_masks(self) -> np.ndarray:
        """Boolean array ``(T, n_global)`` of node presence."""
        return np.stack([s.present_mask(self.n_global) for s in self.snapshots])

    def fingerprint(self) -> str:
        return hashlib.sha256(graph_to_text(self).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# ingestion


def _parse_time(tok: str):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def load_temporal_edgelist(path, directed: bool = True) -> list[TemporalEdgeRecord]:
    """Read a whitespace separated ``src dst time [weight]`` file.

    Lines starting with ``#`` and blank lines are skipped.  When
    ``directed`` is false each line yields both orientations.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ParseError(f"expected 'src dst time [weight]', got {raw.strip()!r}", lineno)
            try:
                src, dst = int(parts[0]), int(parts[1])
                time = _parse_time(parts[2])
                weight = float(parts[3]) if len(parts) == 4 else None
            except ValueError as exc:
                raise ParseError(f"cannot parse {raw.strip()!r}: {exc}", lineno) from None
            if src < 0 or dst < 0:
                raise ValidationError(f"line {lineno}: node ids must be non-negative")
            if weight is not None and not 0.0 <= weight <= 1.0:
                raise ValidationError(f"line {lineno}: weight {weight} outside [0, 1]")
            records.append(TemporalEdgeRecord(src, dst, time, weight))
            if not directed:
                records.append(TemporalEdgeRecord(dst, src, time, weight))
    return records


def symmetrize(records: Iterable[TemporalEdgeRecord]) -> list[TemporalEdgeRecord]:
    """Emit each record followed by its reverse (undirected input)."""
    out = []
    for r in records:
        out.append(r)
        out.append(TemporalEdgeRecord(r.dst, r.src, r.time, r.weight))
    return out


# ---------------------------------------------------------------------------
# snapshot construction


def _largest_component(edges: Sequence[tuple[int, int]]) -> set[int]:
    parent: dict[int, int] = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        parent.setdefault(u, u)
        parent.setdefault(v, v)
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    comps: dict[int, set[int]] = {}
    for a in parent:
        comps.setdefault(find(a), set()).add(a)
    n_edges = {root: 0 for root in comps}
    for u, _ in edges:
        n_edges[find(u)] += 1
    # largest by node count, then by edge count, then lowest node id
    best = min(comps, key=lambda r: (-len(comps[r]), -n_edges[r], min(comps[r])))
    return comps[best]


def _make_snapshot(t: int, nodes, edges: Iterable[tuple[int, int, float]]) -> Snapshot:
    seen = set()
    src, dst, w = [], [], []
    for u, v, wt in edges:
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        src.append(u)
        dst.append(v)
        w.append(wt)
    nodes = set(nodes) | set(src) | set(dst)
    return Snapshot(t, np.array(sorted(nodes), dtype=np.int64), src, dst, w)


def build_snapshots(records: Sequence[TemporalEdgeRecord], T: int, initial_fraction: float = 0.5) -> DynamicGraph:
    """Cut a time-stamped edge stream into ``T`` cumulative snapshots.

    Snapshot 0 is the largest weakly connected component of the earliest
    ``initial_fraction`` of edges.  The remaining edges are divided into
    ``T - 1`` contiguous time blocks, each added on top of the previous
    snapshot.  Ties in time keep file order.
    """
    if T < 1:
        raise ValidationError("T must be >= 1")
    if not 0.0 < initial_fraction <= 1.0:
        raise ValidationError("initial_fraction must lie in (0, 1]")
    if not records:
        raise ValidationError("cannot build snapshots from an empty record list")
    recs = sorted(records, key=lambda r: r.time)
    n_init = max(1, math.floor(initial_fraction * len(recs) + 1e-9))

    def as_edge(r):
        return (r.src, r.dst, 1.0 if r.weight is None else float(r.weight))

    initial = [r for r in recs[:n_init] if r.src != r.dst]
    if not initial:
        raise ValidationError("initial edges contain only self-loops")
    lcc = _largest_component([(r.src, r.dst) for r in initial])
    edges = [as_edge(r) for r in initial if r.src in lcc and r.dst in lcc]
    nodes = set(lcc)
    snaps = [_make_snapshot(0, nodes, edges)]
    rest = recs[n_init:]
    if T > 1:
        for t, block in enumerate(np.array_split(np.arange(len(rest)), T - 1), start=1):
            edges = edges + [as_edge(rest[i]) for i in block]
            snaps.append(_make_snapshot(t, nodes, edges))
    n_global = max(int(s.nodes.max()) for s in snaps if len(s.nodes)) + 1
    return DynamicGraph(n_global, snaps)


def _n_changes(fraction: float, count: int) -> int:
    return int(math.floor(fraction * count + 0.5))


def perturb_snapshots(
    g: DynamicGraph,
    node_add: float = 0.0,
    node_del: float = 0.0,
    edge_add: float = 0.0,
    edge_del: float = 0.0,
    rng_seed: int = 0,
    *,
    reserved: Iterable[int] = (),
    randomize: bool = False,
    link_out: bool = True,
    link_in: bool = True,
) -> DynamicGraph:
    """Randomly delete and add nodes and edges in every snapshot after the first.

    Each snapshot ``t > 0`` is perturbed relative to its own unperturbed
    state.  With ``randomize`` the fractions are upper bounds and the actual
    fraction for each snapshot is drawn uniformly from ``[0, fraction]``.
    Nodes in ``reserved`` are never deleted.  New nodes receive fresh ids
    and link to a random node of the previous (perturbed) snapshot, with
    one out-edge and/or one in-edge according to ``link_out``/``link_in``.
    Modified snapshots get ``1/d_in`` weights.
    """
    fracs = (node_add, node_del, edge_add, edge_del)
    if any(not 0.0 <= f < 1.0 for f in fracs):
        raise ValidationError("perturbation fractions must lie in [0, 1)")
    if all(f == 0.0 for f in fracs):
        return g
    rng = np.random.default_rng(rng_seed)
    reserved = set(int(v) for v in reserved)
    out = [g.snapshots[0]]
    next_id = g.n_global
    for snap in g.snapshots[1:]:
        na, nd, ea, ed = (rng.uniform(0.0, f) if randomize else f for f in fracs)
        nodes = set(snap.nodes.tolist())
        edges = {(u, v): w for u, v, w in snap.edges()}

        candidates = sorted(nodes - reserved)
        k = _n_changes(nd, len(candidates))
        if k:
            gone = set(rng.choice(candidates, size=k, replace=False).tolist())
            nodes -= gone
            edges = {e: w for e, w in edges.items() if e[0] not in gone and e[1] not in gone}

        k = _n_changes(ed, len(edges))
        if k:
            keys = list(edges)
            for i in rng.choice(len(keys), size=k, replace=False):
                del edges[keys[i]]

        k = _n_changes(ea, len(edges))
        pool = sorted(nodes)
        added, tries = 0, 0
        while added < k and len(pool) > 1 and tries < 100 * k:
            tries += 1
            u, v = rng.choice(pool, size=2, replace=False).tolist()
            if (u, v) not in edges:
                edges[(u, v)] = 1.0
                added += 1

        k = _n_changes(na, len(nodes))
        anchors = sorted(set(out[-1].nodes.tolist()) & nodes)
        for _ in range(k):
            new = next_id
            next_id += 1
            nodes.add(new)
            if anchors:
                if link_out:
                    edges[(new, int(rng.choice(anchors)))] = 1.0
                if link_in:
                    edges[(int(rng.choice(anchors)), new)] = 1.0

        fresh = _make_snapshot(snap.index, nodes, ((u, v, w) for (u, v), w in edges.items()))
        out.append(_weighted(fresh))
    n_global = max(next_id, g.n_global)
    return DynamicGraph(n_global, out)


def _weighted(s: Snapshot) -> Snapshot:
    if not s.n_edges:
        return s
    d_in = np.bincount(s.dst)
    return Snapshot(s.index, s.nodes, s.src, s.dst, 1.0 / d_in[s.dst])


def assign_weights(g: DynamicGraph) -> DynamicGraph:
    """Set every edge weight to ``1 / d_in(dst)`` within its own snapshot."""
    return DynamicGraph(g.n_global, [_weighted(s) for s in g.snapshots])


# ---------------------------------------------------------------------------
# synthetic data


def generate_ba(n: int, m_attach: int, rng_seed: int) -> list[TemporalEdgeRecord]:
    """Barabasi-Albert preferential attachment, one record per undirected edge.

    The first ``m_attach`` nodes form a clique; every later node attaches to
    ``m_attach`` distinct existing nodes with probability proportional to
    degree.  Record time is insertion order.
    """
    if m_attach < 1 or n <= m_attach:
        raise ValidationError("need n > m_attach >= 1")
    rng = np.random.default_rng(rng_seed)
    deg = np.zeros(n, dtype=np.float64)
    records = []
    for i in range(m_attach):
        for j in range(i):
            records.append(TemporalEdgeRecord(i, j, len(records)))
            deg[i] += 1
            deg[j] += 1
    for new in range(m_attach, n):
        d = deg[:new]
        p = np.full(new, 1.0 / new) if d.sum() == 0 else d / d.sum()
        for tgt in sorted(rng.choice(new, size=m_attach, replace=False, p=p).tolist()):
            records.append(TemporalEdgeRecord(new, tgt, len(records)))
            deg[new] += 1
            deg[tgt] += 1
    return records


def seed_sets(g: DynamicGraph, k: int, count: int, rng_seed: int) -> list[tuple[int, ...]]:
    """``count - 1`` uniform random k-subsets of snapshot 0, then the top-degree set.

    Degree is in-degree plus out-degree on snapshot 0, ties broken by lower id.
    """
    nodes = g.snapshots[0].nodes
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not 0 <= k <= len(nodes):
        raise ValidationError(f"k={k} exceeds the {len(nodes)} nodes of snapshot 0")
    rng = np.random.default_rng(rng_seed)
    sets = [tuple(sorted(rng.choice(nodes, size=k, replace=False).tolist())) for _ in range(count - 1)]
    s0 = g.snapshots[0]
    deg = s0.in_degree(g.n_global) + s0.out_degree(g.n_global)
    order = sorted(nodes.tolist(), key=lambda v: (-deg[v], v))
    sets.append(tuple(sorted(order[:k])))
    return sets


def make_ba_dynamic(
    n: int = 100,
    m_attach: int = 3,
    T: int = 5,
    seed: int = 0,
    *,
    initial_fraction: float = 0.5,
    node_frac: float = 0.05,
    edge_frac: float = 0.10,
    randomize: bool = True,
) -> DynamicGraph:
    """Synthetic dynamic BA graph following the desk-scale recipe.

    Undirected BA edges are symmetrized, cut into ``T`` snapshots, perturbed
    (node changes up to ``node_frac``, edge changes up to ``edge_frac``) and
    weighted with ``1/d_in``.
    """
    records = symmetrize(generate_ba(n, m_attach, seed))
    g = build_snapshots(records, T, initial_fraction)
    g = perturb_snapshots(g, node_frac, node_frac, edge_frac, edge_frac, rng_seed=seed + 1, randomize=randomize)
    return assign_weights(g)


# ---------------------------------------------------------------------------
# archive format


def graph_to_text(g: DynamicGraph) -> str:
    lines = [f"dysuse-graph v1 {g.n_global} {g.T}"]
    for s in g.snapshots:
        lines.append(f"snapshot {s.index} {len(s.nodes)} {s.n_edges}")
        lines.append(" ".join(str(v) for v in s.nodes.tolist()))
        for u, v, w in s.edges():
            lines.append(f"{u} {v} {w:.17g}")
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> DynamicGraph:
    lines = text.splitlines()
    try:
        head = lines[0].split()
        if head[:2] != ["dysuse-graph", "v1"]:
            raise CorruptFileError(f"unknown graph archive header {lines[0]!r}")
        n_global, T = int(head[2]), int(head[3])
        pos = 1
        snaps = []
        for _ in range(T):
            tag, t, nv, ne = lines[pos].split()
            if tag != "snapshot":
                raise CorruptFileError(f"expected snapshot header at line {pos + 1}")
            nv, ne = int(nv), int(ne)
            nodes = [int(x) for x in lines[pos + 1].split()]
            if len(nodes) != nv:
                raise CorruptFileError(f"snapshot {t}: expected {nv} nodes, found {len(nodes)}")
            src, dst, w = [], [], []
            for line in lines[pos + 2 : pos + 2 + ne]:
                u, v, wt = line.split()
                src.append(int(u))
                dst.append(int(v))
                w.append(float(wt))
            if len(src) != ne:
                raise CorruptFileError(f"snapshot {t}: truncated edge list")
            snaps.append(Snapshot(int(t), np.array(nodes, dtype=np.int64), src, dst, w))
            pos += 2 + ne
    except (IndexError, ValueError) as exc:
        if isinstance(exc, CorruptFileError):
            raise
        raise CorruptFileError(f"malformed graph archive: {exc}") from None
    return DynamicGraph(n_global, snaps)


def write_graph(g: DynamicGraph, path) -> None:
    Path(path).write_text(graph_to_text(g), encoding="utf-8")


def read_graph(path) -> DynamicGraph:
    return graph_from_text(Path(path).read_text(encoding="utf-8"))
