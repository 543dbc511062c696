"""IC, LT and TR influence diffusion over a sequence of snapshots.

All state is batched: a :class:`DiffusionState` tracks ``B`` independent
simulations at once, each with its own counter-based random stream.  A
single simulation is simply a batch of one.

Randomness is addressed, not consumed.  An IC coin for edge ``e`` at
timestamp ``t`` is the draw at counter ``("ic", t, e)`` of the simulation's
stream, no matter when or in what order it is looked at.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyngraph import DynamicGraph, Snapshot
from .errors import ValidationError
from .rng import SimulationStreams, counter

__all__ = [
    "DiffusionModelSpec",
    "DiffusionState",
    "init_state",
    "step_ic",
    "step_lt",
    "step_tr",
    "run_snapshot",
    "run_dynamic",
]

KINDS = ("IC", "LT", "TR")
POLICIES = ("per-snapshot", "once-ever")


@dataclass(frozen=True)
class DiffusionModelSpec:
    """Which diffusion model to run and how.

    ``hop_cap`` bounds the hops per snapshot (``None`` runs to quiescence).
    ``attempt_policy`` decides whether an IC edge may fire once per snapshot
    or once per simulation; for TR it decides whether trigger sets are
    redrawn per snapshot or fixed for the simulation.
    """

    kind: str = "IC"
    hop_cap: int | None = None
    attempt_policy: str = "per-snapshot"

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        if self.kind not in KINDS:
            raise ValidationError(f"unknown diffusion model {self.kind!r}")
        if self.attempt_policy not in POLICIES:
            raise ValidationError(f"unknown attempt policy {self.attempt_policy!r}")
        if self.hop_cap is not None and self.hop_cap < 1:
            raise ValidationError("hop_cap must be >= 1")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "hop_cap": self.hop_cap, "attempt_policy": self.attempt_policy}


@dataclass
class DiffusionState:
    """Per-simulation diffusion state for a batch of simulations.

    Attributes
    ----------
    influenced : (B, N) bool
        Persistent across snapshots; never reset.
    lt_thresholds : (B, N) float or None
        LT thresholds, drawn once per simulation.
    attempted : (B, E_global) bool or None
        Edges already tried under the once-ever IC policy.
    frontier : (B, N) bool
        Nodes newly influenced in the previous step.
    """

    graph: DynamicGraph
    spec: DiffusionModelSpec
    streams: SimulationStreams
    influenced: np.ndarray
    lt_thresholds: np.ndarray | None = None
    attempted: np.ndarray | None = None
    frontier: np.ndarray | None = None
    _live: dict = field(default_factory=dict, repr=False)

    @property
    def batch(self) -> int:
        return self.influenced.shape[0]

    def tr_triggers(self, snap: Snapshot) -> np.ndarray:
        """``(B, E_t)`` mask: is edge ``(u, v)`` in ``T_v`` at this snapshot."""
        key = ("tr", snap.index)
        if key not in self._live:
            gid = self.graph.edge_index[1][snap.index]
            if self.spec.attempt_policy == "per-snapshot":
                u = self.streams.uniform(counter("tr", snap.index, gid))
                self._live[key] = u < snap.weight[None, :]
            else:
                u = self.streams.uniform(counter("tr_once", 0, gid))
                self._live[key] = u < self.graph.first_weight[gid][None, :]
        return self._live[key]

    def ic_coins(self, snap: Snapshot) -> np.ndarray:
        """``(B, E_t)`` uniform coins deciding IC attempts at this snapshot."""
        key = ("ic", snap.index)
        if key not in self._live:
            gid = self.graph.edge_index[1][snap.index]
            if self.spec.attempt_policy == "per-snapshot":
                self._live[key] = self.streams.uniform(counter("ic", snap.index, gid))
            else:
                self._live[key] = self.streams.uniform(counter("ic_once", 0, gid))
        return self._live[key]


def _as_batch_mask(seeds, n: int, batch: int) -> np.ndarray:
    mask = np.zeros((batch, n), dtype=bool)
    seeds = list(seeds)
    if seeds:
        idx = np.asarray(seeds, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= n:
            raise ValidationError("seed outside the global node universe")
        mask[:, idx] = True
    return mask


def init_state(g: DynamicGraph, spec: DiffusionModelSpec, seeds, rng: SimulationStreams) -> DiffusionState:
    """Fresh state with exactly ``seeds`` influenced in every simulation of ``rng``.

    LT thresholds are drawn here, uniform on (0, 1).  TR trigger sets and IC
    coins are drawn lazily per snapshot from the same streams.
    """
    n, batch = g.n_global, len(rng)
    state = DiffusionState(g, spec, rng, _as_batch_mask(seeds, n, batch))
    if spec.kind == "LT":
        state.lt_thresholds = rng.uniform(counter("lt", 0, np.arange(n)))
    if spec.kind == "IC" and spec.attempt_policy == "once-ever":
        state.attempted = np.zeros((batch, g.edge_index[0]), dtype=bool)
    state.frontier = state.influenced.copy()
    return state


def _scatter_any(hit: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    """OR-reduce a ``(B, E)`` mask onto destination nodes, giving ``(B, N)``."""
    b, e = np.nonzero(hit)
    out = np.zeros(hit.shape[0] * n, dtype=bool)
    out[b * n + dst[e]] = True
    return out.reshape(hit.shape[0], n)


def step_ic(snap: Snapshot, state: DiffusionState, frontier: np.ndarray, rng=None) -> np.ndarray:
    """One IC hop: every frontier node tries each of its out-edges once.

    The coins come from ``state``'s streams (``rng`` is accepted for
    signature symmetry and must be the same object if given).  Returns the
    ``(B, N)`` mask of newly influenced nodes, which is also merged into
    ``state.influenced``.
    """
    if rng is not None and rng is not state.streams:
        raise ValidationError("step_ic must draw from the state's own streams")
    n = state.graph.n_global
    src, dst = snap.src, snap.dst
    trying = frontier[:, src]
    success = trying & (state.ic_coins(snap) < snap.weight[None, :])
    if state.attempted is not None:
        gid = state.graph.edge_index[1][snap.index]
        success &= ~state.attempted[:, gid]
        state.attempted[:, gid] |= trying
    success &= ~state.influenced[:, dst]
    newly = _scatter_any(success, dst, n)
    state.influenced |= newly
    return newly


def step_lt(snap: Snapshot, state: DiffusionState) -> np.ndarray:
    """One LT round: activate nodes whose influenced in-weight reaches their threshold."""
    n = state.graph.n_global
    contrib = state.influenced[:, snap.src] * snap.weight[None, :]
    mass = np.zeros((state.batch, n))
    np.add.at(mass.T, snap.dst, contrib.T)
    present = snap.present_mask(n)
    newly = (mass >= state.lt_thresholds) & ~state.influenced & present[None, :]
    state.influenced |= newly
    return newly


def step_tr(snap: Snapshot, state: DiffusionState, frontier: np.ndarray | None = None) -> np.ndarray:
    """One TR hop: ``v`` activates if a frontier in-neighbour lies in its trigger set."""
    if frontier is None:
        frontier = state.frontier
    n = state.graph.n_global
    hit = frontier[:, snap.src] & state.tr_triggers(snap) & ~state.influenced[:, snap.dst]
    newly = _scatter_any(hit, snap.dst, n)
    state.influenced |= newly
    return newly


def run_snapshot(snap: Snapshot, state: DiffusionState, spec: DiffusionModelSpec | None = None, rng=None) -> DiffusionState:
    """Diffuse within one snapshot until quiescence or ``hop_cap`` hops.

    The first frontier is every influenced node present in the snapshot.
    """
    spec = spec or state.spec
    present = snap.present_mask(state.graph.n_global)
    state.frontier = state.influenced & present[None, :]
    hops = 0
    while spec.hop_cap is None or hops < spec.hop_cap:
        if spec.kind == "IC":
            newly = step_ic(snap, state, state.frontier, rng)
        elif spec.kind == "TR":
            newly = step_tr(snap, state, state.frontier)
        else:
            newly = step_lt(snap, state)
        if not newly.any():
            break
        state.frontier = newly
        hops += 1
    return state


def run_dynamic(g: DynamicGraph, spec: DiffusionModelSpec, seeds, rng: SimulationStreams) -> np.ndarray:
    """Run every snapshot in order, carrying the state across timestamps.

    Returns a ``(T, B, N)`` boolean array: the influenced set of each
    simulation after each snapshot.  Nodes absent from a snapshot keep their
    status but neither send nor receive influence there.
    """
    state = init_state(g, spec, seeds, rng)
    out = np.empty((g.T, state.batch, g.n_global), dtype=bool)
    for t, snap in enumerate(g.snapshots):
        run_snapshot(snap, state, spec, rng)
        out[t] = state.influenced
    return out
