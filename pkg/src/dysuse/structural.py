"""Per-snapshot structural feature modules.

Both modules map one snapshot plus a node-state vector to a refined
node-state vector in [0, 1], with parameters shared across snapshots.

Shapes: node states ``x`` are ``(B, N)`` (a batch of seed sets over the same
graph), influence representations ``r`` are ``(N, h)`` or ``(B, N, h)``.
Neighbourhoods are in-neighbourhoods: influence flows along edges.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .dyngraph import Snapshot
from .errors import ValidationError
from .numerics import Tensor
from .rng import mix64

__all__ = [
    "influ_gate",
    "state_aggregate",
    "state_combine",
    "influence_aggregate",
    "influence_combine",
    "coupledgnn_forward",
    "gcn_forward",
    "CoupledGNN",
    "GCN",
    "initial_representation",
]

LEAK = 0.01
_REP_SALT = 0x5DEECE66D


def _param(value, name) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


class _Layer:
    """Parameters of one CoupledGNN layer."""

    def __init__(self, l: int, h_in: int, h_out: int, gate_width: int, rng: np.random.Generator):
        bound = np.sqrt(6.0 / (h_in + h_out))
        p = f"structural/layer{l}/"
        self.W = _param(rng.uniform(-bound, bound, size=(h_out, h_in)), p + "W")
        self.beta = _param(np.zeros(2 * h_out), p + "beta")
        self.mu_x = _param(1.0, p + "mu_x")
        self.mu_a = _param(1.0, p + "mu_a")
        self.zeta_r = _param(1.0, p + "zeta_r")
        self.zeta_b = _param(1.0, p + "zeta_b")
        self.gate = []
        for i, (fan_in, fan_out) in enumerate([(1, gate_width), (gate_width, gate_width), (gate_width, 1)]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.gate.append(
                (
                    _param(rng.uniform(-bound, bound, size=(fan_in, fan_out)), p + f"gate{i}/W"),
                    _param(np.zeros(fan_out), p + f"gate{i}/b"),
                )
            )

    def parameters(self) -> list[Tensor]:
        out = [self.W, self.beta, self.mu_x, self.mu_a, self.zeta_r, self.zeta_b]
        for w, b in self.gate:
            out += [w, b]
        return out

    def state_gate(self, x: Tensor) -> Tensor:
        """3-layer MLP 1 -> g -> g -> 1 applied to every node state."""
        h = nx.reshape(x, x.shape + (1,))
        (w0, b0), (w1, b1), (w2, b2) = self.gate
        h = nx.leaky_relu(h @ w0 + b0, LEAK)
        h = nx.leaky_relu(h @ w1 + b1, LEAK)
        h = nx.sigmoid(h @ w2 + b2)
        return nx.reshape(h, x.shape)


def influ_gate(r_u, r_v, W, beta) -> Tensor:
    """Gate weight of the edge u -> v: ``beta . [W r_u || W r_v]``."""
    r_u, r_v, W, beta = map(nx.as_tensor, (r_u, r_v, W, beta))
    if r_u.shape != r_v.shape or W.shape[-1] != r_u.shape[-1] or beta.shape[-1] != 2 * W.shape[0]:
        raise ValidationError("influ_gate: inconsistent dimensions")
    return nx.matmul(nx.concat([W @ r_u, W @ r_v], axis=-1), beta)


def _edge_gates(snap: Snapshot, Wr: Tensor, beta: Tensor) -> Tensor:
    # beta . [W r_u || W r_v] split into a source part and a destination part
    h = Wr.shape[-1]
    s_src = nx.matmul(Wr, beta[:h])
    s_dst = nx.matmul(Wr, beta[h:])
    return nx.gather(s_src, snap.src, axis=-1) + nx.gather(s_dst, snap.dst, axis=-1)


def state_aggregate(snap: Snapshot, x, r, layer: _Layer) -> Tensor:
    """``a_v = sum over in-neighbours u of InfluGate(r_u, r_v) * x_u``."""
    x, r = nx.as_tensor(x), nx.as_tensor(r)
    n = x.shape[-1]
    Wr = nx.matmul(r, nx.transpose(layer.W))
    gates = _edge_gates(snap, Wr, layer.beta)
    return nx.scatter_add(gates * nx.gather(x, snap.src, axis=-1), snap.dst, n, axis=-1)


def state_combine(x, a, seed_mask, mu_x, mu_a) -> Tensor:
    """Seeds are clamped to exactly 1, everything else is ``sigmoid(mu_x x + mu_a a)``."""
    x, a = nx.as_tensor(x), nx.as_tensor(a)
    s = np.asarray(seed_mask, dtype=np.float64)
    inner = nx.sigmoid(mu_x * x + mu_a * a)
    return s + (1.0 - s) * inner


def influence_aggregate(snap: Snapshot, x, r, layer: _Layer) -> Tensor:
    """``b_v = sum over in-neighbours u of StateGate(x_u) * p_uv * W r_u``."""
    x, r = nx.as_tensor(x), nx.as_tensor(r)
    n = x.shape[-1]
    Wr = nx.matmul(r, nx.transpose(layer.W))
    coef = nx.gather(layer.state_gate(x), snap.src, axis=-1) * snap.weight
    msg = nx.reshape(coef, coef.shape + (1,)) * nx.gather(Wr, snap.src, axis=-2)
    return nx.scatter_add(msg, snap.dst, n, axis=-2)


def influence_combine(r, b, W, zeta_r, zeta_b) -> Tensor:
    """``leaky_relu(zeta_r W r + zeta_b b)``."""
    r, b, W = nx.as_tensor(r), nx.as_tensor(b), nx.as_tensor(W)
    return nx.leaky_relu(zeta_r * nx.matmul(r, nx.transpose(W)) + zeta_b * b, LEAK)


def coupledgnn_forward(snap: Snapshot, x0, r0, layers, seed_mask) -> tuple[Tensor, Tensor]:
    """Run the coupled state/influence recursion through every layer.

    Both updates of a layer read the layer's inputs ``(x, r)``.
    """
    x, r = nx.as_tensor(x0), nx.as_tensor(r0)
    for layer in layers:
        a = state_aggregate(snap, x, r, layer)
        b = influence_aggregate(snap, x, r, layer)
        x, r = state_combine(x, a, seed_mask, layer.mu_x, layer.mu_a), influence_combine(
            r, b, layer.W, layer.zeta_r, layer.zeta_b
        )
    return x, r


def gcn_forward(snap: Snapshot, x0, thetas, seed_mask) -> Tensor:
    """Plain weighted-sum GNN: ``x' = sigmoid(t1 x + t2 sum_u w_uv x_u)``, seeds clamped."""
    x = nx.as_tensor(x0)
    n = x.shape[-1]
    s = np.asarray(seed_mask, dtype=np.float64)
    for t1, t2 in thetas:
        h = nx.scatter_add(nx.gather(x, snap.src, axis=-1) * snap.weight, snap.dst, n, axis=-1)
        x = s + (1.0 - s) * nx.sigmoid(t1 * x + t2 * h)
    return x


def initial_representation(n: int, dim: int, seed: int) -> np.ndarray:
    """Random influence representation per node id, ``U(-0.5/dim, 0.5/dim)``.

    Deterministic per ``(seed, node id)`` so any graph size can be served.
    """
    ids = (np.arange(n, dtype=np.uint64)[:, None] << np.uint64(8)) | np.arange(dim, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        bits = mix64(np.uint64(_REP_SALT) ^ mix64(np.uint64(seed) + ids))
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) / 9007199254740992.0
    return (u - 0.5) / dim


class CoupledGNN:
    """Coupled state GNN / influence GNN structural module."""

    kind = "coupled"

    def __init__(self, n_layers: int = 3, rep_dim: int = 8, gate_width: int = 8, seed: int = 0):
        if n_layers < 1:
            raise ValidationError("need at least one layer")
        rng = np.random.default_rng(seed)
        self.n_layers, self.rep_dim, self.gate_width, self.seed = n_layers, rep_dim, gate_width, seed
        self.layers = [_Layer(l, rep_dim, rep_dim, gate_width, rng) for l in range(n_layers)]

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, snap: Snapshot, x, seed_mask, aux=None):
        """Return ``(x_L, r_L)``; ``aux`` is the initial representation ``(N, h)``."""
        if aux is None:
            aux = initial_representation(nx.as_tensor(x).shape[-1], self.rep_dim, self.seed)
        return coupledgnn_forward(snap, x, aux, self.layers, seed_mask)


class GCN:
    """Weighted-sum GNN baseline, two scalars per layer."""

    kind = "gcn"

    def __init__(self, n_layers: int = 3, seed: int = 0):
        self.n_layers, self.seed = n_layers, seed
        self.thetas = [
            (_param(1.0, f"structural/layer{l}/theta_self"), _param(1.0, f"structural/layer{l}/theta_nbr"))
            for l in range(n_layers)
        ]

    def parameters(self) -> list[Tensor]:
        return [p for pair in self.thetas for p in pair]

    def forward(self, snap: Snapshot, x, seed_mask, aux=None):
        return gcn_forward(snap, x, self.thetas, seed_mask), None
