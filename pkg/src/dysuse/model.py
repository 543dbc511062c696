"""End-to-end susceptibility estimator: structural module, progressive coupling,
temporal attention and a ReLU-1 head, plus training and checkpointing."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import numerics as nx
from .dyngraph import DynamicGraph, Snapshot
from .errors import CorruptFileError, ValidationError
from .numerics import Tensor
from .oracle import GroundTruthDataset
from .structural import GCN, CoupledGNN, initial_representation
from .temporal import SelfAttention, progressive_update

__all__ = [
    "ModelConfig",
    "DySuseModel",
    "TrainLog",
    "forward",
    "loss",
    "train",
    "save",
    "load",
    "static_view",
    "static_config",
]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training settings.

    ``progressive`` and ``attention`` switch the two temporal components off
    for ablations.  ``mask`` is ``"causal"`` or ``"paper-literal"``.
    """

    T: int
    structural: str = "coupled"
    n_layers: int = 3
    rep_dim: int = 8
    gate_width: int = 8
    attention_layers: int = 1
    mask: str = "causal"
    progressive: bool = True
    attention: bool = True
    lr: float = 3e-3
    epochs: int = 600
    patience: int = 50
    batch_size: int = 4
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.structural not in ("coupled", "gcn"):
            raise ValidationError(f"unknown structural module {self.structural!r}")
        if self.T < 1:
            raise ValidationError("T must be >= 1")


class DySuseModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        if config.structural == "coupled":
            self.structural = CoupledGNN(config.n_layers, config.rep_dim, config.gate_width, seed=config.seed)
        else:
            self.structural = GCN(config.n_layers, seed=config.seed)
        self.temporal = SelfAttention(config.T, config.attention_layers, config.mask, seed=config.seed + 1)

    def parameters(self) -> list[Tensor]:
        params = self.structural.parameters()
        if self.config.attention:
            params = params + self.temporal.parameters()
        return params

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.structural.parameters() + self.temporal.parameters()}

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        if set(state) != set(params):
            missing = set(params) ^ set(state)
            raise CorruptFileError(f"parameter names do not match the model: {sorted(missing)[:5]}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise CorruptFileError(f"parameter {k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def __call__(self, g: DynamicGraph, seeds) -> Tensor:
        return forward(self, g, seeds)

    def forward_batch(self, g: DynamicGraph, seed_batch, *, trace: dict | None = None) -> Tensor:
        """Predictions ``(B, N)`` for a batch of seed sets on the same graph.

        If ``trace`` is a dict it receives the intermediate tensors
        ``x_bar`` and ``x`` (lists over snapshots) and ``z``.
        """
        cfg = self.config
        if g.T != cfg.T:
            raise ValidationError(f"model was built for T={cfg.T}, graph has T={g.T}")
        n = g.n_global
        S = np.zeros((len(seed_batch), n))
        for b, seeds in enumerate(seed_batch):
            seeds = list(seeds)
            if seeds and (min(seeds) < 0 or max(seeds) >= n):
                raise ValidationError("seed outside the global node universe")
            S[b, seeds] = 1.0
        present = g.present_masks().astype(np.float64)
        aux = initial_representation(n, cfg.rep_dim, cfg.seed) if cfg.structural == "coupled" else None
        xs, xbars = [], []
        prev = None
        for t, snap in enumerate(g.snapshots):
            x_init = S * present[t]
            if cfg.progressive and t > 0:
                x_bar = progressive_update(x_init, prev, present[t - 1], t, S)
            else:
                x_bar = nx.as_tensor(x_init)
            x_t, _ = self.structural.forward(snap, x_bar, S, aux)
            xbars.append(x_bar)
            xs.append(x_t)
            prev = x_t
        X = nx.stack(xs, axis=-1)
        if cfg.attention:
            z = self.temporal(X)
        else:
            z = X
        if trace is not None:
            trace.update(x_bar=xbars, x=xs, z=z)
        return nx.relu1(z[..., cfg.T - 1])

    def predict(self, g: DynamicGraph, seed_batch) -> np.ndarray:
        with nx.no_grad():
            return self.forward_batch(g, seed_batch).data


def forward(model: DySuseModel, g: DynamicGraph, seeds) -> Tensor:
    """Predicted final-timestamp susceptibility ``(N,)`` for one seed set."""
    return nx.reshape(model.forward_batch(g, [tuple(seeds)]), (g.n_global,))


def loss(pred, target) -> Tensor:
    """Sum of absolute errors over nodes (and seed sets, for batched inputs)."""
    return nx.sum_abs_error(pred, target)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = float("inf")

    @property
    def train_loss(self) -> list[float]:
        return [r[1] for r in self.rows]

    def write_csv(self, path, include_seconds: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_mae", "seconds"] if include_seconds else ["epoch", "train_loss", "val_mae"])
            for epoch, tl, vm, sec in self.rows:
                row = [epoch, f"{tl:.17g}", f"{vm:.17g}"]
                if include_seconds:
                    row.append(f"{sec:.6f}")
                w.writerow(row)


def _mean_mae(model, g, seeds, targets, batch_size=32) -> float:
    if len(seeds) == 0:
        return float("nan")
    total = 0.0
    for a in range(0, len(seeds), batch_size):
        pred = model.predict(g, seeds[a : a + batch_size])
        total += np.abs(pred - targets[a : a + batch_size]).sum()
    return total / (len(seeds) * targets.shape[1])


def train(
    model: DySuseModel,
    g: DynamicGraph,
    dataset: GroundTruthDataset,
    epochs: int | None = None,
    lr: float | None = None,
    rng_seed: int = 0,
    *,
    inductive: bool = False,
    val_dataset: GroundTruthDataset | None = None,
) -> TrainLog:
    """Minimise the summed absolute error on the final-timestamp targets.

    Seed sets are split into training and validation parts (unless
    ``val_dataset`` is given); the parameters with the best validation MAE
    are restored at the end.  ``train_loss`` in the log is the per-node mean
    absolute error over the training sets for that epoch; row 0 is the state
    before any update.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    lr = cfg.lr if lr is None else lr
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if not inductive and dataset.graph_fingerprint != g.fingerprint():
        raise ValidationError("dataset was generated on a different graph (pass inductive=True to allow)")
    seeds = dataset.seeds()
    targets = dataset.targets()
    if targets.shape[1] != g.n_global:
        raise ValidationError(f"targets cover {targets.shape[1]} nodes, graph has {g.n_global}")
    rng = np.random.default_rng(rng_seed)
    if val_dataset is None:
        order = rng.permutation(len(seeds))
        n_val = int(round(cfg.val_fraction * len(seeds))) if len(seeds) > 1 else 0
        val_idx, tr_idx = order[:n_val], order[n_val:]
        val_seeds, val_targets = [seeds[i] for i in val_idx], targets[val_idx]
    else:
        tr_idx = np.arange(len(seeds))
        val_seeds, val_targets = val_dataset.seeds(), val_dataset.targets()
    tr_seeds = [seeds[i] for i in tr_idx]
    tr_targets = targets[tr_idx]
    if not val_seeds:
        val_seeds, val_targets = tr_seeds, tr_targets

    params = model.parameters()
    opt = nx.Adam(params, lr=lr)
    log = TrainLog()
    start = time.perf_counter()
    best_val = _mean_mae(model, g, val_seeds, val_targets)
    best_state = model.state()
    log.rows.append((0, _mean_mae(model, g, tr_seeds, tr_targets), best_val, 0.0))
    log.best_val_mae = best_val
    bad = 0
    n = g.n_global
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(tr_seeds))
        total = 0.0
        for a in range(0, len(perm), cfg.batch_size):
            idx = perm[a : a + cfg.batch_size]
            pred = model.forward_batch(g, [tr_seeds[i] for i in idx])
            batch_loss = loss(pred, tr_targets[idx])
            opt.zero_grad()
            batch_loss.backward()
            opt.step()
            total += batch_loss.item()
        val = _mean_mae(model, g, val_seeds, val_targets)
        log.rows.append((epoch, total / (len(tr_seeds) * n), val, time.perf_counter() - start))
        if val < best_val:
            best_val, best_state, bad = val, model.state(), 0
            log.best_epoch, log.best_val_mae = epoch, val
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    model.load_state(best_state)
    return log


# ---------------------------------------------------------------------------
# static baseline


def static_view(g: DynamicGraph) -> DynamicGraph:
    """The last snapshot alone, as a one-timestamp dynamic graph."""
    last = g.snapshots[-1]
    return DynamicGraph(g.n_global, [Snapshot(0, last.nodes, last.src, last.dst, last.weight)])


def static_config(config: ModelConfig) -> ModelConfig:
    return replace(config, T=1, progressive=False)


# ---------------------------------------------------------------------------
# persistence

FORMAT = "dysuse-model v1"


def save(model: DySuseModel, path) -> None:
    meta = {"format": FORMAT, "config": asdict(model.config)}
    nx.save_checkpoint(path, model.state(), meta)


def load(path) -> DySuseModel:
    meta, params = nx.load_checkpoint(path)
    if meta.get("format") != FORMAT:
        raise CorruptFileError(f"{path}: unsupported model format {meta.get('format')!r}")
    try:
        config = ModelConfig(**meta["config"])
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"{path}: bad config header: {exc}") from None
    model = DySuseModel(config)
    model.load_state(params)
    return model
