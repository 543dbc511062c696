"""Metrics, top-k case studies, timing benchmarks and report emission."""

from __future__ import annotations

import csv
import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DiffusionModelSpec
from .dyngraph import DynamicGraph
from .errors import ValidationError
from .oracle import GroundTruthDataset, estimate_susceptibility

__all__ = [
    "mae",
    "top_k",
    "precision_at_k",
    "TopKReport",
    "topk_overlap_report",
    "TimingReport",
    "benchmark",
    "machine_descriptor",
    "EvalReport",
    "evaluate",
]


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def mae(pred, truth) -> float:
    """Mean absolute error over all entries (per-node mean)."""
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        raise ValidationError("mae of empty vectors")
    return float(np.abs(pred - truth).mean())


def top_k(values, k: int, exclude=()) -> list[int]:
    """Ids of the ``k`` largest values, ties broken by lower id."""
    values = np.asarray(values, dtype=np.float64)
    keep = np.ones(len(values), dtype=bool)
    keep[list(exclude)] = False
    ids = np.flatnonzero(keep)
    if not 0 <= k <= len(ids):
        raise ValidationError(f"k={k} exceeds the {len(ids)} rankable nodes")
    order = np.lexsort((ids, -values[ids]))
    return ids[order[:k]].tolist()


def precision_at_k(pred, truth, k: int, exclude=()) -> float:
    """``|top-k(pred) & top-k(truth)| / k`` with ``exclude`` removed from both rankings."""
    pred, truth = _pair(pred, truth)
    if k < 1:
        raise ValidationError("k must be >= 1")
    a = set(top_k(pred, k, exclude))
    b = set(top_k(truth, k, exclude))
    return len(a & b) / k


@dataclass
class TopKReport:
    predicted: list[int]
    truth: list[int]

    @property
    def overlap(self) -> set[int]:
        return set(self.predicted) & set(self.truth)

    def marks(self) -> tuple[list[bool], list[bool]]:
        common = self.overlap
        return [v in common for v in self.predicted], [v in common for v in self.truth]

    def to_text(self) -> str:
        """Two ranked columns; ids present in both rankings carry a ``*``."""
        common = self.overlap
        cell = lambda v: f"{v}*" if v in common else f"{v}"  # noqa: E731
        lines = [f"{'rank':>4}  {'model':>8}  {'truth':>8}"]
        for i, (p, t) in enumerate(zip(self.predicted, self.truth), 1):
            lines.append(f"{i:>4}  {cell(p):>8}  {cell(t):>8}")
        lines.append(f"overlap {len(common)}/{len(self.truth)}")
        return "\n".join(lines) + "\n"


def topk_overlap_report(pred, truth, k: int, exclude=()) -> TopKReport:
    pred, truth = _pair(pred, truth)
    return TopKReport(top_k(pred, k, exclude), top_k(truth, k, exclude))


# ---------------------------------------------------------------------------
# timing


def machine_descriptor() -> str:
    return (
        f"{platform.system()} {platform.release()} {platform.machine()}; "
        f"cpus={os.cpu_count()}; python {platform.python_version()}; numpy {np.__version__}"
    )


@dataclass
class TimingReport:
    model_seconds: list[float]
    mc_seconds: list[float]
    n_sims: int
    n_nodes: int
    machine: str

    @property
    def model_median(self) -> float:
        return statistics.median(self.model_seconds)

    @property
    def mc_median(self) -> float:
        return statistics.median(self.mc_seconds)

    @property
    def ratio(self) -> float:
        return self.mc_median / max(self.model_median, 1e-12)

    def to_text(self) -> str:
        return (
            f"machine: {self.machine}\n"
            f"nodes={self.n_nodes} n_sims={self.n_sims} runs={len(self.model_seconds)}\n"
            f"model forward median {self.model_median:.6f} s\n"
            f"MC simulation median {self.mc_median:.6f} s\n"
            f"speed ratio {self.ratio:.1f}x\n"
        )


def benchmark(
    g: DynamicGraph,
    model,
    spec: DiffusionModelSpec,
    seeds,
    n_sims: int = 1000,
    *,
    runs: int = 5,
    master_seed: int = 0,
    workers: int | None = None,
) -> TimingReport:
    """Wall-clock medians of one model forward and one ``n_sims`` MC estimate."""
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    seeds = tuple(seeds)
    model_t, mc_t = [], []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.predict(g, [seeds])
        model_t.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        estimate_susceptibility(g, spec, seeds, n_sims, master_seed, workers=workers)
        mc_t.append(time.perf_counter() - t0)
    return TimingReport(model_t, mc_t, n_sims, g.n_global, machine_descriptor())


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    """Per-(dataset, seed size) MAE and Precision@k, plus optional extras."""

    rows: list[dict] = field(default_factory=list)
    topk: dict[str, TopKReport] = field(default_factory=dict)
    timing: TimingReport | None = None
    config: dict = field(default_factory=dict)

    def overall_mae(self, dataset: str | None = None) -> float:
        rows = [r for r in self.rows if dataset is None or r["dataset"] == dataset]
        total = sum(r["mae"] * r["n_sets"] for r in rows)
        return total / sum(r["n_sets"] for r in rows)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "seed_size", "n_sets", "mae", "precision_k", "precision"])
            for r in self.rows:
                w.writerow([r["dataset"], r["seed_size"], r["n_sets"], f"{r['mae']:.17g}", r["k"], f"{r['precision']:.17g}"])

    def to_text(self) -> str:
        """MAE table with datasets as rows and seed sizes as columns, 3 decimals."""
        datasets = list(dict.fromkeys(r["dataset"] for r in self.rows))
        sizes = sorted({r["seed_size"] for r in self.rows})
        cell = {(r["dataset"], r["seed_size"]): r for r in self.rows}
        width = max([7] + [len(d) for d in datasets])
        out = ["MAE"]
        out.append(f"{'dataset':<{width}}" + "".join(f"{'|S|=' + str(s):>9}" for s in sizes))
        for d in datasets:
            vals = [f"{cell[d, s]['mae']:.3f}" if (d, s) in cell else "-" for s in sizes]
            out.append(f"{d:<{width}}" + "".join(f"{v:>9}" for v in vals))
        if self.rows:
            k = self.rows[0]["k"]
            out.append("")
            out.append(f"Precision@{k}")
            for d in datasets:
                vals = [f"{cell[d, s]['precision']:.3f}" if (d, s) in cell else "-" for s in sizes]
                out.append(f"{d:<{width}}" + "".join(f"{v:>9}" for v in vals))
        for name, rep in self.topk.items():
            out.append("")
            out.append(f"top-k: {name}")
            out.append(rep.to_text().rstrip("\n"))
        if self.timing is not None:
            out.append("")
            out.append(self.timing.to_text().rstrip("\n"))
        return "\n".join(out) + "\n"

    def as_dict(self) -> dict:
        d = {"rows": self.rows, "config": self.config}
        if self.timing is not None:
            d["timing"] = asdict(self.timing)
        return d


def _predict_all(model, g, seeds, workers: int, chunk: int = 16) -> np.ndarray:
    parts = [seeds[a : a + chunk] for a in range(0, len(seeds), chunk)]
    if workers <= 1 or len(parts) == 1:
        return np.concatenate([model.predict(g, p) for p in parts])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(lambda p: model.predict(g, p), parts)))


def evaluate(
    model,
    g: DynamicGraph,
    dataset: GroundTruthDataset,
    name: str = "dataset",
    *,
    k: int = 5,
    workers: int = 1,
    report: EvalReport | None = None,
) -> EvalReport:
    """Score ``model`` on every seed set of ``dataset``, grouped by seed-set size."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    report = report if report is not None else EvalReport()
    seeds = dataset.seeds()
    pred = _predict_all(model, g, seeds, workers)
    truth = dataset.targets()
    by_size: dict[int, list[int]] = {}
    for i, s in enumerate(seeds):
        by_size.setdefault(len(s), []).append(i)
    for size in sorted(by_size):
        idx = by_size[size]
        errs = [mae(pred[i], truth[i]) for i in idx]
        precs = [precision_at_k(pred[i], truth[i], k, seeds[i]) for i in idx]
        report.rows.append(
            {
                "dataset": name,
                "seed_size": size,
                "n_sets": len(idx),
                "mae": float(np.mean(errs)),
                "k": k,
                "precision": float(np.mean(precs)),
            }
        )
    return report


def write_report(report: EvalReport, directory) -> list[Path]:
    """Write ``eval.csv`` and ``eval.txt`` (plus ``timing.txt``) under ``directory``."""
    directory = Path(directory)
    out = [directory / "eval.csv", directory / "eval.txt"]
    report.write_csv(out[0])
    out[1].write_text(report.to_text(), encoding="utf-8")
    return out
