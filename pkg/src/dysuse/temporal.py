"""Progressive coupling of consecutive snapshots and masked temporal self-attention."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ValidationError
from .numerics import Tensor

__all__ = ["progressive_update", "attention_mask", "masked_self_attention", "SelfAttention"]

ORIENTATIONS = ("causal", "paper-literal")


def progressive_update(x_init, prev_output, prev_present, t: int, seed_mask) -> Tensor:
    """Initial node states for snapshot ``t``.

    Nodes present in snapshot ``t - 1`` start from that snapshot's structural
    output; every other node keeps its initial feature.  Seeds are pinned to
    1 afterwards.
    """
    x_init = nx.as_tensor(x_init)
    s = np.asarray(seed_mask, dtype=np.float64)
    if t == 0 or prev_output is None:
        return x_init
    keep = np.asarray(prev_present, dtype=np.float64)
    x = keep * nx.as_tensor(prev_output) + (1.0 - keep) * x_init
    return s + (1.0 - s) * x


def attention_mask(T: int, orientation: str = "causal") -> np.ndarray:
    """Additive ``(T, T)`` mask of 0 / -inf.

    ``causal``: query ``i`` sees keys ``j <= i``.  ``paper-literal``: query
    ``i`` sees keys ``j >= i``.
    """
    i, j = np.indices((T, T))
    if orientation == "causal":
        allowed = j <= i
    elif orientation == "paper-literal":
        allowed = i <= j
    else:
        raise ValidationError(f"unknown mask orientation {orientation!r}")
    return np.where(allowed, 0.0, -np.inf)


class SelfAttention:
    """Single-feature scaled dot-product self-attention over timestamps.

    Each layer owns scalar query/key/value projections; learned scalar
    position embeddings are added once, before the first layer.
    """

    def __init__(self, T: int, n_layers: int = 1, orientation: str = "causal", seed: int = 0):
        if orientation not in ORIENTATIONS:
            raise ValidationError(f"unknown mask orientation {orientation!r}")
        if T < 1 or n_layers < 1:
            raise ValidationError("T and n_layers must be >= 1")
        rng = np.random.default_rng(seed)
        self.T, self.n_layers, self.orientation = T, n_layers, orientation
        self.positions = Tensor(np.zeros(T), requires_grad=True, name="temporal/positions")
        self.layers = []
        for l in range(n_layers):
            self.layers.append(
                (
                    Tensor(rng.normal(0.0, 0.5, size=(1, 1)), requires_grad=True, name=f"temporal/layer{l}/W_q"),
                    Tensor(rng.normal(0.0, 0.5, size=(1, 1)), requires_grad=True, name=f"temporal/layer{l}/W_k"),
                    Tensor(np.ones((1, 1)), requires_grad=True, name=f"temporal/layer{l}/W_v"),
                )
            )
        self.mask = attention_mask(T, orientation)

    def parameters(self) -> list[Tensor]:
        return [self.positions] + [w for layer in self.layers for w in layer]

    def __call__(self, x_seq) -> Tensor:
        return masked_self_attention(x_seq, self)

    def weights(self, x_seq) -> list[np.ndarray]:
        """Attention matrices of every layer, each ``(..., T, T)``."""
        out = []
        with nx.no_grad():
            z = nx.as_tensor(x_seq) + self.positions
            for wq, wk, wv in self.layers:
                beta = _attend(z, wq, wk, self.mask)
                out.append(beta.data)
                z = _apply(beta, z, wv)
        return out


def _attend(z: Tensor, wq: Tensor, wk: Tensor, mask) -> Tensor:
    q = z * nx.reshape(wq, ())
    k = z * nx.reshape(wk, ())
    scores = nx.reshape(q, q.shape + (1,)) * nx.reshape(k, k.shape[:-1] + (1,) + k.shape[-1:])
    return nx.masked_softmax(scores, mask)  # divided by sqrt(F) = 1


def _apply(beta: Tensor, z: Tensor, wv: Tensor) -> Tensor:
    v = z * nx.reshape(wv, ())
    return nx.tsum(beta * nx.reshape(v, v.shape[:-1] + (1,) + v.shape[-1:]), axis=-1)


def masked_self_attention(x_seq, params: SelfAttention) -> Tensor:
    """Per-node temporal attention.

    ``x_seq`` has shape ``(..., T)``: one length-T sequence per node.
    Returns ``z`` of the same shape.
    """
    x_seq = nx.as_tensor(x_seq)
    if x_seq.shape[-1] != params.T:
        raise ValidationError(f"sequence length {x_seq.shape[-1]} != attention length {params.T}")
    z = x_seq + params.positions
    for wq, wk, wv in params.layers:
        z = _apply(_attend(z, wq, wk, params.mask), z, wv)
    return z
