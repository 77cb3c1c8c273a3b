"""Type-specific transformation into the shared embedding space.

Each node type gets its own affine map into d dimensions followed by the
configured hidden activation; a learned per-type embedding added on top gives
the type-aware representation used by the multivariate module.  No neighbor
aggregation happens here: raw feature interaction patterns are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Ahin
from .numerics import ParameterStore, activation_pair


def init_params(ahin: Ahin, d: int, seed: int) -> ParameterStore:
    """Create every learnable tensor for the model, deterministically.

    Per type: transform W (d x k) and bias b, type embedding o, and (context
    types only) the attention key map P (d x d).  Shared: the self-attention
    projections, the context bilinear form W_mu (d x d), and the event
    bilinear form W_in (2d x 2d).  Matrices are Xavier-uniform; biases and
    type embeddings start at zero.
    """
    rng = np.random.default_rng(seed)
    k = ahin.feature_width
    params = ParameterStore()
    for t in ahin.type_names:
        params.add(f"W_{t}", _xavier(rng, d, k))
        params.add(f"b_{t}", np.zeros(d))
        params.add(f"o_{t}", np.zeros(d))
    for t in ahin.context_types:
        params.add(f"P_{t}", _xavier(rng, d, d))
    for name in ("att_q", "att_k", "att_v"):
        params.add(name, _xavier(rng, d, d))
    params.add("W_mu", _xavier(rng, d, d))
    params.add("W_in", _xavier(rng, 2 * d, 2 * d))
    return params


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def pairwise_group(params: ParameterStore) -> list[str]:
    """Parameter names the pair-wise contrastive loss touches (W and b maps)."""
    return [n for n in params.names() if n.startswith(("W_", "b_")) and n not in ("W_mu", "W_in")]


def transform_node(x: np.ndarray, type_name: str, params: ParameterStore,
                   activation: str = "elu") -> np.ndarray:
    """Map one raw feature vector into the shared space: act(W x + b)."""
    w_name, b_name = f"W_{type_name}", f"b_{type_name}"
    if w_name not in params or b_name not in params:
        raise ValueError(f"missing transform parameters for type {type_name!r}")
    act, _ = activation_pair(activation)
    return act(params[w_name] @ np.asarray(x, dtype=np.float64) + params[b_name])


def transform_node_backward(x: np.ndarray, type_name: str, params: ParameterStore,
                            dz: np.ndarray, activation: str = "elu") -> np.ndarray:
    """Accumulate dW, db for one node and return the gradient w.r.t. x."""
    x = np.asarray(x, dtype=np.float64)
    _, dact = activation_pair(activation)
    w = params[f"W_{type_name}"]
    pre = w @ x + params[f"b_{type_name}"]
    da = dz * dact(pre)
    params.grad(f"W_{type_name}")[...] += np.outer(da, x)
    params.grad(f"b_{type_name}")[...] += da
    return w.T @ da


def type_aware(z: np.ndarray, type_name: str, params: ParameterStore) -> np.ndarray:
    """Add the learned type embedding: h = z + o."""
    o_name = f"o_{type_name}"
    if o_name not in params:
        raise ValueError(f"missing type embedding for type {type_name!r}")
    return np.asarray(z, dtype=np.float64) + params[o_name]


@dataclass
class EncoderCache:
    """Forward state for a full-network encode, kept for the backward pass."""

    z: np.ndarray          # (n, d) shared-space representations
    h: np.ndarray          # (n, d) type-aware representations, h = z + o
    pre: np.ndarray        # (n, d) pre-activation values
    z_norm: np.ndarray     # (n,) euclidean norms of z rows
    z_unit: np.ndarray     # (n, d) z rows scaled to unit norm (0 rows stay 0)
    activation: str
    dz: np.ndarray         # (n, d) gradient accumulator w.r.t. z
    dh: np.ndarray         # (n, d) gradient accumulator w.r.t. h


def encode_all(ahin: Ahin, params: ParameterStore, activation: str = "elu") -> EncoderCache:
    """Compute z and h for every node in one pass, caching backward state."""
    act, _ = activation_pair(activation)
    n, d = ahin.n_nodes, params["W_" + ahin.type_names[0]].shape[0]
    pre = np.empty((n, d))
    h = np.empty((n, d))
    for t in ahin.type_names:
        idx = ahin.indices_of_type(t)
        if idx.size == 0:
            continue
        pre[idx] = ahin.features[idx] @ params[f"W_{t}"].T + params[f"b_{t}"]
    z = act(pre)
    for t in ahin.type_names:
        idx = ahin.indices_of_type(t)
        h[idx] = z[idx] + params[f"o_{t}"]
    z_norm = np.linalg.norm(z, axis=1)
    safe = np.where(z_norm > 0, z_norm, 1.0)
    z_unit = z / safe[:, None]
    return EncoderCache(
        z=z, h=h, pre=pre, z_norm=z_norm, z_unit=z_unit, activation=activation,
        dz=np.zeros_like(z), dh=np.zeros_like(z),
    )


def encode_backward(cache: EncoderCache, ahin: Ahin, params: ParameterStore) -> None:
    """Push the accumulated dz/dh gradients into W, b and o."""
    _, dact = activation_pair(cache.activation)
    total_dz = cache.dz + cache.dh  # h = z + o: dh flows through unchanged
    da = total_dz * dact(cache.pre)
    for t in ahin.type_names:
        idx = ahin.indices_of_type(t)
        if idx.size == 0:
            continue
        params.grad(f"W_{t}")[...] += da[idx].T @ ahin.features[idx]
        params.grad(f"b_{t}")[...] += da[idx].sum(axis=0)
        params.grad(f"o_{t}")[...] += cache.dh[idx].sum(axis=0)
