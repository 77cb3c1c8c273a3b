"""Dense numeric kernel: parameter storage, Adam, K-means, and gradient checking.

Everything here is float64 and deterministic given a seed.  Gradients for the
model are hand-derived in the module that owns each loss; this module supplies
the shared primitives plus a finite-difference checker used as a test gate.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

# Counts rare numeric events (zero-norm cosine inputs, sampling fallbacks, ...).
# Read-only for callers; cleared via reset_diagnostics().
diagnostics: Counter = Counter()


def reset_diagnostics() -> None:
    diagnostics.clear()


# ---------------------------------------------------------------------------
# elementwise primitives


def sigmoid(x):
    """Logistic function, overflow-safe on both tails."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softmax(x, axis: int = -1):
    """Max-shifted softmax along `axis`; components sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty input")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors.

    A zero-norm input yields 0.0 (corrupted or zero-padded features can
    legitimately produce zero embeddings before training); the event is
    counted under diagnostics["cosine_zero_norm"].
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        diagnostics["cosine_zero_norm"] += 1
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def cosine_grad(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of cosine_similarity w.r.t. both inputs (zeros at zero norm)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u), np.zeros_like(v)
    s = np.dot(u, v) / (nu * nv)
    gu = v / (nu * nv) - s * u / (nu * nu)
    gv = u / (nu * nv) - s * v / (nv * nv)
    return gu, gv


# ---------------------------------------------------------------------------
# activations (shared by the encoder and the attention logits)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(np.float64)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "elu": (_elu, _elu_grad),
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
}


def activation_pair(name: str) -> tuple[Callable, Callable]:
    """Return (f, f') for one of the supported hidden activations."""
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(_ACTIVATIONS)}")


# ---------------------------------------------------------------------------
# parameter storage


class ParameterStore:
    """Named float64 tensors, each paired with a same-shape gradient buffer.

    Single-writer during optimization; parallel gradient contributions must be
    reduced into the buffers before adam_step.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._values:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float64)
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list[str]:
        return list(self._values)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._values.items())

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for name, value in self._values.items():
            out.add(name, value.copy())
        return out

    def n_scalars(self) -> int:
        return sum(v.size for v in self._values.values())

    def save(self, path) -> None:
        """Write values to a .npz checkpoint; bit-exact on round-trip."""
        for name, value in self._values.items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"refusing to checkpoint non-finite parameter {name!r}")
        np.savez(
            path,
            __format_version__=np.int64(CHECKPOINT_FORMAT_VERSION),
            **self._values,
        )

    @classmethod
    def load(cls, path) -> "ParameterStore":
        with np.load(path) as data:
            version = int(data["__format_version__"])
            if version != CHECKPOINT_FORMAT_VERSION:
                raise ValueError(f"unsupported checkpoint format version {version}")
            store = cls()
            for name in data.files:
                if name == "__format_version__":
                    continue
                store.add(name, data[name])
        return store


# ---------------------------------------------------------------------------
# Adam


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass
class AdamState:
    """Adam moments plus a per-parameter learning-rate scale for group decay."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr_scale: dict = field(default_factory=dict)

    def scale_group(self, names, factor: float) -> None:
        for name in names:
            self.lr_scale[name] = self.lr_scale.get(name, 1.0) * factor


def adam_step(params: ParameterStore, state: AdamState) -> None:
    """One Adam update with bias correction; gradients are zeroed afterwards."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, value in params.items():
        g = params.grad(name)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name!r} at step {state.t}")
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        lr = state.lr * state.lr_scale.get(name, 1.0)
        value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.zero_grads()


# ---------------------------------------------------------------------------
# K-means


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100) -> np.ndarray:
    """Cluster rows of `points` into k groups; returns one label per row.

    K-means++ seeding, Lloyd iterations to an assignment fixpoint (or
    max_iter), then single-point improvement moves until the partition is a
    local optimum of the within-cluster SSE.  Deterministic given the seed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds number of points {n}")
    rng = np.random.default_rng(seed)

    centers = _kmeans_pp_init(points, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centers[c] = points[mask].mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its center
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[c] = points[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    _refine_to_local_optimum(points, labels, centers, k)
    return labels


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    d2 = _sq_dists(points, centers[:1])[:, 0]
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # all remaining points coincide with a center
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=2)


def _refine_to_local_optimum(points, labels, centers, k, max_passes: int = 100) -> None:
    """First-improvement single-point moves with exact SSE deltas.

    A Lloyd fixpoint need not be move-optimal once centroids are recomputed
    (the size-weighted deltas below differ from plain nearest-center
    distances), so this pass enforces the stronger property in place.
    """
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    for _ in range(max_passes):
        improved = False
        for i in range(points.shape[0]):
            a = labels[i]
            if counts[a] <= 1:
                continue  # a move would empty the cluster
            x = points[i]
            d2 = ((centers - x) ** 2).sum(axis=1)
            out_gain = counts[a] / (counts[a] - 1.0) * d2[a]
            in_cost = counts / (counts + 1.0) * d2
            in_cost[a] = np.inf
            b = int(np.argmin(in_cost))
            if in_cost[b] < out_gain - 1e-12:
                centers[a] = (centers[a] * counts[a] - x) / (counts[a] - 1.0)
                centers[b] = (centers[b] * counts[b] + x) / (counts[b] + 1.0)
                counts[a] -= 1.0
                counts[b] += 1.0
                labels[i] = b
                improved = True
        if not improved:
            break


def kmeans_sse(points: np.ndarray, labels: np.ndarray) -> float:
    """Within-cluster sum of squared distances to the cluster means."""
    points = np.asarray(points, dtype=np.float64)
    sse = 0.0
    for c in np.unique(labels):
        block = points[labels == c]
        sse += float(((block - block.mean(axis=0)) ** 2).sum())
    return sse


# ---------------------------------------------------------------------------
# finite-difference gradient verification


def grad_check(
    loss_fn: Callable[[ParameterStore], float],
    params: ParameterStore,
    h: float = 1e-4,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    `loss_fn` must return the scalar loss and accumulate analytic gradients
    into `params` as a side effect.  The relative error denominator is
    max(|analytic|, |numeric|, 1e-8).  Gradients are left zeroed on return.
    """
    params.zero_grads()
    loss_fn(params)
    analytic = {name: params.grad(name).copy() for name in params.names()}
    worst = 0.0
    for name, value in params.items():
        flat = value.ravel()
        ana = analytic[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn(params)
            flat[i] = orig - h
            lm = loss_fn(params)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            err = abs(ana[i] - numeric) / max(abs(ana[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    params.zero_grads()
    return worst
