"""Intra-event contrastive losses.

Two signals are trained inside each event: a node-level contrastive loss that
pulls co-occurring nodes together against sampled outside negatives, and a
center-vs-context compatibility score where negative contexts are built by
swapping one node per type for a same-type node from a different feature
cluster.  All backward passes are hand-derived and gated by finite-difference
checks in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Ahin, Event, EventDataset
from .encoder import EncoderCache
from .numerics import ParameterStore, cosine_similarity, diagnostics, kmeans, softmax

LOG_CLAMP = 1e-7


def _clamped_log(s: float) -> float:
    return float(np.log(min(max(s, LOG_CLAMP), 1.0 - LOG_CLAMP)))


def _dlog(s: float) -> float:
    # derivative of log(clamp(s)); zero in the clamped region
    if LOG_CLAMP < s < 1.0 - LOG_CLAMP:
        return 1.0 / s
    return 0.0


# ---------------------------------------------------------------------------
# pair-wise contrastive module


@dataclass(frozen=True)
class PairwiseBatchPlan:
    """Sampled contrastive structure for one event.

    For anchor position j, the positives are all other event nodes and the
    negatives are row j of `negatives`: node indices outside the event,
    sampled without replacement.
    """

    event_index: int
    nodes: tuple[int, ...]
    negatives: np.ndarray  # (len(nodes), n)
    tau: float

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if len(self.nodes) < 2:
            raise ValueError("event with a single node is invalid")
        if np.isin(self.negatives, np.array(self.nodes)).any():
            raise ValueError("negative sample belongs to the event")


def sample_pairwise_plan(dataset: EventDataset, event_index: int, n: int, tau: float,
                         rng: np.random.Generator) -> PairwiseBatchPlan:
    """Draw n distinct outside-event negatives per anchor node of one event."""
    event = dataset.events[event_index]
    nodes = event.nodes
    n_nodes = dataset.ahin.n_nodes
    if n_nodes - len(nodes) < n:
        raise ValueError(
            f"cannot sample {n} negatives: only {n_nodes - len(nodes)} nodes "
            f"outside event {event.event_id}"
        )
    excluded = set(nodes)
    negatives = np.array(
        [_sample_distinct_outside(n_nodes, excluded, n, rng) for _ in nodes],
        dtype=np.int64,
    )
    return PairwiseBatchPlan(event_index, nodes, negatives, tau)


def _sample_distinct_outside(n_nodes: int, excluded: set, n: int,
                             rng: np.random.Generator) -> list[int]:
    # rejection sampling; caller guarantees n ids exist outside `excluded`
    out: list[int] = []
    seen: set = set()
    while len(out) < n:
        j = int(rng.integers(n_nodes))
        if j in excluded or j in seen:
            continue
        seen.add(j)
        out.append(j)
    return out


def pairwise_loss_node(anchor: int, plan: PairwiseBatchPlan, z: np.ndarray) -> float:
    """Contrastive loss of one anchor node against its event under the plan.

    `anchor` is the position of the node within plan.nodes.  Kept as a scalar
    reference path (explicit cosine calls) against which the vectorized
    trainer is cross-checked.
    """
    nodes = plan.nodes
    zj = z[nodes[anchor]]
    pos = [cosine_similarity(zj, z[nodes[k]]) for k in range(len(nodes)) if k != anchor]
    if not pos:
        raise ValueError("event with a single node is invalid")
    neg = [cosine_similarity(zj, z[l]) for l in plan.negatives[anchor]]
    e_pos = np.exp(np.array(pos) / plan.tau)
    e_neg = np.exp(np.array(neg) / plan.tau)
    return float(np.log(e_pos.sum() + e_neg.sum()) - np.log(e_pos.sum()))


def pairwise_loss(plans: list[PairwiseBatchPlan], z: np.ndarray) -> float:
    """Sum of anchor losses within each event, averaged over events."""
    total = 0.0
    for plan in plans:
        total += sum(pairwise_loss_node(j, plan, z) for j in range(len(plan.nodes)))
    return total / len(plans)


def pairwise_event_grad(plan: PairwiseBatchPlan, cache: EncoderCache,
                        scale: float = 0.0) -> float:
    """Loss of one event's anchors; accumulates scale * d(loss)/dz into cache.dz.

    Vectorized over anchors.  Zero-norm embeddings contribute zero gradient,
    matching the cosine convention.
    """
    nodes = np.array(plan.nodes)
    q = nodes.size
    negs = plan.negatives
    U = cache.z_unit[nodes]                      # (q, d)
    nu = cache.z_norm[nodes]
    inv_nu = np.where(nu > 0, 1.0 / np.maximum(nu, 1e-300), 0.0)
    Nu = cache.z_unit[negs]                      # (q, n, d)
    nn = cache.z_norm[negs]
    inv_nn = np.where(nn > 0, 1.0 / np.maximum(nn, 1e-300), 0.0)

    S = U @ U.T                                  # cosine sims between event nodes
    T = np.einsum("qd,qnd->qn", U, Nu)           # anchor-vs-negative sims
    E_pos = np.exp(S / plan.tau)
    np.fill_diagonal(E_pos, 0.0)
    E_neg = np.exp(T / plan.tau)
    SP = E_pos.sum(axis=1)
    SA = SP + E_neg.sum(axis=1)
    loss = float(np.sum(np.log(SA) - np.log(SP)))

    if scale != 0.0:
        W = (E_pos / SA[:, None] - E_pos / SP[:, None]) / plan.tau   # d loss / d S
        V = (E_neg / SA[:, None]) / plan.tau                         # d loss / d T
        WS = W * S
        VT = V * T
        # anchor rows: d S[j,k]/d z_j and d T[j,l]/d z_j
        ga = W @ U - WS.sum(axis=1)[:, None] * U
        ga += np.einsum("qn,qnd->qd", V, Nu) - VT.sum(axis=1)[:, None] * U
        ga *= inv_nu[:, None]
        # positive-target rows: d S[j,k]/d z_k
        gt = W.T @ U - WS.sum(axis=0)[:, None] * U
        gt *= inv_nu[:, None]
        cache.dz[nodes] += scale * (ga + gt)
        # negative targets: d T[j,l]/d z_neg
        gn = V[..., None] * (U[:, None, :] - T[..., None] * Nu)
        gn *= inv_nn[..., None]
        np.add.at(cache.dz, negs, scale * gn)
    return loss


# ---------------------------------------------------------------------------
# multivariate contrastive module


@dataclass
class AttentionCache:
    Hc: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    A: np.ndarray
    O: np.ndarray
    argmax_rows: np.ndarray
    c_mu: np.ndarray


def attention_context(h_ctx: np.ndarray, params: ParameterStore) -> AttentionCache:
    """Single-head self-attention over the context set, then per-dim max.

    Scaled dot-product weights (1/sqrt(d)); projections are shared across
    types.  The output is invariant to the ordering of the context rows.
    """
    Hc = np.atleast_2d(np.asarray(h_ctx, dtype=np.float64))
    d = Hc.shape[1]
    Q = Hc @ params["att_q"]
    K = Hc @ params["att_k"]
    V = Hc @ params["att_v"]
    A = softmax(Q @ K.T / np.sqrt(d), axis=1)
    O = A @ V
    argmax_rows = np.argmax(O, axis=0)
    c_mu = O[argmax_rows, np.arange(d)]
    return AttentionCache(Hc, Q, K, V, A, O, argmax_rows, c_mu)


def attention_context_backward(cache: AttentionCache, g_cmu: np.ndarray,
                               params: ParameterStore) -> np.ndarray:
    """Accumulate projection gradients; returns d(loss)/d(context h rows)."""
    c, d = cache.Hc.shape
    gO = np.zeros((c, d))
    gO[cache.argmax_rows, np.arange(d)] = g_cmu    # max-pooling routes per dim
    gA = gO @ cache.V.T
    gV = cache.A.T @ gO
    gS = cache.A * (gA - (gA * cache.A).sum(axis=1, keepdims=True))
    gQ = gS @ cache.K / np.sqrt(d)
    gK = gS.T @ cache.Q / np.sqrt(d)
    params.grad("att_q")[...] += cache.Hc.T @ gQ
    params.grad("att_k")[...] += cache.Hc.T @ gK
    params.grad("att_v")[...] += cache.Hc.T @ gV
    return gQ @ params["att_q"].T + gK @ params["att_k"].T + gV @ params["att_v"].T


def multivariate_context(h_ctx: np.ndarray, params: ParameterStore) -> np.ndarray:
    """Context representation: attention over type-aware vectors, max-pooled."""
    return attention_context(h_ctx, params).c_mu


def multivariate_score(h_center: np.ndarray, c_mu: np.ndarray,
                       params: ParameterStore) -> float:
    """Center/context compatibility: sigmoid of the bilinear form."""
    p = float(h_center @ params["W_mu"] @ c_mu)
    return float(1.0 / (1.0 + np.exp(-p))) if p >= 0 else float(np.exp(p) / (1.0 + np.exp(p)))


def multivariate_loss(s_pos, s_neg) -> float:
    """Mean binary cross-entropy over events: positive contexts vs corrupted ones."""
    s_pos = np.atleast_1d(np.asarray(s_pos, dtype=np.float64))
    s_neg = np.atleast_1d(np.asarray(s_neg, dtype=np.float64))
    if s_pos.shape != s_neg.shape:
        raise ValueError("score arrays must have matching lengths")
    total = 0.0
    for sp, sn in zip(s_pos, s_neg):
        total -= _clamped_log(sp) + _clamped_log(1.0 - sn)
    return total / s_pos.size


@dataclass(frozen=True)
class CorruptedContext:
    """One same-type, cross-cluster replacement in an event's context."""

    event_id: int
    position: int
    replaced: int
    replacement: int
    replaced_cluster: int
    replacement_cluster: int
    fallback: bool  # no cross-cluster candidate existed; any outside same-type node used

    def __post_init__(self):
        if not self.fallback and self.replaced_cluster == self.replacement_cluster:
            raise ValueError("replacement must come from a different cluster")


def compute_type_clusters(ahin: Ahin, k: int, seed: int) -> np.ndarray:
    """K-means labels on raw features, one clustering per node type.

    Returns a global per-node label array; labels are only comparable within
    a type.  k is clipped to the node count of small types.
    """
    labels = np.zeros(ahin.n_nodes, dtype=np.int64)
    for i, t in enumerate(ahin.type_names):
        idx = ahin.indices_of_type(t)
        if idx.size == 0:
            continue
        kt = min(k, idx.size)
        labels[idx] = kmeans(ahin.features[idx], kt, seed=seed + i)
    return labels


class ClusterIndex:
    """Per-type node pools split by cluster label, for corruption sampling."""

    def __init__(self, ahin: Ahin, clusters: np.ndarray):
        self.cross_counts: dict[str, dict[int, int]] = {}
        for t in ahin.type_names:
            idx = ahin.indices_of_type(t)
            labels, counts = np.unique(clusters[idx], return_counts=True)
            total = idx.size
            self.cross_counts[t] = {int(c): int(total - n) for c, n in zip(labels, counts)}


def corrupt_context(event: Event, ahin: Ahin, clusters: np.ndarray,
                    rng: np.random.Generator,
                    index: ClusterIndex | None = None) -> list[CorruptedContext]:
    """One replacement per context type present in the event.

    The replacement is a uniformly chosen same-type node from a different
    cluster, never a node of the event itself.  If no cross-cluster node
    exists the fallback is any same-type node outside the event (counted in
    diagnostics); with no candidates at all the type is skipped.  Passing a
    prebuilt ClusterIndex skips a per-call pool scan.
    """
    if index is None:
        index = ClusterIndex(ahin, clusters)
    in_event = set(event.nodes)
    by_type: dict[str, list[int]] = {}
    for pos, idx in enumerate(event.context):
        by_type.setdefault(ahin.type_name_of(idx), []).append(pos)
    out = []
    for t in sorted(by_type):
        positions = by_type[t]
        pos = positions[rng.integers(len(positions))]
        replaced = event.context[pos]
        c0 = int(clusters[replaced])
        pool = ahin.indices_of_type(t)
        replacement = None
        fallback = False
        if index.cross_counts[t].get(c0, pool.size) > 0:
            # rejection over the type pool: uniform on cross-cluster non-event nodes
            for _ in range(64):
                j = int(pool[rng.integers(pool.size)])
                if j not in in_event and int(clusters[j]) != c0:
                    replacement = j
                    break
        if replacement is None:
            # exact path: tiny cross pool, or no cross-cluster node at all
            outside = pool[~np.isin(pool, np.fromiter(in_event, dtype=np.int64))]
            cross = outside[clusters[outside] != c0]
            if cross.size:
                replacement = int(cross[rng.integers(cross.size)])
            elif outside.size:
                diagnostics["corrupt_context_fallback"] += 1
                fallback = True
                replacement = int(outside[rng.integers(outside.size)])
            else:
                diagnostics["corrupt_context_skipped"] += 1
                continue
        out.append(CorruptedContext(
            event_id=event.event_id, position=pos, replaced=replaced,
            replacement=replacement, replaced_cluster=c0,
            replacement_cluster=int(clusters[replacement]), fallback=fallback,
        ))
    return out


def apply_corruptions(event: Event, corruptions: list[CorruptedContext]) -> tuple[int, ...]:
    """Context tuple with the planned replacements applied."""
    ctx = list(event.context)
    for c in corruptions:
        ctx[c.position] = c.replacement
    return tuple(ctx)


def multivariate_event_grad(event: Event, corrupted_ctx: tuple[int, ...],
                            cache: EncoderCache, params: ParameterStore,
                            scale: float = 0.0) -> tuple[float, float, float]:
    """BCE of one event's positive and corrupted context scores.

    Returns (loss, s_pos, s_neg) and, when scale is nonzero, accumulates
    scale * gradients into the parameter store and cache.dh.
    """
    ctx = np.array(event.context)
    ctx2 = np.array(corrupted_ctx)
    hq = cache.h[event.center]
    att_p = attention_context(cache.h[ctx], params)
    att_n = attention_context(cache.h[ctx2], params)
    w = params["W_mu"]
    p_pos = float(hq @ w @ att_p.c_mu)
    p_neg = float(hq @ w @ att_n.c_mu)
    s_pos = float(_sigmoid_scalar(p_pos))
    s_neg = float(_sigmoid_scalar(p_neg))
    loss = -(_clamped_log(s_pos) + _clamped_log(1.0 - s_neg))

    if scale != 0.0:
        # d loss/d p with the clamped-log convention folded in
        gp_pos = scale * (-_dlog(s_pos)) * s_pos * (1.0 - s_pos)
        gp_neg = scale * _dlog(1.0 - s_neg) * s_neg * (1.0 - s_neg)
        for gp, att, c_nodes in ((gp_pos, att_p, ctx), (gp_neg, att_n, ctx2)):
            if gp == 0.0:
                continue
            params.grad("W_mu")[...] += gp * (hq[:, None] * att.c_mu)
            cache.dh[event.center] += gp * (w @ att.c_mu)
            g_cmu = gp * (w.T @ hq)
            g_rows = attention_context_backward(att, g_cmu, params)
            cache.dh[c_nodes] += g_rows
    return loss, s_pos, s_neg


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)
