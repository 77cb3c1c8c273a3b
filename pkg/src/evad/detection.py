"""Anomaly scoring, ranking metrics, and thresholded detection.

An event's anomaly score negates a weighted sum of three normality signals:
the minimal (or variant) pairwise cosine similarity inside the event, the
center-vs-context bilinear score, and the bilinear compatibility with a
sampled neighbor event.  Higher totals mean more anomalous.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Event, EventDataset
from .encoder import encode_all
from .inter_event import NeighborSets, build_neighbor_sets, event_representation, inter_event_score
from .intra_event import (
    ClusterIndex,
    apply_corruptions,
    attention_context,
    compute_type_clusters,
    corrupt_context,
    multivariate_score,
    sample_pairwise_plan,
)
from .numerics import activation_pair, diagnostics
from .training import TrainConfig

PAIRWISE_MODES = ("min", "avg", "std", "loss")
BILINEAR_MODES = ("pos", "neg", "pos_and_neg")


@dataclass(frozen=True)
class ScoreVariant:
    """Ablation switches for the score: pairwise statistic and bilinear side."""

    pairwise_mode: str = "min"
    bilinear_mode: str = "pos"

    def __post_init__(self):
        if self.pairwise_mode not in PAIRWISE_MODES:
            raise ValueError(f"unknown pairwise_mode {self.pairwise_mode!r}")
        if self.bilinear_mode not in BILINEAR_MODES:
            raise ValueError(f"unknown bilinear_mode {self.bilinear_mode!r}")


@dataclass
class ScoreReport:
    """Per-event score decomposition; rank 1 is the most anomalous event.

    The stored s_mu / s_in columns are the bilinear terms after the variant's
    mode is applied, so total == -(alpha*pairwise + beta*s_mu + gamma*s_in)
    holds for every variant.
    """

    event_ids: list
    total: np.ndarray
    pairwise: np.ndarray
    s_mu: np.ndarray
    s_in: np.ndarray
    rank: np.ndarray
    variant: ScoreVariant
    weights: tuple
    checkpoint: str | None = None


def score_events(dataset: EventDataset, params, cfg: TrainConfig,
                 variant: ScoreVariant = ScoreVariant(), weights=None,
                 seed: int = 0, neighbor_sets: NeighborSets | None = None,
                 checkpoint_id: str | None = None, threads: int = 1) -> ScoreReport:
    """Score every event under the trained parameters.

    Weights default to the training (alpha, beta, gamma).  All sampling
    (loss-variant negatives, corrupted contexts, neighbor draws) happens
    sequentially up front, so results are independent of `threads`.  The
    inter-event column is computed only when its weight is positive; events
    without the needed neighbors receive the mean of the computed values.
    """
    if weights is None:
        weights = (cfg.alpha, cfg.beta, cfg.gamma)
    alpha, beta, gamma = (float(w) for w in weights)
    m = dataset.m
    ahin = dataset.ahin
    act, act_grad = activation_pair(cfg.activation)
    cache = encode_all(ahin, params, cfg.activation)
    ss = np.random.SeedSequence(seed)
    s_pa, s_mu_stream, s_in_stream, s_cluster = ss.spawn(4)

    for ev in dataset.events:
        if ev.size < 2:
            raise ValueError(f"event {ev.event_id} has fewer than 2 nodes")

    # pairwise component
    plans = None
    if variant.pairwise_mode == "loss":
        rng = np.random.default_rng(s_pa)
        plans = [sample_pairwise_plan(dataset, i, cfg.n, cfg.tau, rng) for i in range(m)]

    def pairwise_of(i: int) -> float:
        return _pairwise_component(dataset.events[i], cache, variant.pairwise_mode,
                                   None if plans is None else plans[i])

    pairwise = np.array(_map(pairwise_of, range(m), threads))

    # center-vs-context bilinear term
    corrupted = None
    if variant.bilinear_mode != "pos":
        rng = np.random.default_rng(s_mu_stream)
        cluster_seed = int(s_cluster.generate_state(1)[0] % (2 ** 31))
        clusters = compute_type_clusters(ahin, cfg.K, seed=cluster_seed)
        index = ClusterIndex(ahin, clusters)
        corrupted = [apply_corruptions(ev, corrupt_context(ev, ahin, clusters, rng, index))
                     for ev in dataset.events]

    def mu_of(i: int) -> float:
        ev = dataset.events[i]
        hq = cache.h[ev.center]
        s_pos = None
        if variant.bilinear_mode in ("pos", "pos_and_neg"):
            c_mu = attention_context(cache.h[np.array(ev.context)], params).c_mu
            s_pos = multivariate_score(hq, c_mu, params)
        if variant.bilinear_mode == "pos":
            return s_pos
        c_neg = attention_context(cache.h[np.array(corrupted[i])], params).c_mu
        s_neg = multivariate_score(hq, c_neg, params)
        if variant.bilinear_mode == "neg":
            return 1.0 - s_neg
        return 0.5 * (s_pos + (1.0 - s_neg))

    s_mu = np.array(_map(mu_of, range(m), threads))

    # inter-event term
    if gamma > 0:
        if neighbor_sets is None:
            neighbor_sets = build_neighbor_sets(dataset, cfg.t_pos, cfg.t_neg)
        s_in = _inter_column(dataset, cache, params, cfg, neighbor_sets, variant,
                             np.random.default_rng(s_in_stream), act, act_grad)
    else:
        s_in = np.zeros(m)

    total = -(alpha * pairwise + beta * s_mu + gamma * s_in)
    order = np.argsort(-total, kind="stable")
    rank = np.empty(m, dtype=np.int64)
    rank[order] = np.arange(1, m + 1)
    return ScoreReport([ev.event_id for ev in dataset.events], total, pairwise,
                       s_mu, s_in, rank, variant, (alpha, beta, gamma), checkpoint_id)


def event_score(event, dataset: EventDataset, params, cfg: TrainConfig,
                variant: ScoreVariant = ScoreVariant(), weights=None,
                seed: int = 0, neighbor_sets: NeighborSets | None = None) -> float:
    """Anomaly score of a single event (by Event or positional index)."""
    if isinstance(event, Event):
        matches = [i for i, ev in enumerate(dataset.events) if ev.event_id == event.event_id]
        if not matches:
            raise ValueError(f"event {event.event_id} is not part of the dataset")
        index = matches[0]
    else:
        index = int(event)
    report = score_events(dataset, params, cfg, variant, weights, seed, neighbor_sets)
    return float(report.total[index])


def _pairwise_component(event: Event, cache, mode: str, plan) -> float:
    nodes = np.array(event.nodes)
    if nodes.size < 2:
        raise ValueError(f"event {event.event_id} has fewer than 2 nodes")
    U = cache.z_unit[nodes]
    S = U @ U.T
    iu = np.triu_indices(nodes.size, k=1)
    sims = S[iu]
    if mode == "min":
        return float(sims.min())
    if mode == "avg":
        return float(sims.mean())
    if mode == "std":
        # negated so that, like the others, larger means more normal
        return float(-sims.std())
    # mode == "loss": negated worst per-anchor contrastive loss
    negs = plan.negatives
    Nu = cache.z_unit[negs]
    E_pos = np.exp(S / plan.tau)
    np.fill_diagonal(E_pos, 0.0)
    E_neg = np.exp(np.einsum("qd,qnd->qn", U, Nu) / plan.tau)
    sp = E_pos.sum(axis=1)
    sa = sp + E_neg.sum(axis=1)
    node_losses = np.log(sa) - np.log(sp)
    return float(-node_losses.max())


def _inter_column(dataset, cache, params, cfg, neighbor_sets, variant, rng,
                  act, act_grad) -> np.ndarray:
    m = dataset.m
    pos_partner = np.full(m, -1, dtype=np.int64)
    neg_partner = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        if neighbor_sets.positives_of(i).size > 0:
            pos_partner[i] = neighbor_sets.sample_positive(i, rng)
        if variant.bilinear_mode != "pos" and neighbor_sets.n_negatives(i) > 0:
            neg_partner[i] = neighbor_sets.sample_negative(i, rng)

    reps = [event_representation(ev, cache, dataset.ahin, params, act, act_grad)
            for ev in dataset.events]

    def fill(partner: np.ndarray) -> np.ndarray:
        vals = np.full(m, np.nan)
        for i in range(m):
            if partner[i] >= 0:
                vals[i] = inter_event_score(reps[i].e, reps[partner[i]].e, params)
        computed = vals[~np.isnan(vals)]
        if computed.size == 0:
            diagnostics["inter_score_all_imputed"] += 1
            fallback = 0.5  # no neighbors anywhere: neutral compatibility
        else:
            fallback = float(computed.mean())
        vals[np.isnan(vals)] = fallback
        return vals

    if variant.bilinear_mode == "pos":
        return fill(pos_partner)
    if variant.bilinear_mode == "neg":
        return 1.0 - fill(neg_partner)
    return 0.5 * (fill(pos_partner) + (1.0 - fill(neg_partner)))


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# ranking metrics


def average_precision(scores, labels) -> float:
    """Mean precision at each positive hit over the descending-score ranking.

    Ties keep their original order (stable sort), which pins down results on
    tied scores.
    """
    scores, labels = _check_pairs(scores, labels)
    if labels.sum() == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    lab = labels[order]
    hits = np.cumsum(lab)
    ranks = np.arange(1, lab.size + 1)
    return float((hits[lab == 1] / ranks[lab == 1]).mean())


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative; ties count half."""
    scores, labels = _check_pairs(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both a positive and a negative label")
    ranks = _tie_averaged_ranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _tie_averaged_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    s = scores[order]
    while i < scores.size:
        j = i
        while j < scores.size and s[j] == s[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)
        i = j
    return ranks


def _check_pairs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


# ---------------------------------------------------------------------------
# thresholded detection


def detect(scores, threshold: float) -> np.ndarray:
    """Indices of events whose score reaches the threshold (ascending order)."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.flatnonzero(scores >= threshold)


def detect_top_fraction(scores, fraction: float) -> np.ndarray:
    """Indices of the floor(fraction * m) highest-scoring events.

    Ties at the cut are resolved by original order (stable), so exactly that
    many indices come back.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0,1]")
    scores = np.asarray(scores, dtype=np.float64)
    count = int(np.floor(fraction * scores.size))
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:count])


def f1_optimal_threshold(scores, labels) -> tuple[float, float]:
    """Evaluation-only helper: (threshold, F1) maximizing F1 over score cuts."""
    scores, labels = _check_pairs(scores, labels)
    if labels.sum() == 0:
        raise ValueError("F1 needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    lab = labels[order]
    s = scores[order]
    tp = np.cumsum(lab)
    k = np.arange(1, lab.size + 1)
    precision = tp / k
    recall = tp / labels.sum()
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    # a threshold must include every event tied with the cut score
    if lab.size > 1:
        valid = np.flatnonzero(np.append(s[:-1] != s[1:], True))
    else:
        valid = np.array([0])
    best = valid[int(np.argmax(f1[valid]))]
    return float(s[best]), float(f1[best])


# ---------------------------------------------------------------------------
# score report file IO


def write_scores(report: ScoreReport, path) -> None:
    """One line per event: id, total, pairwise, s_mu, s_in, rank (tab-separated)."""
    lines = [
        f"# scores v1 variant={report.variant.pairwise_mode},{report.variant.bilinear_mode} "
        f"weights={report.weights[0]!r},{report.weights[1]!r},{report.weights[2]!r} "
        f"checkpoint={report.checkpoint or '-'}"
    ]
    for i, eid in enumerate(report.event_ids):
        lines.append(
            f"{eid}\t{float(report.total[i])!r}\t{float(report.pairwise[i])!r}"
            f"\t{float(report.s_mu[i])!r}\t{float(report.s_in[i])!r}\t{int(report.rank[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path) -> ScoreReport:
    """Parse a score report file back into a ScoreReport."""
    lines = Path(path).read_text().splitlines()
    variant = ScoreVariant()
    weights = (1.0, 0.0, 0.0)
    checkpoint = None
    event_ids, cols = [], ([], [], [], [], [])
    for line in lines:
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line.split():
                if tok.startswith("variant="):
                    pm, bm = tok.split("=", 1)[1].split(",")
                    variant = ScoreVariant(pm, bm)
                elif tok.startswith("weights="):
                    weights = tuple(float(x) for x in tok.split("=", 1)[1].split(","))
                elif tok.startswith("checkpoint=") and tok.split("=", 1)[1] != "-":
                    checkpoint = tok.split("=", 1)[1]
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise ValueError(f"{path}: malformed score line {line!r}")
        event_ids.append(int(parts[0]))
        for c, v in zip(cols, parts[1:]):
            c.append(float(v))
    if not event_ids:
        raise ValueError(f"{path}: no score records")
    total, pairwise, s_mu, s_in, rank = (np.array(c) for c in cols)
    return ScoreReport(event_ids, total, pairwise, s_mu, s_in,
                       rank.astype(np.int64), variant, weights, checkpoint)
