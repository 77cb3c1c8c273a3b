"""Inter-event contrastive module.

Each event is summarized by an attention-weighted context vector concatenated
with the raw center embedding.  Events linked by more than t_pos shared
context nodes are positives; events sharing fewer than t_neg nodes are
negatives; compatibility between summaries is a bilinear sigmoid score trained
with binary cross-entropy.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Ahin, Event, EventDataset
from .encoder import EncoderCache
from .numerics import ParameterStore, diagnostics, softmax

INAPPLICABLE = "inter-event module inapplicable; set γ=0"
NEIGHBOR_CACHE_MAGIC = "neighbor-cache v1"


@dataclass
class EventRepresentation:
    """Per-event summary e = context attention ‖ center embedding.

    Carries the attention intermediates needed by the hand-derived backward
    pass; rows_by_type groups context positions by node type so the
    type-specific key projections vectorize.
    """

    event: Event
    c_in: np.ndarray
    e: np.ndarray
    Zc: np.ndarray
    zq: np.ndarray
    keys: np.ndarray
    logits_pre: np.ndarray   # k_j . z_q, before the activation
    alpha: np.ndarray
    rows_by_type: list[tuple[str, np.ndarray]]


def event_representation(event: Event, cache: EncoderCache, ahin: Ahin,
                         params: ParameterStore, act, act_grad) -> EventRepresentation:
    """Attention over context embeddings keyed against the center (length-2d output)."""
    ctx = np.array(event.context)
    Zc = cache.z[ctx]
    zq = cache.z[event.center]
    keys = np.empty_like(Zc)
    type_ids = ahin.type_ids[ctx]
    rows_by_type = []
    for tid in np.unique(type_ids):
        rows = np.flatnonzero(type_ids == tid)
        name = ahin.type_names[tid]
        keys[rows] = Zc[rows] @ params[f"P_{name}"].T
        rows_by_type.append((name, rows))
    logits_pre = keys @ zq
    alpha = softmax(act(logits_pre))
    c_in = alpha @ Zc
    return EventRepresentation(event, c_in, np.concatenate([c_in, zq]), Zc, zq,
                               keys, logits_pre, alpha, rows_by_type)


def event_representation_backward(rep: EventRepresentation, g_e: np.ndarray,
                                  cache: EncoderCache, params: ParameterStore,
                                  act_grad) -> None:
    """Accumulate d(loss)/d(z rows) into cache.dz and key-projection gradients."""
    d = rep.zq.size
    ctx = np.array(rep.event.context)
    g_c = g_e[:d]
    g_zq = g_e[d:].copy()
    # c_in = alpha @ Zc
    g_alpha = rep.Zc @ g_c
    g_ctx_rows = rep.alpha[:, None] * g_c
    # softmax over activated logits
    g_u = rep.alpha * (g_alpha - float(rep.alpha @ g_alpha))
    g_t = g_u * act_grad(rep.logits_pre)
    # logits t_j = keys_j . zq
    g_keys = g_t[:, None] * rep.zq
    g_zq += rep.keys.T @ g_t
    for name, rows in rep.rows_by_type:
        params.grad(f"P_{name}")[...] += g_keys[rows].T @ rep.Zc[rows]
        g_ctx_rows[rows] += g_keys[rows] @ params[f"P_{name}"]
    cache.dz[ctx] += g_ctx_rows
    cache.dz[rep.event.center] += g_zq


def inter_event_score(e_a: np.ndarray, e_b: np.ndarray, params: ParameterStore) -> float:
    """Compatibility of two event summaries: sigmoid of the bilinear form."""
    p = float(e_a @ params["W_in"] @ e_b)
    if p >= 0:
        return float(1.0 / (1.0 + np.exp(-p)))
    ep = np.exp(p)
    return float(ep / (1.0 + ep))


def inter_pair_grad(e_a: np.ndarray, e_b: np.ndarray, params: ParameterStore,
                    g_p: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the bilinear pre-activation p = e_a W e_b; accumulates dW."""
    w = params["W_in"]
    params.grad("W_in")[...] += g_p * (e_a[:, None] * e_b)
    return g_p * (w @ e_b), g_p * (w.T @ e_a)


class NeighborSets:
    """Positive and negative partner events for the inter-event loss.

    Positives are stored explicitly.  Negatives are the complement of a small
    blocked set (events sharing at least t_neg nodes), which keeps memory at
    O(pairs that overlap) instead of O(m^2); accessors present plain id lists.
    """

    def __init__(self, m: int, t_pos: int, t_neg: int,
                 positives: list[np.ndarray], blocked: list[frozenset]):
        if t_pos < 0 or t_neg < 0:
            raise ValueError("thresholds must be non-negative")
        self.m = m
        self.t_pos = t_pos
        self.t_neg = t_neg
        self._positives = positives
        self._blocked = blocked

    def positives_of(self, i: int) -> np.ndarray:
        return self._positives[i]

    def negatives_of(self, i: int) -> np.ndarray:
        if self.t_neg == 0:
            return np.empty(0, dtype=np.int64)
        drop = np.fromiter(self._blocked[i] | {i}, dtype=np.int64)
        return np.setdiff1d(np.arange(self.m), drop)

    def n_negatives(self, i: int) -> int:
        if self.t_neg == 0:
            return 0
        return self.m - 1 - len(self._blocked[i])

    def participates(self, i: int) -> bool:
        return self._positives[i].size > 0 and self.n_negatives(i) > 0

    @property
    def any_participating(self) -> bool:
        return any(self.participates(i) for i in range(self.m))

    def sample_positive(self, i: int, rng: np.random.Generator) -> int:
        pos = self._positives[i]
        if pos.size == 0:
            raise ValueError(f"event index {i} has no positive neighbors")
        return int(pos[rng.integers(pos.size)])

    def sample_negative(self, i: int, rng: np.random.Generator) -> int:
        if self.n_negatives(i) == 0:
            raise ValueError(f"event index {i} has no negative neighbors")
        blocked = self._blocked[i]
        # rejection is fast while the blocked set is sparse; bounded fallback
        for _ in range(64):
            j = int(rng.integers(self.m))
            if j != i and j not in blocked:
                return j
        pool = self.negatives_of(i)
        return int(pool[rng.integers(pool.size)])

    def save(self, path, event_ids: list[int]) -> None:
        lines = [f"# {NEIGHBOR_CACHE_MAGIC} t_pos={self.t_pos} t_neg={self.t_neg} m={self.m}"]
        for i in range(self.m):
            pos = ",".join(str(event_ids[j]) for j in self._positives[i])
            blk = ",".join(str(event_ids[j]) for j in sorted(self._blocked[i]))
            lines.append(f"{event_ids[i]}\t{pos}\t{blk}")
        Path(path).write_text("\n".join(lines) + "\n")


def load_neighbor_sets(path, dataset: EventDataset, t_pos: int, t_neg: int) -> NeighborSets:
    """Read a neighbor cache, validating thresholds and event identity."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {NEIGHBOR_CACHE_MAGIC}"):
        raise ValueError(f"{path}: not a neighbor cache file")
    header = dict(kv.split("=") for kv in lines[0].split()[3:])
    if int(header["t_pos"]) != t_pos or int(header["t_neg"]) != t_neg or int(header["m"]) != dataset.m:
        raise ValueError(f"{path}: cache was built for different thresholds or dataset")
    index_of = {ev.event_id: i for i, ev in enumerate(dataset.events)}

    def parse_ids(cell: str) -> list[int]:
        if not cell:
            return []
        out = []
        for tok in cell.split(","):
            eid = int(tok)
            if eid not in index_of:
                raise ValueError(f"{path}: unknown event id {eid}")
            out.append(index_of[eid])
        return out

    positives = [np.empty(0, dtype=np.int64)] * dataset.m
    blocked: list[frozenset] = [frozenset()] * dataset.m
    for line in lines[1:]:
        if not line.strip():
            continue
        eid_s, pos_s, blk_s = line.split("\t")
        eid = int(eid_s)
        if eid not in index_of:
            raise ValueError(f"{path}: unknown event id {eid}")
        i = index_of[eid]
        positives[i] = np.array(sorted(parse_ids(pos_s)), dtype=np.int64)
        blocked[i] = frozenset(parse_ids(blk_s))
    return NeighborSets(dataset.m, t_pos, t_neg, positives, blocked)


def build_neighbor_sets(dataset: EventDataset, t_pos: int, t_neg: int) -> NeighborSets:
    """One pass over context overlaps via an inverted node index.

    Centers are unique per event and never of a context type, so shared-node
    counts equal shared-context counts and one pair counter serves both
    thresholds.
    """
    if t_pos < 0 or t_neg < 0:
        raise ValueError("thresholds must be non-negative")
    events_of_node: dict[int, list[int]] = defaultdict(list)
    for i, ev in enumerate(dataset.events):
        for idx in ev.context:
            events_of_node[idx].append(i)
    pair_counts: Counter = Counter()
    for evs in events_of_node.values():
        for a in range(len(evs)):
            for b in range(a + 1, len(evs)):
                pair_counts[(evs[a], evs[b])] += 1
    positives: list[list[int]] = [[] for _ in range(dataset.m)]
    blocked: list[set] = [set() for _ in range(dataset.m)]
    for (i, j), c in pair_counts.items():
        if c > t_pos:
            positives[i].append(j)
            positives[j].append(i)
        if t_neg >= 1 and c >= t_neg:
            blocked[i].add(j)
            blocked[j].add(i)
    return NeighborSets(
        dataset.m, t_pos, t_neg,
        [np.array(sorted(p), dtype=np.int64) for p in positives],
        [frozenset(b) for b in blocked],
    )


def sample_inter_draws(neighbor_sets: NeighborSets,
                       rng: np.random.Generator) -> list[tuple[int, int] | None]:
    """Per event: one (positive, negative) partner pair, or None if excluded."""
    draws: list[tuple[int, int] | None] = []
    skipped = 0
    for i in range(neighbor_sets.m):
        if neighbor_sets.participates(i):
            draws.append((neighbor_sets.sample_positive(i, rng),
                          neighbor_sets.sample_negative(i, rng)))
        else:
            draws.append(None)
            skipped += 1
    if skipped == neighbor_sets.m:
        raise ValueError(INAPPLICABLE)
    diagnostics["inter_event_excluded"] += skipped
    return draws


def inter_event_loss(representations: list[EventRepresentation],
                     neighbor_sets: NeighborSets, params: ParameterStore,
                     rng: np.random.Generator) -> float:
    """Mean BCE over events with both neighbor sets nonempty."""
    from .intra_event import _clamped_log

    draws = sample_inter_draws(neighbor_sets, rng)
    total = 0.0
    count = 0
    for i, draw in enumerate(draws):
        if draw is None:
            continue
        p, q = draw
        s = inter_event_score(representations[i].e, representations[p].e, params)
        s_neg = inter_event_score(representations[i].e, representations[q].e, params)
        total -= _clamped_log(s) + _clamped_log(1.0 - s_neg)
        count += 1
    return total / count
