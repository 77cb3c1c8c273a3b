"""Joint training of the three contrastive modules.

The objective is the weighted sum alpha * pairwise + beta * multivariate +
gamma * inter-event, optimized with Adam over event mini-batches.  All
sampling (negatives, corrupted contexts, inter-event draws, shuffling) runs on
seed-split RNG streams, so runs are bit-reproducible for a given config.
"""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import EventDataset
from .encoder import encode_all, encode_backward, init_params, pairwise_group
from .inter_event import (
    INAPPLICABLE,
    build_neighbor_sets,
    event_representation,
    event_representation_backward,
    inter_event_score,
    inter_pair_grad,
    sample_inter_draws,
)
from .intra_event import (
    ClusterIndex,
    _clamped_log,
    _dlog,
    apply_corruptions,
    compute_type_clusters,
    corrupt_context,
    multivariate_event_grad,
    pairwise_event_grad,
    sample_pairwise_plan,
)
from .numerics import AdamState, NonFiniteGradientError, activation_pair, adam_step

CHECKPOINT_FILENAME = "checkpoint.npz"
REPORT_FILENAME = "train_report.txt"

# module weight presets (alpha, beta, gamma)
WEIGHT_PRESETS = {
    "aminer": (1.0, 0.8, 0.2),
    "imdb": (1.0, 0.1, 0.1),
    "meituan": (0.5, 1.0, 0.3),
}


@dataclass(frozen=True)
class TrainConfig:
    """All training knobs; also the schema of the flat key=value config file.

    decay_scope picks between the two readings of the pairwise learning-rate
    schedule: "group" halves the pairwise parameter group every two epochs
    regardless of the other modules, "solo" only when beta and gamma are zero.
    """

    d: int = 64
    tau: float = 1.0
    n: int = 10
    alpha: float = 1.0
    beta: float = 0.8
    gamma: float = 0.2
    t_pos: int = 1
    t_neg: int = 1
    K: int = 10
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_scope: str = "group"
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    activation: str = "elu"
    grad_spot_check: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("module weights must be non-negative")
        if self.alpha == 0 and self.beta == 0 and self.gamma == 0:
            raise ValueError("at least one module weight must be positive")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0,1]")
        if self.decay_scope not in ("group", "solo"):
            raise ValueError(f"unknown decay_scope {self.decay_scope!r}")
        for name in ("d", "n", "K", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.t_pos < 0 or self.t_neg < 0:
            raise ValueError("thresholds must be non-negative")
        activation_pair(self.activation)  # raises on unknown name

    def with_updates(self, **kw) -> "TrainConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(kw)
        return TrainConfig(**current)


def save_config(cfg: TrainConfig, path) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)!r}" if isinstance(getattr(cfg, f.name), str)
             else f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path, **overrides) -> TrainConfig:
    """Parse a flat key=value file; keyword overrides win over file values."""
    known = {f.name for f in fields(TrainConfig)}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, raw = line.split("=", 1)
        key, raw = key.strip(), raw.strip()
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_config_value(key, raw, path, lineno)
    values.update(overrides)
    return TrainConfig(**values)


def _parse_config_value(key: str, raw: str, path, lineno: int):
    default = getattr(TrainConfig(), key)
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip("'\"")
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad value {raw!r} for key {key!r}")


def total_loss(l_pa: float, l_mu: float, l_in: float, cfg: TrainConfig) -> float:
    """Weighted joint objective."""
    return cfg.alpha * l_pa + cfg.beta * l_mu + cfg.gamma * l_in


@dataclass
class EpochStats:
    total: float
    pairwise: float
    multivariate: float
    inter_event: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # list[EpochStats]
    grad_check_error: float | None = None
    wall_clock: float = 0.0
    checkpoint_path: str | None = None
    aborted: str | None = None


def write_report(report: TrainReport, path) -> None:
    lines = ["# train-report v1"]
    lines.append(f"epochs={len(report.epochs)}")
    lines.append(f"grad_check={report.grad_check_error if report.grad_check_error is not None else '-'}")
    lines.append(f"wall_clock={report.wall_clock:.3f}")
    lines.append(f"checkpoint={report.checkpoint_path or '-'}")
    lines.append(f"aborted={report.aborted or '-'}")
    for i, st in enumerate(report.epochs, start=1):
        lines.append(
            f"epoch={i} total={float(st.total)!r} pairwise={float(st.pairwise)!r} "
            f"multivariate={float(st.multivariate)!r} inter_event={float(st.inter_event)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def train(dataset: EventDataset, cfg: TrainConfig, out_dir=None):
    """Optimize the joint objective; returns (parameters, report).

    Deterministic given (dataset, cfg): sampling draws come from named child
    streams of the config seed, so module toggles never shift each other's
    draws.  A non-finite loss or gradient aborts the run and returns the
    parameters of the last completed epoch.
    """
    start = time.perf_counter()
    ahin = dataset.ahin
    m = dataset.m
    act, act_grad = activation_pair(cfg.activation)
    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_cluster, s_shuffle, s_pa, s_mu, s_in, s_check = ss.spawn(7)

    params = init_params(ahin, cfg.d, np.random.default_rng(s_init))
    clusters = cluster_index = None
    if cfg.beta > 0:
        cluster_seed = int(s_cluster.generate_state(1)[0] % (2 ** 31))
        clusters = compute_type_clusters(ahin, cfg.K, seed=cluster_seed)
        cluster_index = ClusterIndex(ahin, clusters)
    neighbor_sets = None
    if cfg.gamma > 0:
        neighbor_sets = build_neighbor_sets(dataset, cfg.t_pos, cfg.t_neg)
        if not neighbor_sets.any_participating:
            raise ValueError(INAPPLICABLE)

    rng_shuffle = np.random.default_rng(s_shuffle)
    rng_pa = np.random.default_rng(s_pa)
    rng_mu = np.random.default_rng(s_mu)
    rng_in = np.random.default_rng(s_in)

    report = TrainReport()
    if cfg.grad_spot_check:
        report.grad_check_error = _spot_check(dataset, params, cfg, clusters,
                                              cluster_index, neighbor_sets,
                                              act, act_grad,
                                              np.random.default_rng(s_check))

    adam = AdamState(lr=cfg.lr)
    snapshot = params.copy()
    for epoch in range(1, cfg.epochs + 1):
        plans = None
        if cfg.alpha > 0:
            plans = [sample_pairwise_plan(dataset, i, cfg.n, cfg.tau, rng_pa)
                     for i in range(m)]
        corruptions = None
        if cfg.beta > 0:
            corruptions = [corrupt_context(ev, ahin, clusters, rng_mu, cluster_index)
                           for ev in dataset.events]
        draws = sample_inter_draws(neighbor_sets, rng_in) if cfg.gamma > 0 else None

        order = rng_shuffle.permutation(m)
        pa_sum = mu_sum = in_sum = 0.0
        in_count = 0
        aborted = False
        for lo in range(0, m, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            cache = encode_all(ahin, params, cfg.activation)
            bp, bm, bi, bc = _batch_pass(dataset, batch, params, cache, cfg,
                                         plans, corruptions, draws, act, act_grad)
            pa_sum += bp
            mu_sum += bm
            in_sum += bi
            in_count += bc
            encode_backward(cache, ahin, params)
            try:
                adam_step(params, adam)
            except NonFiniteGradientError as exc:
                report.aborted = f"epoch {epoch}: {exc}"
                aborted = True
                break
        if aborted:
            params = snapshot
            break

        l_pa = float(pa_sum) / m
        l_mu = float(mu_sum) / m
        l_in = float(in_sum) / in_count if in_count else 0.0
        tot = total_loss(l_pa, l_mu, l_in, cfg)
        if not np.isfinite(tot):
            report.aborted = f"epoch {epoch}: non-finite loss {tot}"
            params = snapshot
            break
        report.epochs.append(EpochStats(tot, l_pa, l_mu, l_in))
        snapshot = params.copy()

        decay_now = cfg.decay_scope == "group" or (cfg.beta == 0 and cfg.gamma == 0)
        if epoch % 2 == 0 and decay_now and cfg.lr_decay != 1.0:
            adam.scale_group(pairwise_group(params), cfg.lr_decay)

    report.wall_clock = time.perf_counter() - start
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / CHECKPOINT_FILENAME
        params.save(ckpt)
        report.checkpoint_path = str(ckpt)
        write_report(report, out / REPORT_FILENAME)
    return params, report


def _batch_pass(dataset, batch, params, cache, cfg, plans, corruptions, draws,
                act, act_grad):
    """Forward and backward for one batch; returns raw per-module loss sums.

    Gradients are scaled by weight / batch-denominator so they match the
    batch-mean objective exactly.
    """
    ahin = dataset.ahin
    B = len(batch)
    pa_sum = mu_sum = in_sum = 0.0
    in_count = 0
    if plans is not None:
        scale = cfg.alpha / B
        for i in batch:
            pa_sum += pairwise_event_grad(plans[i], cache, scale)
    if corruptions is not None:
        scale = cfg.beta / B
        for i in batch:
            ev = dataset.events[i]
            corrupted = apply_corruptions(ev, corruptions[i])
            loss, _, _ = multivariate_event_grad(ev, corrupted, cache, params, scale)
            mu_sum += loss
    if draws is not None:
        participating = [int(i) for i in batch if draws[i] is not None]
        if participating:
            scale = cfg.gamma / len(participating)
            reps: dict = {}

            def rep_of(j):
                if j not in reps:
                    reps[j] = event_representation(dataset.events[j], cache, ahin,
                                                   params, act, act_grad)
                return reps[j]

            g_e = defaultdict(lambda: np.zeros(2 * cfg.d))
            for i in participating:
                p, q = draws[i]
                e_i, e_p, e_q = rep_of(i).e, rep_of(p).e, rep_of(q).e
                s = inter_event_score(e_i, e_p, params)
                s_neg = inter_event_score(e_i, e_q, params)
                in_sum -= _clamped_log(s) + _clamped_log(1.0 - s_neg)
                in_count += 1
                gp_pos = scale * (-_dlog(s)) * s * (1.0 - s)
                gp_neg = scale * _dlog(1.0 - s_neg) * s_neg * (1.0 - s_neg)
                if gp_pos != 0.0:
                    gi, gp = inter_pair_grad(e_i, e_p, params, gp_pos)
                    g_e[i] += gi
                    g_e[p] += gp
                if gp_neg != 0.0:
                    gi, gq = inter_pair_grad(e_i, e_q, params, gp_neg)
                    g_e[i] += gi
                    g_e[q] += gq
            for j, g in g_e.items():
                event_representation_backward(reps[j], g, cache, params, act_grad)
    return pa_sum, mu_sum, in_sum, in_count


def _spot_check(dataset, params, cfg, clusters, cluster_index, neighbor_sets,
                act, act_grad, rng) -> float:
    """Directional finite-difference check of the full batch gradient.

    Runs once before training on the first min(batch_size, m) events with
    throwaway sampling draws; returns the relative error between the analytic
    and central-difference directional derivatives.
    """
    ahin = dataset.ahin
    m = dataset.m
    batch = np.arange(min(cfg.batch_size, m))
    plans = None
    if cfg.alpha > 0:
        plans = {int(i): sample_pairwise_plan(dataset, int(i), cfg.n, cfg.tau, rng)
                 for i in batch}
    corruptions = None
    if cfg.beta > 0:
        corruptions = {int(i): corrupt_context(dataset.events[i], ahin, clusters,
                                               rng, cluster_index)
                       for i in batch}
    draws = sample_inter_draws(neighbor_sets, rng) if cfg.gamma > 0 else None

    def objective():
        cache = encode_all(ahin, params, cfg.activation)
        bp, bm, bi, bc = _batch_pass(dataset, batch, params, cache, cfg,
                                     plans, corruptions, draws, act, act_grad)
        encode_backward(cache, ahin, params)
        val = cfg.alpha * bp / batch.size + cfg.beta * bm / batch.size
        if bc:
            val += cfg.gamma * bi / bc
        return val

    params.zero_grads()
    objective()
    direction = {name: rng.normal(size=params[name].shape) for name in params.names()}
    norm = np.sqrt(sum(float((d * d).sum()) for d in direction.values()))
    for d in direction.values():
        d /= norm
    analytic = sum(float((params.grad(name) * direction[name]).sum())
                   for name in params.names())
    params.zero_grads()

    h = 1e-5
    shifted = []
    for sign in (+1.0, -1.0):
        for name in params.names():
            params[name][...] += sign * h * direction[name]
        shifted.append(objective())
        for name in params.names():
            params[name][...] -= sign * h * direction[name]
        params.zero_grads()
    numeric = (shifted[0] - shifted[1]) / (2.0 * h)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
