"""Command-line pipeline: generate, inject, train, score, eval, sweep.

Every command writes a run manifest (resolved config, seeds, input and output
content hashes, timings) into its output directory, so any artifact can be
reproduced by rerunning the recorded command.  Exit codes: 0 success, 2
invalid input or config, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import (
    DatasetError,
    EVENTS_FILENAME,
    NODES_FILENAME,
    load_dataset_dir,
    save_dataset,
)
from .detection import (
    ScoreVariant,
    average_precision,
    f1_optimal_threshold,
    read_scores,
    roc_auc,
    score_events,
    write_scores,
)
from .injection import (
    SYNTH_PRESETS,
    InjectionConfig,
    SynthConfig,
    generate_synthetic,
    inject_anomalies,
    synth_preset,
    write_manifest as write_injection_manifest,
)
from .numerics import ParameterStore
from .training import (
    CHECKPOINT_FILENAME,
    REPORT_FILENAME,
    WEIGHT_PRESETS,
    TrainConfig,
    load_config,
    save_config,
    train,
)

SWEEP_KNOBS = ("alpha", "beta", "gamma", "n")


@dataclasses.dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seeds: dict
    inputs: dict
    outputs: dict
    started: str
    elapsed_s: float


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit_manifest(out_dir: Path, command: str, argv, config: dict, seeds: dict,
                   inputs: list, outputs: list, started: str, t0: float) -> Path:
    manifest = RunManifest(
        command=command,
        argv=[str(a) for a in argv],
        config=config,
        seeds=seeds,
        inputs={str(p): _sha256(Path(p)) for p in inputs},
        outputs={str(p): _sha256(Path(p)) for p in outputs},
        started=started,
        elapsed_s=round(time.perf_counter() - t0, 3),
    )
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(dataclasses.asdict(manifest), indent=1) + "\n")
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# config assembly


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("--weights expects three comma-separated numbers a,b,g")
    return tuple(float(p) for p in parts)


def _train_config_from_args(args) -> TrainConfig:
    overrides: dict = {}
    if getattr(args, "preset", None):
        if args.preset not in WEIGHT_PRESETS:
            raise ValueError(f"unknown weight preset {args.preset!r}; "
                             f"choose from {sorted(WEIGHT_PRESETS)}")
        overrides.update(zip(("alpha", "beta", "gamma"), WEIGHT_PRESETS[args.preset]))
    if getattr(args, "weights", None):
        overrides.update(zip(("alpha", "beta", "gamma"), _parse_weights(args.weights)))
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            overrides[f.name] = v
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    return TrainConfig(**overrides)


def _add_train_config_flags(parser: argparse.ArgumentParser) -> None:
    # one flag per config key; unset flags fall back to file values, then defaults
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(TrainConfig(), f.name)
        if isinstance(default, bool):
            parser.add_argument(flag, dest=f.name, type=_parse_bool, default=None,
                                metavar="{true,false}")
        else:
            parser.add_argument(flag, dest=f.name, type=type(default), default=None)


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_variant(text: str | None) -> ScoreVariant:
    if not text:
        return ScoreVariant()
    parts = text.split(",")
    if len(parts) == 1:
        return ScoreVariant(pairwise_mode=parts[0])
    if len(parts) == 2:
        return ScoreVariant(pairwise_mode=parts[0], bilinear_mode=parts[1])
    raise ValueError("--variant expects 'pairwise_mode[,bilinear_mode]'")


SYNTH_SCALAR_KEYS = {
    "center_type": str, "m": int, "mean_context_size": float, "feature_width": int,
    "communities": int, "noise_scale": float, "community_bias": float, "seed": int,
}


def load_synth_config(path) -> SynthConfig:
    """Flat key=value synthetic-generator config; node counts via count_<type> keys."""
    values: dict = {}
    counts: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key.startswith("count_"):
            counts[key[len("count_"):]] = int(raw)
        elif key in SYNTH_SCALAR_KEYS:
            values[key] = SYNTH_SCALAR_KEYS[key](raw)
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    if not counts:
        raise ValueError(f"{path}: no count_<type> entries")
    return SynthConfig(node_counts=counts, **values)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    if args.preset:
        cfg = synth_preset(args.preset, seed=args.seed)
    elif args.config:
        cfg = load_synth_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
    else:
        raise ValueError("generate needs --preset or --config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(cfg)
    written = save_dataset(dataset, out)
    _emit_manifest(out, "generate", sys.argv[1:], dataclasses.asdict(cfg),
                   {"seed": cfg.seed}, [], written, started, t0)
    print(f"generated {dataset.m} events over {dataset.ahin.n_nodes} nodes -> {out}")
    return 0


def cmd_inject(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    cfg = InjectionConfig(
        anomaly_fraction=args.fraction,
        k_candidates=args.k_candidates,
        seed=args.seed if args.seed is not None else 0,
        strategy=args.strategy,
    )
    data_dir = Path(args.data)
    dataset = load_dataset_dir(data_dir)
    result = inject_anomalies(dataset, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = save_dataset(result.dataset, out)
    inj_path = out / "injection_manifest.json"
    write_injection_manifest(result.manifest, inj_path)
    written.append(inj_path)
    inputs = [data_dir / name for name in (NODES_FILENAME, EVENTS_FILENAME)]
    _emit_manifest(out, "inject", sys.argv[1:], dataclasses.asdict(cfg),
                   {"seed": cfg.seed}, inputs, written, started, t0)
    n_pos = int(result.dataset.labels.sum())
    print(f"injected {n_pos} anomalies into {dataset.m} events -> {out}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    cfg = _train_config_from_args(args)
    data_dir = Path(args.data)
    dataset = load_dataset_dir(data_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, report = train(dataset, cfg, out_dir=out)
    save_config(cfg, out / "train_config.txt")
    outputs = [out / CHECKPOINT_FILENAME, out / REPORT_FILENAME, out / "train_config.txt"]
    inputs = [data_dir / name for name in (NODES_FILENAME, EVENTS_FILENAME)]
    _emit_manifest(out, "train", sys.argv[1:], dataclasses.asdict(cfg),
                   {"seed": cfg.seed}, inputs, outputs, started, t0)
    last = report.epochs[-1].total if report.epochs else float("nan")
    status = f"aborted ({report.aborted})" if report.aborted else "done"
    print(f"train {status}: {len(report.epochs)} epochs, final loss {last:.6f}, "
          f"checkpoint {report.checkpoint_path}")
    return 0


def cmd_score(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    cfg = _train_config_from_args(args)
    variant = _parse_variant(args.variant)
    weights = _parse_weights(args.weights) if args.weights else None
    dataset = load_dataset_dir(Path(args.data))
    params = ParameterStore.load(args.checkpoint)
    report = score_events(dataset, params, cfg, variant=variant, weights=weights,
                          seed=cfg.seed, checkpoint_id=str(args.checkpoint),
                          threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scores_path = out / "scores.tsv"
    write_scores(report, scores_path)
    _emit_manifest(out, "score", sys.argv[1:],
                   {**dataclasses.asdict(cfg),
                    "variant": f"{variant.pairwise_mode},{variant.bilinear_mode}",
                    "weights": list(report.weights)},
                   {"seed": cfg.seed}, [Path(args.checkpoint)], [scores_path],
                   started, t0)
    top = int(np.argmin(report.rank))
    print(f"scored {dataset.m} events -> {scores_path} "
          f"(top event {report.event_ids[top]}, total {report.total[top]:.4f})")
    return 0


def cmd_eval(args) -> int:
    report = read_scores(args.scores)
    dataset = load_dataset_dir(Path(args.data))
    if dataset.labels is None:
        raise ValueError("eval requires a labeled dataset (labels.tsv missing)")
    label_of = {ev.event_id: int(lab) for ev, lab in zip(dataset.events, dataset.labels)}
    try:
        labels = np.array([label_of[eid] for eid in report.event_ids])
    except KeyError as exc:
        raise ValueError(f"score file references unknown event id {exc.args[0]}")
    ap = average_precision(report.total, labels)
    auc = roc_auc(report.total, labels)
    thr, f1 = f1_optimal_threshold(report.total, labels)
    lines = [
        f"events={labels.size}",
        f"positives={int(labels.sum())}",
        f"ap={ap!r}",
        f"auc={auc!r}",
        f"f1={f1!r}",
        f"f1_threshold={thr!r}",
    ]
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    base = _train_config_from_args(args)
    if args.knob not in SWEEP_KNOBS:
        raise ValueError(f"sweep knob must be one of {SWEEP_KNOBS}")
    raw = [v for v in args.values.split(",") if v.strip()]
    if not raw:
        raise ValueError("empty sweep grid")
    cast = int if args.knob == "n" else float
    grid = [cast(v) for v in raw]
    dataset = load_dataset_dir(Path(args.data))
    if dataset.labels is None:
        raise ValueError("sweep requires a labeled dataset (labels.tsv missing)")
    variant = _parse_variant(args.variant)

    rows = ["knob\tvalue\tap\tauc"]
    for value in grid:
        cfg = base.with_updates(**{args.knob: value})
        params, _ = train(dataset, cfg)
        report = score_events(dataset, params, cfg, variant=variant, seed=cfg.seed,
                              threads=args.threads)
        ap = average_precision(report.total, dataset.labels)
        auc = roc_auc(report.total, dataset.labels)
        rows.append(f"{args.knob}\t{value}\t{ap!r}\t{auc!r}")
        print(rows[-1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "sweep.tsv"
    table_path.write_text("\n".join(rows) + "\n")
    _emit_manifest(out, "sweep", sys.argv[1:],
                   {**dataclasses.asdict(base), "knob": args.knob,
                    "values": grid},
                   {"seed": base.seed}, [], [table_path], started, t0)
    print(f"wrote {table_path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evad",
        description="Abnormal event detection in attributed heterogeneous networks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic event dataset")
    g.add_argument("--preset", choices=sorted(SYNTH_PRESETS), default=None)
    g.add_argument("--config", type=Path, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("inject", help="plant labeled anomalies into a dataset")
    i.add_argument("--data", type=Path, required=True)
    i.add_argument("--fraction", type=float, default=0.05)
    i.add_argument("--k-candidates", type=int, default=50)
    i.add_argument("--strategy", choices=("feature_distant", "uniform"),
                   default="feature_distant")
    i.add_argument("--seed", type=int, default=None)
    i.add_argument("--out", type=Path, required=True)
    i.set_defaults(func=cmd_inject)

    t = sub.add_parser("train", help="train the joint model")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--config", type=Path, default=None)
    t.add_argument("--preset", default=None,
                   help="weight preset: " + "/".join(sorted(WEIGHT_PRESETS)))
    t.add_argument("--weights", default=None, metavar="a,b,g")
    t.add_argument("--threads", type=int, default=1,
                   help="accepted for interface parity; training runs "
                        "single-threaded so checkpoints stay bit-reproducible")
    t.add_argument("--out", type=Path, required=True)
    _add_train_config_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score events under a trained checkpoint")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--config", type=Path, default=None)
    s.add_argument("--preset", default=None)
    s.add_argument("--weights", default=None, metavar="a,b,g")
    s.add_argument("--variant", default=None, metavar="pairwise[,bilinear]")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", type=Path, required=True)
    _add_train_config_flags(s)
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="ranking metrics for a score report")
    e.add_argument("--scores", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--out", type=Path, default=None)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="grid over one knob, reporting AP/AUC")
    w.add_argument("--data", type=Path, required=True)
    w.add_argument("--config", type=Path, default=None)
    w.add_argument("--preset", default=None)
    w.add_argument("--weights", default=None, metavar="a,b,g")
    w.add_argument("--knob", required=True, choices=SWEEP_KNOBS)
    w.add_argument("--values", required=True, metavar="v1,v2,...")
    w.add_argument("--variant", default=None, metavar="pairwise[,bilinear]")
    w.add_argument("--threads", type=int, default=1)
    w.add_argument("--out", type=Path, required=True)
    _add_train_config_flags(w)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything else is a runtime failure, exit 3
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
