"""Command-line front end.

Subcommands: train, evaluate, trace, demo-divergence, ablation.
Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backend
from .errors import AttopError, ValidationError
from .experiment import RunConfig, prepare_data, with_method, with_seed
from .metrics import (
    DEFAULT_QUANTILES,
    DEFAULT_RECALL_LEVELS,
    auc_at_quantile,
    build_report,
    precision_at_recall,
)
from .network import NetworkSpec, Weights, forward, load_weights, save_weights
from .objective import ObjectiveSpec, SurrogateSpec
from .pca import save_pca
from .thresholds import ThresholdRule
from .trainer import (
    OptimizerSpec,
    TrainConfig,
    threshold_trace_comparison,
    train,
    write_history_csv,
    write_trace_csv,
)
from .data import toy_divergence_dataset

OBJECTIVE_NOTE = (
    "note: the test-set objective reacts to single samples crossing the threshold "
    "and is not a model-selection signal; use AUC@quantile instead."
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


# --- config assembly -------------------------------------------------------

def _data_overrides(args, desc: dict) -> dict:
    desc = dict(desc)
    if getattr(args, "data", None):
        fmt = args.format or ("idx" if args.labels else "csv")
        if fmt == "csv":
            desc = {"kind": "csv", "path": args.data, "label_column": args.label_column,
                    "test_fraction": desc.get("test_fraction"), "split_seed": desc.get("split_seed", 0)}
            if args.threshold is not None:
                desc["threshold"] = args.threshold
        else:
            if not args.labels:
                raise ValidationError("--format idx needs --labels")
            desc = {"kind": "idx", "images": args.data, "labels": args.labels, "positive_class": 0}
        if args.test_data:
            key = "test_images" if fmt == "idx" else "test_path"
            desc[key] = args.test_data
            if fmt == "idx":
                if not args.test_labels:
                    raise ValidationError("--test-data in idx format needs --test-labels")
                desc["test_labels"] = args.test_labels
            desc.pop("test_fraction", None)
    if getattr(args, "positive_class", None) is not None:
        v = args.positive_class
        desc["positive_class"] = int(v) if v.lstrip("-").isdigit() else v
    if getattr(args, "pca", None):
        desc["pca_components"] = args.pca
    return desc


def _run_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig(NetworkSpec((2, 1)), TrainConfig())
    cfg = replace(cfg, data=_data_overrides(args, cfg.data))
    if getattr(args, "method", None):
        cfg = with_method(cfg, args.method)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def _check_dims(cfg: RunConfig, data):
    if data.train.d != cfg.network.input_dim:
        raise ValidationError("network input dim does not match data", network=cfg.network.input_dim,
                              data=data.train.d)


# --- subcommands -----------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg.data)
    _check_dims(cfg, data)

    timings = []
    last = [time.perf_counter()]

    def tick(epoch, _w):
        now = time.perf_counter()
        timings.append(now - last[0])
        last[0] = now

    result = train(data.train, cfg.network, cfg.train, test=data.test, on_epoch=tick)
    artifacts = {"weights": "weights.bin", "history": "history.csv"}
    save_weights(out / "weights.bin", result.weights)
    write_history_csv(out / "history.csv", result.history)
    if cfg.train.trace_thresholds:
        write_trace_csv(out / "trace.csv", result.trace)
        artifacts["trace"] = "trace.csv"
    if data.pca is not None:
        save_pca(out / "pca.bin", data.pca)
        artifacts["pca"] = "pca.bin"
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.train.seed,
        "backend": backend.NAME,
        "artifacts": artifacts,
        "dataset": {"name": data.train.name, "n": data.train.n, "n_pos": data.train.n_pos,
                    "test_n": data.test.n if data.test is not None else None},
        "epoch_seconds": timings,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    if data.test is not None:
        print(OBJECTIVE_NOTE)
    last_row = result.history[-1] if result.history else {}
    print(f"trained {cfg.train.method} for {cfg.train.epochs} epochs; "
          f"train objective {last_row.get('train_objective')}; outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    weights = load_weights(args.weights)
    cfg = replace(cfg, network=weights.spec)
    data = prepare_data(cfg.data)
    ds = {"train": data.train, "test": data.test}.get(args.split) or data.train
    if args.split == "test" and data.test is None:
        ds = data.train
    if ds.d != weights.spec.input_dim:
        raise ValidationError("weights do not match data dim", network=weights.spec.input_dim, data=ds.d)
    scores = forward(weights, ds.features)
    report = build_report(scores, ds.labels, args.recall_levels, args.quantiles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    with open(out / "metrics.json", "w") as fh:
        json.dump(d, fh, indent=2)
    _write_csv(out / "pr_curve.csv", ("recall", "precision"), report.pr_curve)
    header = "  ".join(f"{r:>6g}" for r, _ in report.precision_at_recall)
    row = "  ".join(f"{p:6.2f}" for _, p in report.precision_at_recall)
    print("precision at recall")
    print(header)
    print(row)
    for a, v in report.auc_at_quantile:
        print(f"AUC@quantile({a:g}) = {v:.2f}")
    return 0


def cmd_trace(args) -> int:
    cfg = _run_config(args)
    data = prepare_data(cfg.data)
    _check_dims(cfg, data)
    tcfg = replace(cfg.train, freeze_weights=bool(args.freeze))
    rows = threshold_trace_comparison(data.train, cfg.network, tcfg)
    cols = ("epoch", "step", "t_deeptoppush", "t_deeptoppush0", "t_true")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out, cols, ([r[c] for c in cols] for r in rows))
    print(f"wrote {len(rows)} trace rows to {args.out}")
    return 0


def run_divergence_demo(steps: int, lr: float, w1_start: float = 1.0, verbose=True):
    """Naive vs chain-rule gradient descent on the toy set.

    The scorer is linear in the first coordinate only (w = (w1, 0) held on
    that line), plus a bias. Returns ``(w1_naive, w_norm_chain, ok_naive, ok_chain)``.
    """
    toy = toy_divergence_dataset()
    ds = toy.with_features(toy.features[:, :1])
    spec = NetworkSpec((1, 1))
    w0 = Weights(spec, np.array([w1_start, 0.0]))
    hinge = ObjectiveSpec(0.0, 1.0, ThresholdRule("toppush"), SurrogateSpec("hinge"))
    base = TrainConfig(method="naive", objective=hinge, epochs=steps, minibatch_size=ds.n,
                       min_positives=ds.n_pos, optimizer=OptimizerSpec("sgd", lr))
    traj = []
    naive = train(ds, spec, base, initial_weights=w0,
                  on_epoch=lambda e, w: traj.append((e, float(w.flat[0]))))
    chain = train(ds, spec, replace(base, method="deeptoppush"), initial_weights=w0)
    w1 = float(naive.weights.flat[0])
    expected = w1_start + steps * lr / 2.0
    ok_naive = abs(w1 - expected) <= 1e-9
    norm0 = float(np.linalg.norm(w0.flat))
    norm_chain = float(np.linalg.norm(chain.weights.flat))
    ok_chain = norm_chain <= 10.0 * norm0
    if verbose:
        stride = max(1, steps // 10)
        print("naive gradient, w1 trajectory:")
        print(f"  step {0:6d}  w1 = {w1_start:.6f}")
        for e, v in traj:
            if e % stride == 0 or e == steps:
                print(f"  step {e:6d}  w1 = {v:.6f}")
        print(f"naive:  w1(T) = {w1!r}, expected {expected!r} -> {'ok' if ok_naive else 'MISMATCH'}")
        print(f"chain:  |w(T)| = {norm_chain:.6g} <= 10 * |w(0)| = {10 * norm0:.6g} -> "
              f"{'bounded' if ok_chain else 'UNBOUNDED'}")
    return w1, norm_chain, ok_naive, ok_chain


def cmd_demo_divergence(args) -> int:
    _, _, ok_naive, ok_chain = run_divergence_demo(args.steps, args.lr)
    return 0 if (ok_naive and ok_chain) else 2


def _summary(values):
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"min": v.min(), "q1": q1, "median": med, "q3": q3, "max": v.max(), "mean": v.mean()}


def run_ablation(cfg: RunConfig, seeds, methods=("deeptoppush", "deeptoppush0", "baseline"),
                 recall_levels=DEFAULT_RECALL_LEVELS, quantiles=DEFAULT_QUANTILES):
    """Train every method for every seed; one result row per (method, seed)."""
    data = prepare_data(cfg.data)
    _check_dims(cfg, data)
    evald = data.test if data.test is not None else data.train
    rows = []
    for method in methods:
        mcfg = with_method(cfg, method)
        for seed in seeds:
            res = train(data.train, mcfg.network, with_seed(mcfg, seed).train)
            s = forward(res.weights, evald.features)
            row = {"method": method, "seed": seed}
            for a in quantiles:
                row[f"auc_at_quantile_{a:g}"] = auc_at_quantile(s, evald.labels, a)
            for r in recall_levels:
                p = precision_at_recall(s, evald.labels, r)
                row[f"precision_at_recall_{r:g}"] = 100.0 * p
            rows.append(row)
    return rows


def cmd_ablation(args) -> int:
    cfg = _run_config(args)
    base_seed = cfg.train.seed
    seeds = [base_seed + i for i in range(args.seeds)]
    rows = run_ablation(cfg, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics = [k for k in rows[0] if k not in ("method", "seed")]
    _write_csv(out / "runs.csv", ["method", "seed"] + metrics, ([r[k] for k in ["method", "seed"] + metrics] for r in rows))
    box = []
    for method in dict.fromkeys(r["method"] for r in rows):
        for m in metrics:
            s = _summary([r[m] for r in rows if r["method"] == method])
            box.append([method, m] + [s[k] for k in ("min", "q1", "median", "q3", "max", "mean")])
    _write_csv(out / "summary.csv", ["method", "metric", "min", "q1", "median", "q3", "max", "mean"], box)
    print(f"{'method':<14}" + "".join(f"{m:>28}" for m in metrics[:3]))
    for method in dict.fromkeys(r["method"] for r in rows):
        means = [np.mean([r[m] for r in rows if r["method"] == method]) for m in metrics[:3]]
        print(f"{method:<14}" + "".join(f"{v:28.2f}" for v in means))
    return 0


# --- parser ----------------------------------------------------------------

def _add_shared(p, data=True):
    p.add_argument("--config", help="run config (JSON) or a manifest from a previous run")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    if data:
        p.add_argument("--data", help="CSV file, or IDX images file with --format idx")
        p.add_argument("--labels", help="IDX labels file")
        p.add_argument("--test-data")
        p.add_argument("--test-labels")
        p.add_argument("--format", choices=("csv", "idx"))
        p.add_argument("--positive-class")
        p.add_argument("--label-column", default="label")
        p.add_argument("--threshold", type=float, help="binarise a continuous label column at this cutoff")
        p.add_argument("--pca", type=int, help="reduce features to this many principal components")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write weights, manifest, history")
    _add_shared(p)
    p.add_argument("--method")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics report and PR curve for trained weights")
    _add_shared(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--recall-levels", type=_floats, default=DEFAULT_RECALL_LEVELS)
    p.add_argument("--quantiles", type=_floats, default=DEFAULT_QUANTILES)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace", help="per-step threshold estimates with and without the delayed sample")
    _add_shared(p)
    p.add_argument("--freeze", action="store_true", help="keep the initial weights fixed")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_trace, out="trace.csv")

    p = sub.add_parser("demo-divergence", help="fixed-threshold gradient diverges; chain rule does not")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.1)
    p.set_defaults(func=cmd_demo_divergence)

    p = sub.add_parser("ablation", help="deeptoppush vs deeptoppush0 vs baseline over seeds")
    _add_shared(p)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AttopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
