"""Command-line front end: ``simap train|evaluate|boundary|explain|census|table``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    LabeledDataset,
    NormalizationTransform,
    apply_normalizer,
    fit_normalizer,
    generate_classification,
    generate_xor,
    load_csv,
    split,
    write_csv,
)
from .experiments import final_records, format_table, synthetic_table
from .geometry import OutsideSimplexError
from .layer import (
    TrainConfig,
    batch_metrics,
    batch_probs,
    explain,
    load_model,
    save_model,
    train,
    vc_dimension,
)
from .subdivision import subdivision_census

METRICS_HEADER = ["level", "epoch", "train_loss", "train_acc", "test_loss", "test_acc"]


class CLIError(Exception):
    pass


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _add_source(p: argparse.ArgumentParser, required=True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--gen", choices=["xor", "synth"], help="synthetic dataset generator")
    p.add_argument("--label-column", default="label")
    p.add_argument("--features", type=int, default=2, help="synth: number of features")
    p.add_argument("--samples", type=int, default=500, help="synth: number of points")
    p.add_argument("--class-sep", type=float, default=1.0, help="synth: cluster separation")
    p.add_argument("--per-cluster", type=int, default=1, help="xor: points per anchor")
    p.add_argument("--noise", type=float, default=0.0, help="xor: jitter standard deviation")
    p.add_argument("--data-seed", type=int, default=None, help="generator seed (defaults to --seed)")


def _load_source(args, label_values=None) -> LabeledDataset:
    seed = args.data_seed if args.data_seed is not None else getattr(args, "seed", 0)
    if args.data:
        return load_csv(args.data, args.label_column, label_values)
    if args.gen == "xor":
        return generate_xor(args.per_cluster, args.noise, seed)
    return generate_classification(args.samples, args.features, args.class_sep, seed)


def _write_metrics(path: Path, metrics) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in metrics:
            w.writerow([r.level, r.epoch, _fmt(r.train_loss), _fmt(r.train_acc), _fmt(r.test_loss), _fmt(r.test_acc)])


def cmd_train(args) -> int:
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        optimizer=args.optimizer,
        batch_mode=args.batch,
        seed=args.seed,
        init=args.init,
        loss_threshold=args.loss_threshold,
    )
    if args.levels < 0:
        raise CLIError("--levels must be >= 0")
    dataset = _load_source(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.split is not None:
        train_set, test_set = split(dataset, args.split, args.seed)
    else:
        train_set, test_set = dataset, None
    norm = fit_normalizer(train_set)
    x_train, _ = apply_normalizer(norm, train_set.points)
    test = None
    if test_set is not None:
        x_test, _ = apply_normalizer(norm, test_set.points, clamp=True)
        test = (x_test, test_set.labels)

    models, metrics = train(x_train, train_set.labels, args.levels, config, dataset.classes, test=test)

    echo = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    with open(out / "config.txt", "w", encoding="utf-8") as fh:
        for k, v in echo.items():
            fh.write(f"{k} = {v}\n")
    with open(out / "normalizer.json", "w", encoding="utf-8") as fh:
        json.dump(norm.to_dict(), fh, indent=1)
    with open(out / "labels.json", "w", encoding="utf-8") as fh:
        json.dump({"label_column": args.label_column, "values": dataset.label_values}, fh)
    write_csv(train_set, out / "train.csv", args.label_column)
    if test_set is not None:
        write_csv(test_set, out / "test.csv", args.label_column)
    _write_metrics(out / "metrics.csv", metrics)
    meta = {
        "normalizer": norm.to_dict(),
        "label_values": dataset.label_values,
        "feature_names": dataset.feature_names,
        "label_column": args.label_column,
    }
    for model in models:
        save_model(model, out / f"model_level{model.level}.json", meta)

    fin = final_records(metrics)
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("subdivisions,train_loss,train_acc,test_loss,test_acc\n")
        for k in sorted(fin):
            r = fin[k]
            fh.write(f"{k},{_fmt(r.train_loss)},{_fmt(r.train_acc)},{_fmt(r.test_loss)},{_fmt(r.test_acc)}\n")
    for k in sorted(fin):
        r = fin[k]
        line = f"level {k}: train loss {r.train_loss:.4f} acc {r.train_acc:.4f}"
        if r.test_loss is not None:
            line += f" | test loss {r.test_loss:.4f} acc {r.test_acc:.4f}"
        print(line)
    return 0


def _prepare(model_path):
    model, meta = load_model(model_path)
    norm = NormalizationTransform.from_dict(meta["normalizer"]) if "normalizer" in meta else None
    return model, meta, norm


def cmd_evaluate(args) -> int:
    model, meta, norm = _prepare(args.model)
    if args.data:
        args.label_column = meta.get("label_column", args.label_column)
    dataset = _load_source(args, label_values=meta.get("label_values") if args.data else None)
    if dataset.dim != model.n:
        raise CLIError(f"model expects {model.n} features, dataset has {dataset.dim}")
    if dataset.classes > model.classes:
        raise CLIError(f"dataset has {dataset.classes} classes, model has {model.classes}")
    x = dataset.points
    flagged = np.zeros(len(x), dtype=bool)
    if norm is not None:
        x, flagged = apply_normalizer(norm, x, clamp=args.clamp)
    try:
        ids, coefs = model.activate_many(x)
    except OutsideSimplexError as exc:
        raise CLIError(f"{int(flagged.sum())} point(s) outside the simplex with --clamp off: {exc}") from None
    test_loss, test_acc = batch_metrics(model.weights, ids, coefs, dataset.labels)
    if args.predictions:
        probs = batch_probs(model.weights, ids, coefs)
        values = meta.get("label_values") or list(range(model.classes))
        with open(args.predictions, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["predicted_label"] + [f"p{v}" for v in values])
            for row in probs:
                w.writerow([values[int(np.argmax(row))]] + [repr(float(v)) for v in row])
    result = {"level": model.level, "n_points": len(dataset), "out_of_range": int(flagged.sum()),
              "test_loss": test_loss, "test_acc": test_acc}
    print(f"level {model.level}: loss {test_loss!r} acc {test_acc!r} ({len(dataset)} points, "
          f"{int(flagged.sum())} out of range)")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=1)
            fh.write("\n")
    return 0


def cmd_boundary(args) -> int:
    model, meta, norm = _prepare(args.model)
    if model.n != 2:
        raise CLIError(f"boundary export needs a 2-feature model, got n={model.n}")
    if args.resolution < 2:
        raise CLIError("--resolution must be >= 2")
    ticks = np.linspace(0.0, 1.0, args.resolution)
    gy, gx = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    ids, coefs = model.activate_many(grid)
    probs = batch_probs(model.weights, ids, coefs)
    labels = np.argmax(probs, axis=1)
    values = meta.get("label_values") or list(range(model.classes))
    coords = norm.inverse(grid) if (args.raw_axes and norm is not None) else grid
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "predicted_label", "max_prob"])
        for (px, py), lab, p in zip(coords, labels, probs):
            w.writerow([repr(float(px)), repr(float(py)), values[lab], repr(float(p[lab]))])
    print(f"wrote {len(grid)} grid points to {args.out}")
    return 0


def cmd_explain(args) -> int:
    model, meta, norm = _prepare(args.model)
    point = np.array([float(v) for v in args.point.split(",")])
    if len(point) != model.n:
        raise CLIError(f"point has {len(point)} coordinates, model expects {model.n}")
    x = point
    if norm is not None and not args.normalized:
        xs, flagged = apply_normalizer(norm, point[None, :], clamp=args.clamp)
        x = xs[0]
        if flagged[0] and not args.clamp:
            raise CLIError(f"point {args.point} lies outside the training domain (--clamp off)")
    try:
        report = explain(model, x)
    except OutsideSimplexError as exc:
        raise CLIError(str(exc)) from None
    values = meta.get("label_values") or list(range(model.classes))
    report["predicted_label"] = values[report["label"]]
    if args.json:
        print(json.dumps(report, indent=1))
        return 0
    print(f"level {report['level']} point {report['point']}")
    for v in report["vertices"]:
        probs = ", ".join(f"{p:.3f}" for p in v["class_probs"])
        print(f"  {v['key']:<30} at {np.round(v['position'], 4).tolist()}  coef {v['coefficient']:.4f}  classes [{probs}]")
    print(f"prediction {report['predicted_label']} probs {[round(p, 4) for p in report['probs']]}")
    return 0


def cmd_census(args) -> int:
    simplices, verts = subdivision_census(args.n, args.k)
    print(f"maximal simplices: {simplices}")
    print(f"vertices of Sd^1: {verts}")
    print(f"VC dimension: {vc_dimension(args.n, args.k)}")
    return 0


def cmd_table(args) -> int:
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, optimizer=args.optimizer,
                         batch_mode=args.batch)
    table = synthetic_table(args.features, range(args.seeds), args.levels, config, args.samples)
    print(format_table(table))
    return 0


def _add_train_opts(p) -> None:
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p.add_argument("--batch", choices=["per-sample", "full-batch"], default="per-sample")
    p.add_argument("--levels", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train levels 0..L and write a run directory")
    _add_source(p)
    _add_train_opts(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["uniform", "zeros"], default="uniform")
    p.add_argument("--split", type=float, default=None, help="train fraction; the rest is held out")
    p.add_argument("--loss-threshold", type=float, default=None, help="stop a level once train loss reaches this")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="loss and accuracy of a model on a dataset")
    p.add_argument("--model", required=True)
    _add_source(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clamp", type=_on_off, default=True)
    p.add_argument("--out", default=None, help="write metrics JSON here")
    p.add_argument("--predictions", default=None, help="write per-point class probabilities (CSV) here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("boundary", help="export a decision grid over [0,1]^2")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--raw-axes", action="store_true", help="write lattice coordinates in original units")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("explain", help="show the simplex, vertices and weights behind one prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--point", required=True, help="comma-separated coordinates")
    p.add_argument("--normalized", action="store_true", help="point is already in [0,1]^n")
    p.add_argument("--clamp", type=_on_off, default=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("census", help="simplex counts and VC dimension")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("table", help="synthetic train/test table averaged over seeds")
    _add_train_opts(p)
    p.set_defaults(batch="full-batch")
    p.add_argument("--features", type=int, nargs="+", default=[2, 3, 4, 5])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, DataError, OSError, ValueError) as exc:
        print(f"simap {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
