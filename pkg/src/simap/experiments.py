"""Repeated train/test runs summarized per subdivision level."""
from __future__ import annotations

import numpy as np

from .data import LabeledDataset, apply_normalizer, fit_normalizer, generate_classification, split
from .layer import TrainConfig, train


def final_records(metrics) -> dict:
    """Last MetricsRecord of each level."""
    out = {}
    for rec in metrics:
        out[rec.level] = rec
    return out


def run_split(dataset: LabeledDataset, levels: int, config: TrainConfig, train_fraction=0.8, seed=0):
    """Fit on a seeded split; returns (models, metrics, normalizer, train_set, test_set)."""
    tr, te = split(dataset, train_fraction, seed)
    norm = fit_normalizer(tr)
    x_tr, _ = apply_normalizer(norm, tr.points)
    x_te, _ = apply_normalizer(norm, te.points)
    models, metrics = train(x_tr, tr.labels, levels, config, dataset.classes, test=(x_te, te.labels))
    return models, metrics, norm, tr, te


def synthetic_table(features=(2, 3, 4, 5), seeds=range(5), levels=2, config: TrainConfig | None = None,
                    n_samples=500, class_sep=1.0):
    """Mean final (train_loss, test_loss, train_acc, test_acc) per (n, level).

    One dataset, split and initialization per seed.
    """
    config = config or TrainConfig()
    table = {}
    for n in features:
        per_seed = []
        for seed in seeds:
            ds = generate_classification(n_samples, n, class_sep, seed)
            cfg = TrainConfig(**{**config.__dict__, "seed": seed})
            _, metrics, *_ = run_split(ds, levels, cfg, 0.8, seed)
            fin = final_records(metrics)
            per_seed.append([[fin[k].train_loss, fin[k].test_loss, fin[k].train_acc, fin[k].test_acc]
                             for k in range(levels + 1)])
        mean = np.mean(per_seed, axis=0)
        for k in range(levels + 1):
            table[(n, k)] = tuple(float(v) for v in mean[k])
    return table


def format_table(table: dict) -> str:
    lines = ["n,subdivisions,train_loss,test_loss,train_acc,test_acc"]
    for (n, k), (trl, tel, tra, tea) in sorted(table.items()):
        lines.append(f"{n},{k},{trl:.2f},{tel:.2f},{tra:.2f},{tea:.2f}")
    return "\n".join(lines)
