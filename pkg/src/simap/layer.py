"""The SIMAP classifier: softmax over sparse barycentric activations.

Weights are rows indexed by vertex id.  A model at level k+1 keeps a
reference to its level-k parent; any vertex it has not seen yet gets its row
by averaging the parent rows of the vertices it is the barycenter of, which
leaves the network's function unchanged at the moment of subdivision.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import DEFAULT_TOL, build_simplex
from .subdivision import (
    SparseActivation,
    VertexInterner,
    activation,
    key_from_str,
    key_level,
    key_to_str,
    locate,
    vertex_ambient_position,
)

MODEL_FORMAT = "simap-model"
MODEL_VERSION = 1


class MissingParentError(LookupError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 1000
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_mode: str = "per-sample"
    seed: int = 0
    init: str = "uniform"
    init_low: float = -0.5
    init_high: float = 0.5
    loss_threshold: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_mode not in ("per-sample", "full-batch"):
            raise ValueError(f"unknown batch mode {self.batch_mode!r}")
        if self.init not in ("zeros", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class Prediction:
    probs: np.ndarray
    label: int
    activation: SparseActivation


@dataclass
class MetricsRecord:
    level: int
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: Optional[float] = None
    test_acc: Optional[float] = None


class SimapModel:
    def __init__(self, n: int, classes: int, level: int = 0, parent: Optional["SimapModel"] = None):
        if classes < 1:
            raise ValueError("need at least one class")
        if parent is not None and (parent.level != level - 1 or parent.n != n or parent.classes != classes):
            raise ValueError("parent must be the level-(k-1) model of the same shape")
        self.n = n
        self.classes = classes
        self.level = level
        self.parent = parent
        self.simplex = build_simplex(n)
        self.interner = VertexInterner()
        self._rows = np.zeros((0, classes))

    @classmethod
    def initial(cls, n: int, classes: int, init: str = "uniform", seed=0, low=-0.5, high=0.5):
        model = cls(n, classes, level=0)
        for i in range(n + 1):
            model.interner.intern(i)
        if init == "zeros":
            model._rows = np.zeros((n + 1, classes))
        elif init == "uniform":
            rng = np.random.default_rng(seed)
            model._rows = rng.uniform(low, high, size=(n + 1, classes))
        else:
            raise ValueError(f"unknown init {init!r}")
        return model

    @property
    def weights(self) -> np.ndarray:
        return self._rows

    def row(self, vid: int) -> np.ndarray:
        return self._rows[vid]

    def row_for_key(self, key) -> np.ndarray:
        """Row of ``key``, transferred from the parent chain when not materialized here."""
        vid = self.interner.id_of(key)
        if vid is not None and vid < len(self._rows):
            return self._rows[vid]
        return transfer_weight(self, key)

    def set_row(self, key, values) -> int:
        vid = self.interner.intern(key)
        self.ensure_rows(fill=np.zeros(self.classes))
        self._rows[vid] = np.asarray(values, dtype=float)
        return vid

    def ensure_rows(self, fill=None) -> None:
        start = len(self._rows)
        if start == len(self.interner):
            return
        new = []
        for vid in range(start, len(self.interner)):
            key = self.interner.key_of(vid)
            if fill is not None and self.parent is None:
                new.append(np.array(fill, dtype=float))
            else:
                new.append(transfer_weight(self, key))
        self._rows = np.vstack([self._rows, np.array(new).reshape(-1, self.classes)])

    def activate(self, x, tol: float = DEFAULT_TOL) -> SparseActivation:
        act = activation(x, self.level, self.simplex, self.interner, tol)
        self.ensure_rows()
        return act

    def activate_many(self, points, tol: float = DEFAULT_TOL):
        """(ids, coefs) arrays of shape (N, n+1) for a batch of points."""
        points = np.asarray(points, dtype=float)
        ids = np.empty((len(points), self.n + 1), dtype=np.int64)
        coefs = np.empty((len(points), self.n + 1))
        for r, x in enumerate(points):
            act = activation(x, self.level, self.simplex, self.interner, tol)
            ids[r] = act.ids
            coefs[r] = act.coefs
        self.ensure_rows()
        return ids, coefs

    def subdivide(self) -> "SimapModel":
        """Fresh level-(k+1) model whose rows are transferred on demand from this one."""
        return SimapModel(self.n, self.classes, self.level + 1, parent=self)

    def predict_proba(self, points) -> np.ndarray:
        ids, coefs = self.activate_many(points)
        return batch_probs(self._rows, ids, coefs)

    def predict(self, points) -> np.ndarray:
        return np.argmax(self.predict_proba(points), axis=1)

    def chain(self) -> list:
        """Models from level 0 up to this one."""
        out, m = [], self
        while m is not None:
            out.append(m)
            m = m.parent
        return out[::-1]


def transfer_weight(model: SimapModel, key) -> np.ndarray:
    """Row for a level-(k+1) vertex: mean of the parent rows of its children."""
    if model.parent is None:
        raise MissingParentError(
            f"no parent model to resolve vertex {key_to_str(key)} at level {model.level}"
        )
    if key_level(key) != model.level:
        raise ValueError(f"vertex {key_to_str(key)} is not a level-{model.level} vertex")
    rows = [model.parent.row_for_key(child) for child in key]
    if len(rows) == 1:
        return np.array(rows[0], dtype=float)
    return np.mean(rows, axis=0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def batch_logits(W: np.ndarray, ids: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    # fixed accumulation order so single-point and batch paths agree bitwise
    logits = coefs[:, 0, None] * W[ids[:, 0]]
    for j in range(1, ids.shape[1]):
        logits = logits + coefs[:, j, None] * W[ids[:, j]]
    return logits


def batch_probs(W, ids, coefs) -> np.ndarray:
    return _softmax(batch_logits(W, ids, coefs))


def batch_losses(W, ids, coefs, labels) -> np.ndarray:
    logits = batch_logits(W, ids, coefs)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return lse - logits[np.arange(len(labels)), labels]


def batch_metrics(W, ids, coefs, labels) -> tuple:
    """(mean cross-entropy, accuracy); argmax ties go to the lowest class."""
    labels = np.asarray(labels)
    losses = batch_losses(W, ids, coefs, labels)
    pred = np.argmax(batch_logits(W, ids, coefs), axis=1)
    return float(np.mean(losses)), float(np.mean(pred == labels))


def forward(model: SimapModel, act: SparseActivation) -> Prediction:
    if act.level != model.level:
        raise ValueError(f"activation level {act.level} does not match model level {model.level}")
    model.ensure_rows()
    ids = np.array([act.ids], dtype=np.int64)
    coefs = np.array([act.coefs])
    probs = batch_probs(model.weights, ids, coefs)[0]
    return Prediction(probs, int(np.argmax(probs)), act)


def loss(pred: Prediction, onehot) -> float:
    onehot = np.asarray(onehot)
    if onehot.sum() != 1 or np.count_nonzero(onehot) != 1:
        raise ValueError("onehot must contain exactly one 1")
    return float(-np.log(pred.probs[int(np.argmax(onehot))]))


def gradient(model: SimapModel, act: SparseActivation, onehot) -> dict:
    """d loss / d weight[vertex, class] for the vertices of ``act``."""
    pred = forward(model, act)
    delta = pred.probs - np.asarray(onehot, dtype=float)
    return {
        (vid, j): float(delta[j] * c)
        for vid, c in zip(act.ids, act.coefs)
        for j in range(model.classes)
    }


def sgd_step(model: SimapModel, grads: dict, lr: float) -> SimapModel:
    for (vid, j), g in grads.items():
        model.weights[vid, j] -= lr * g
    return model


class AdamState:
    """Per-(vertex, class) moments, grown lazily with the model."""

    def __init__(self, classes: int):
        self.m = np.zeros((0, classes))
        self.v = np.zeros((0, classes))

    def grow(self, rows: int) -> None:
        if rows > len(self.m):
            pad = np.zeros((rows - len(self.m), self.m.shape[1]))
            self.m = np.vstack([self.m, pad])
            self.v = np.vstack([self.v, pad])


def adam_step(model: SimapModel, grads: dict, config: TrainConfig, step_count: int, state: AdamState) -> SimapModel:
    state.grow(len(model.weights))
    b1, b2 = config.beta1, config.beta2
    c1 = 1 - b1**step_count
    c2 = 1 - b2**step_count
    for (vid, j), g in grads.items():
        state.m[vid, j] = b1 * state.m[vid, j] + (1 - b1) * g
        state.v[vid, j] = b2 * state.v[vid, j] + (1 - b2) * g * g
        mhat = state.m[vid, j] / c1
        vhat = state.v[vid, j] / c2
        model.weights[vid, j] -= config.learning_rate * mhat / (math.sqrt(vhat) + config.eps)
    return model


class _Optimizer:
    """Array form of sgd_step / adam_step used by the training loop."""

    def __init__(self, config: TrainConfig, classes: int):
        self.config = config
        self.state = AdamState(classes)
        self.t = 0

    def apply(self, W: np.ndarray, rows, g: np.ndarray) -> None:
        cfg = self.config
        if cfg.optimizer == "sgd":
            W[rows] -= cfg.learning_rate * g
            return
        self.t += 1
        self.state.grow(len(W))
        m, v = self.state.m, self.state.v
        mr = cfg.beta1 * m[rows] + (1 - cfg.beta1) * g
        vr = cfg.beta2 * v[rows] + (1 - cfg.beta2) * g * g
        m[rows] = mr
        v[rows] = vr
        mhat = mr / (1 - cfg.beta1**self.t)
        vhat = vr / (1 - cfg.beta2**self.t)
        W[rows] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)


def _run_epoch(W, ids, coefs, onehots, opt: _Optimizer) -> None:
    if opt.config.batch_mode == "per-sample":
        for rows, c, y in zip(ids, coefs, onehots):
            logits = c @ W[rows]
            e = np.exp(logits - logits.max())
            opt.apply(W, rows, np.outer(c, e / e.sum() - y))
    else:
        delta = batch_probs(W, ids, coefs) - onehots
        grad = np.zeros_like(W)
        # np.add.at accumulates in dataset order
        np.add.at(grad, ids, coefs[:, :, None] * delta[:, None, :])
        grad /= len(ids)
        opt.apply(W, slice(None), grad)


def train_level(model: SimapModel, points, labels, config: TrainConfig, test=None, on_record=None) -> list:
    """Train ``model`` in place; returns one MetricsRecord per epoch (epoch 0 = before training)."""
    labels = np.asarray(labels, dtype=np.int64)
    onehots = np.eye(model.classes)[labels]
    ids, coefs = model.activate_many(points)
    test_arrays = None
    if test is not None:
        t_ids, t_coefs = model.activate_many(test[0])
        test_arrays = (t_ids, t_coefs, np.asarray(test[1], dtype=np.int64))
    opt = _Optimizer(config, model.classes)

    def record(epoch):
        tl, ta = batch_metrics(model.weights, ids, coefs, labels)
        rec = MetricsRecord(model.level, epoch, tl, ta)
        if test_arrays is not None and len(test_arrays[2]):
            rec.test_loss, rec.test_acc = batch_metrics(model.weights, *test_arrays)
        if on_record is not None:
            on_record(rec)
        return rec

    records = [record(0)]
    for epoch in range(1, config.epochs + 1):
        if config.loss_threshold is not None and records[-1].train_loss <= config.loss_threshold:
            break
        _run_epoch(model.weights, ids, coefs, onehots, opt)
        records.append(record(epoch))
    return records


def train(points, labels, levels: int, config: TrainConfig, classes: Optional[int] = None, test=None, on_record=None):
    """Train levels 0..levels, each initialized by transfer from the previous one.

    Returns (models, metrics).  ``points`` must already lie in the unit hypercube.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or len(points) != len(labels) or len(points) == 0:
        raise ValueError("need a nonempty (N, n) point array with N labels")
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if classes is None:
        classes = int(labels.max()) + 1
    model = SimapModel.initial(
        points.shape[1], classes, config.init, config.seed, config.init_low, config.init_high
    )
    models, metrics = [], []
    for level in range(levels + 1):
        if level > 0:
            model = model.subdivide()
        metrics.extend(train_level(model, points, labels, config, test, on_record))
        models.append(model)
    return models, metrics


def vc_dimension(n: int, k: int) -> int:
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    return math.factorial(n + 1) ** k * (n + 1)


def detect_unclassifiable(points, labels, level: int, simplex, interner: Optional[VertexInterner] = None) -> list:
    """Maximal simplices of Sd^level holding more than n+1 distinct labels.

    Returns (vertex-key tuple, distinct label count) pairs in first-seen order.
    """
    groups: dict = defaultdict(set)
    for x, y in zip(np.asarray(points, dtype=float), labels):
        keys, _ = locate(x, level, simplex)
        if interner is not None:
            for k in keys:
                interner.intern(k)
        groups[tuple(sorted(keys))].add(int(y))
    limit = simplex.dimension + 1
    return [(keys, len(ls)) for keys, ls in groups.items() if len(ls) > limit]


def explain(model: SimapModel, x) -> dict:
    act = model.activate(x)
    pred = forward(model, act)
    vertices = []
    for vid, c in zip(act.ids, act.coefs):
        key = model.interner.key_of(vid)
        vertices.append(
            {
                "key": key_to_str(key),
                "position": vertex_ambient_position(key, model.simplex).tolist(),
                "coefficient": c,
                "class_probs": _softmax(model.row(vid)).tolist(),
            }
        )
    return {
        "level": model.level,
        "point": np.asarray(x, dtype=float).tolist(),
        "vertices": vertices,
        "probs": pred.probs.tolist(),
        "label": pred.label,
    }


def model_to_dict(model: SimapModel) -> dict:
    return {
        "level": model.level,
        "vertices": [key_to_str(k) for k in model.interner.keys()],
        "weights": model.weights.tolist(),
        "parent": None if model.parent is None else model_to_dict(model.parent),
    }


def model_from_dict(data: dict, n: int, classes: int) -> SimapModel:
    parent = None if data["parent"] is None else model_from_dict(data["parent"], n, classes)
    model = SimapModel(n, classes, data["level"], parent)
    for text in data["vertices"]:
        model.interner.intern(key_from_str(text))
    rows = np.array(data["weights"], dtype=float).reshape(-1, classes)
    if len(rows) != len(model.interner):
        raise ValueError("weight table does not match vertex table")
    model._rows = rows
    return model


def save_model(model: SimapModel, path, meta: Optional[dict] = None) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n": model.n,
        "classes": model.classes,
        "model": model_to_dict(model),
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Returns (model, meta)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a SIMAP model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return model_from_dict(doc["model"], doc["n"], doc["classes"]), doc.get("meta", {})
