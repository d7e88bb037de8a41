"""Classification head, training loop, metrics, and the k-grid search.

The head maps a feature vector through d -> 512 -> 256 -> |Y| with ReLU
between the linear layers and a softmax output. Without the nonlinearities
the three maps would collapse into one and the stated widths would be
meaningless, so ReLU is inserted deliberately. Training is minibatch
adaptive-moment gradient descent on mean cross-entropy with early stopping
on validation macro-F1.

Overall precision/recall/F1 are support-weighted; weighted recall is then
identical to accuracy (the trace of the confusion matrix over its total),
which doubles as a metrics self-test. Macro-F1 is reported alongside.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import (Config, Dataset, SeededRng, STREAM_TUNE, ValidationError,
                   config_hash, order_labels, result_config)
from .features import FeatureScaler

HIDDEN_1 = 512
HIDDEN_2 = 256
PROB_FLOOR = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class HeadParams:
    """Weights and biases of the three linear layers."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            a = getattr(self, name)
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"non-finite entries in {name}")
        if self.w1.shape[1] != HIDDEN_1 or self.w2.shape != (HIDDEN_1, HIDDEN_2):
            raise ValidationError("hidden layer shapes must be d x 512 and 512 x 256")
        if self.w3.shape[0] != HIDDEN_2:
            raise ValidationError("output layer must map from 256 units")

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w3.shape[1]

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "HeadParams":
        return cls(**{name: np.asarray(d[name], dtype=np.float64) for name in PARAM_NAMES})


def init_params(d: int, n_classes: int, rng: SeededRng) -> HeadParams:
    """Scaled-uniform fan-in initialization; biases start at zero."""
    gen = rng.generator()

    def uniform(fan_in: int, shape: tuple[int, int]) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return gen.uniform(-bound, bound, size=shape)

    return HeadParams(
        w1=uniform(d, (d, HIDDEN_1)), b1=np.zeros(HIDDEN_1),
        w2=uniform(HIDDEN_1, (HIDDEN_1, HIDDEN_2)), b2=np.zeros(HIDDEN_2),
        w3=uniform(HIDDEN_2, (HIDDEN_2, n_classes)), b3=np.zeros(n_classes),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(params, z: np.ndarray):
    """Batch forward pass keeping pre-activations for backprop.

    ``params`` may be a HeadParams or a plain {name: array} dict (the
    mutable form used inside the optimizer loop).
    """
    get = params.__getitem__ if isinstance(params, dict) else lambda n: getattr(params, n)
    l1 = z @ get("w1") + get("b1")
    a1 = np.maximum(l1, 0.0)
    l2 = a1 @ get("w2") + get("b2")
    a2 = np.maximum(l2, 0.0)
    l3 = a2 @ get("w3") + get("b3")
    probs = _softmax(l3)
    return probs, (z, l1, a1, l2, a2, get)


def forward_batch(params, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValidationError("non-finite feature input")
    probs, _ = _forward_cache(params, z)
    return probs


def forward(params, z: np.ndarray) -> np.ndarray:
    """Class probabilities for a single feature vector."""
    return forward_batch(params, np.asarray(z, dtype=np.float64)[None, :])[0]


def loss(probs: np.ndarray, label_index: int) -> float:
    """Cross-entropy of one prediction, probabilities floored at 1e-12."""
    return float(-np.log(max(float(probs[label_index]), PROB_FLOOR)))


def batch_loss(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.maximum(probs[np.arange(len(y)), y], PROB_FLOOR)
    return float(-np.log(picked).mean())


def _backward(probs: np.ndarray, cache, y: np.ndarray) -> dict:
    a0, l1, a1, l2, a2, get = cache
    b = len(y)
    dl3 = probs.copy()
    dl3[np.arange(b), y] -= 1.0
    dl3 /= b
    da2 = dl3 @ get("w3").T
    dl2 = da2 * (l2 > 0.0)
    da1 = dl2 @ get("w2").T
    dl1 = da1 * (l1 > 0.0)
    return {
        "w3": a2.T @ dl3, "b3": dl3.sum(axis=0),
        "w2": a1.T @ dl2, "b2": dl2.sum(axis=0),
        "w1": a0.T @ dl1, "b1": dl1.sum(axis=0),
    }


def gradients(params, z: np.ndarray, y: np.ndarray) -> dict:
    """Analytic gradients of mean cross-entropy over the batch."""
    z = np.asarray(z, dtype=np.float64)
    probs, cache = _forward_cache(params, z)
    return _backward(probs, cache, y)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelCheckpoint:
    """Everything needed to score new data and reproduce the training run."""

    params: HeadParams
    classes: tuple[str, ...]
    scaler: FeatureScaler | None
    config: Config
    pool_path: str | None
    history: tuple[dict, ...]
    best_epoch: int
    best_val_macro_f1: float

    def to_dict(self) -> dict:
        return {
            "weights": self.params.to_dict(),
            "classes": list(self.classes),
            "scaler": self.scaler.to_dict() if self.scaler is not None else None,
            "config": result_config(self.config),
            "config_hash": config_hash(self.config),
            "pool_path": self.pool_path,
            "history": list(self.history),
            "best_epoch": self.best_epoch,
            "best_val_macro_f1": self.best_val_macro_f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelCheckpoint":
        return cls(
            params=HeadParams.from_dict(d["weights"]),
            classes=tuple(d["classes"]),
            scaler=FeatureScaler.from_dict(d["scaler"]) if d.get("scaler") else None,
            config=Config.from_dict(d["config"]),
            pool_path=d.get("pool_path"),
            history=tuple(d.get("history", [])),
            best_epoch=int(d.get("best_epoch", 0)),
            best_val_macro_f1=float(d.get("best_val_macro_f1", 0.0)),
        )


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    with open(path, "w") as fh:
        json.dump(ckpt.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path) as fh:
        return ModelCheckpoint.from_dict(json.load(fh))


def _adam_step(params: dict, grads: dict, m: dict, v: dict, t: int, lr: float) -> None:
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name in PARAM_NAMES:
        g = grads[name]
        m[name] = ADAM_BETA1 * m[name] + (1.0 - ADAM_BETA1) * g
        v[name] = ADAM_BETA2 * v[name] + (1.0 - ADAM_BETA2) * g * g
        params[name] -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + ADAM_EPS)


def train(train_z: np.ndarray, train_labels: list[str],
          val_z: np.ndarray, val_labels: list[str],
          config: Config, rng: SeededRng, *,
          classes: tuple[str, ...] | None = None,
          scaler: FeatureScaler | None = None,
          pool_path: str | None = None) -> ModelCheckpoint:
    """Fit the head on (already standardized) features.

    Stops early when validation macro-F1 has not improved for
    ``config.patience`` epochs and returns the best-validation parameters.
    """
    train_z = np.asarray(train_z, dtype=np.float64)
    val_z = np.asarray(val_z, dtype=np.float64)
    if train_z.ndim != 2 or len(train_z) == 0 or len(val_z) == 0:
        raise ValidationError("both splits must be non-empty feature matrices")
    if train_z.shape[1] != val_z.shape[1]:
        raise ValidationError("train and validation feature dimensions differ")
    if classes is None:
        classes = order_labels(train_labels)
    index = {lab: i for i, lab in enumerate(classes)}
    try:
        y_tr = np.array([index[lab] for lab in train_labels])
        y_va = np.array([index[lab] for lab in val_labels])
    except KeyError as exc:
        raise ValidationError(f"label outside the class set: {exc}") from exc

    init = init_params(train_z.shape[1], len(classes), rng.derive(0))
    params = {name: getattr(init, name).copy() for name in PARAM_NAMES}
    shuffle_gen = rng.derive(1).generator()
    m = {name: np.zeros_like(params[name]) for name in PARAM_NAMES}
    v = {name: np.zeros_like(params[name]) for name in PARAM_NAMES}

    best = {name: params[name].copy() for name in PARAM_NAMES}
    best_f1 = -1.0
    best_epoch = 0
    stale = 0
    t = 0
    history: list[dict] = []
    n = len(train_z)
    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_gen.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            zb, yb = train_z[idx], y_tr[idx]
            probs, cache = _forward_cache(params, zb)
            batch = batch_loss(probs, yb)
            if not math.isfinite(batch):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}; "
                    "lower the learning rate or check the features for blowups"
                )
            loss_sum += batch * len(yb)
            grads = _backward(probs, cache, yb)
            t += 1
            _adam_step(params, grads, m, v, t, config.learning_rate)
        val_pred = np.argmax(forward_batch(params, val_z), axis=1)
        val_f1 = compute_metrics(y_va, val_pred, classes).macro_f1
        history.append({"epoch": epoch, "train_loss": loss_sum / n,
                        "val_macro_f1": val_f1})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best = {name: params[name].copy() for name in PARAM_NAMES}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    final = HeadParams(**{name: best[name] for name in PARAM_NAMES})
    return ModelCheckpoint(params=final, classes=classes, scaler=scaler,
                           config=config, pool_path=pool_path,
                           history=tuple(history), best_epoch=best_epoch,
                           best_val_macro_f1=max(best_f1, 0.0))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    per_class_precision: dict
    per_class_recall: dict
    per_class_f1: dict
    support: dict
    precision: float
    recall: float
    f1: float
    macro_f1: float
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": [[int(c) for c in row] for row in self.confusion],
            "per_class_precision": dict(self.per_class_precision),
            "per_class_recall": dict(self.per_class_recall),
            "per_class_f1": dict(self.per_class_f1),
            "support": {k: int(v) for k, v in self.support.items()},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(classes=tuple(d["classes"]),
                   confusion=np.asarray(d["confusion"], dtype=np.int64),
                   per_class_precision=dict(d["per_class_precision"]),
                   per_class_recall=dict(d["per_class_recall"]),
                   per_class_f1=dict(d["per_class_f1"]),
                   support={k: int(v) for k, v in d["support"].items()},
                   precision=float(d["precision"]), recall=float(d["recall"]),
                   f1=float(d["f1"]), macro_f1=float(d["macro_f1"]),
                   accuracy=float(d["accuracy"]))


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray,
                    classes: tuple[str, ...]) -> EvalReport:
    """Confusion-matrix metrics; zero-denominator cases score 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValidationError("prediction/label length mismatch")
    c = len(classes)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    total = confusion.sum()
    diag = np.diag(confusion).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)   # support per true class
    col = confusion.sum(axis=0).astype(np.float64)   # predictions per class
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(col > 0, diag / col, 0.0)
        rec = np.where(row > 0, diag / row, 0.0)
        denom = prec + rec
        f1 = np.where(denom > 0, 2.0 * prec * rec / np.where(denom > 0, denom, 1.0), 0.0)
    weights = row / total if total else np.zeros(c)
    # Support weights cancel for recall: sum_c (n_c/N)(tp_c/n_c) = sum_c tp_c / N,
    # so the weighted recall is evaluated in that form and equals accuracy
    # exactly, not merely to rounding.
    accuracy = float(diag.sum() / total) if total else 0.0
    return EvalReport(
        classes=classes,
        confusion=confusion,
        per_class_precision={lab: float(p) for lab, p in zip(classes, prec)},
        per_class_recall={lab: float(r) for lab, r in zip(classes, rec)},
        per_class_f1={lab: float(v) for lab, v in zip(classes, f1)},
        support={lab: int(s) for lab, s in zip(classes, row)},
        precision=float(np.dot(weights, prec)),
        recall=accuracy,
        f1=float(np.dot(weights, f1)),
        macro_f1=float(f1.mean()) if c else 0.0,
        accuracy=accuracy,
    )


def evaluate(params: HeadParams, z: np.ndarray, labels: list[str],
             classes: tuple[str, ...]) -> EvalReport:
    """Argmax predictions on standardized features, scored per class."""
    index = {lab: i for i, lab in enumerate(classes)}
    try:
        y_true = np.array([index[lab] for lab in labels])
    except KeyError as exc:
        raise ValidationError(f"label outside the class set: {exc}") from exc
    y_pred = np.argmax(forward_batch(params, z), axis=1)
    return compute_metrics(y_true, y_pred, classes)


def evaluate_checkpoint(ckpt: ModelCheckpoint, z_raw: np.ndarray,
                        labels: list[str]) -> EvalReport:
    """Evaluate on raw features, applying the checkpoint's scaler first."""
    from .features import apply_scaler
    z = apply_scaler(z_raw, ckpt.scaler) if ckpt.scaler is not None else z_raw
    return evaluate(ckpt.params, z, labels, ckpt.classes)


# ---------------------------------------------------------------------------
# k-grid search
# ---------------------------------------------------------------------------

def k_grid(t: int) -> list[int]:
    """Ten evenly spaced candidate k values from 3 to floor(0.1 * t),
    rounded half-up and deduplicated preserving order."""
    if t < 30:
        raise ValidationError(f"series length {t} too short for a k grid (need >= 30)")
    hi = math.floor(0.1 * t)
    grid: list[int] = []
    for x in np.linspace(3.0, float(hi), 10):
        k = int(math.floor(x + 0.5))
        if k not in grid:
            grid.append(k)
    return grid


@dataclass(frozen=True)
class TuneResult:
    best_k: int
    scores: dict            # k -> mean validation macro-F1
    reports: dict           # k -> EvalReport over pooled fold predictions

    def to_dict(self) -> dict:
        return {"best_k": self.best_k,
                "scores": {str(k): v for k, v in self.scores.items()},
                "reports": {str(k): r.to_dict() for k, r in self.reports.items()}}


def stratified_folds(labels: list[str], folds: int, rng: SeededRng) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; fold f holds every class's
    f-th shuffled slice. Errors out if any class cannot reach every fold."""
    labels_arr = np.asarray(labels)
    gen = rng.generator()
    assignments = [[] for _ in range(folds)]
    for lab in order_labels(labels):
        idx = np.flatnonzero(labels_arr == lab)
        if len(idx) < folds:
            raise ValidationError(
                f"class {lab} has {len(idx)} instances, fewer than {folds} folds"
            )
        idx = idx[gen.permutation(len(idx))]
        for f in range(folds):
            assignments[f].extend(idx[f::folds].tolist())
    return [np.array(sorted(a)) for a in assignments]


def tune_k(dataset: Dataset, config: Config, folds: int | None = None) -> TuneResult:
    """Cross-validated search over the k grid.

    Stratified K-fold by default; passing folds equal to the dataset size
    gives true leave-one-out validation. Best k is the smallest grid member
    achieving the highest mean validation macro-F1.
    """
    from . import workflow

    folds = config.folds if folds is None else folds
    n = len(dataset)
    if not (folds >= 2 or folds == n):
        raise ValidationError(f"folds must be >= 2 or equal to the dataset size, got {folds}")
    if folds > n:
        raise ValidationError(f"{folds} folds but only {n} instances")
    labels = [x.label for x in dataset]
    classes = dataset.labels
    rng = SeededRng(config.seed).derive(STREAM_TUNE)
    loocv = folds == n
    if loocv:
        fold_idx = [np.array([i]) for i in range(n)]
    else:
        fold_idx = stratified_folds(labels, folds, rng)

    grid = k_grid(dataset.length)
    scores: dict[int, float] = {}
    reports: dict[int, EvalReport] = {}
    index = {lab: i for i, lab in enumerate(classes)}
    for k in grid:
        cfg_k = config.with_updates(k=k)
        fold_f1: list[float] = []
        pooled_true: list[int] = []
        pooled_pred: list[int] = []
        for f, val_idx in enumerate(fold_idx):
            val_mask = np.zeros(n, dtype=bool)
            val_mask[val_idx] = True
            train_ds = Dataset(tuple(x for i, x in enumerate(dataset) if not val_mask[i]))
            val_ds = Dataset(tuple(x for i, x in enumerate(dataset) if val_mask[i]))
            report, y_true, y_pred = workflow.fit_and_score(train_ds, val_ds, cfg_k,
                                                            classes=classes)
            fold_f1.append(report.macro_f1)
            pooled_true.extend(y_true.tolist())
            pooled_pred.extend(y_pred.tolist())
        pooled = compute_metrics(np.array(pooled_true), np.array(pooled_pred), classes)
        scores[k] = pooled.macro_f1 if loocv else float(np.mean(fold_f1))
        reports[k] = pooled
    best_k = grid[0]
    for k in grid:
        if scores[k] > scores[best_k]:
            best_k = k
    return TuneResult(best_k=best_k, scores=scores, reports=reports)
