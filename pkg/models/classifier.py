# models/classifier.py

"""
Linear feature-quality harness.

Frames are block-averaged to a fixed grid and fed to an L2-regularized
logistic-regression model trained by full-batch gradient descent. Comparing
test accuracy across surface variants ranks how informative each variant is.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import rankdata

from models.filters import FilterParams
from models.surfaces import Aggregator, IetsFrame, SurfaceVariant, compose_frame, flip_frame
from utils.errors import ExportError, FormatError, TrainingError

logger = logging.getLogger(__name__)

DEFAULT_GRID = 32

MODEL_MAGIC = b'IETSLIN1'
MODEL_HEADER = struct.Struct('<8sIII')  # magic, feature dim, weight rows, json length


# ============================================================
# FEATURES
# ============================================================

@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    label: Optional[str] = None

    def __len__(self) -> int:
        return len(self.values)


def _center_pad(channels: np.ndarray, grid: int) -> np.ndarray:
    _, height, width = channels.shape
    pad_h, pad_w = max(grid - height, 0), max(grid - width, 0)
    if not (pad_h or pad_w):
        return channels
    return np.pad(
        channels,
        ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)),
        mode='constant'
    )


def _block_mean(channels: np.ndarray, grid: int) -> np.ndarray:
    _, height, width = channels.shape
    row_edges = (np.arange(grid + 1) * height) // grid
    col_edges = (np.arange(grid + 1) * width) // grid
    sums = np.add.reduceat(channels, row_edges[:-1], axis=1)
    sums = np.add.reduceat(sums, col_edges[:-1], axis=2)
    sizes = np.outer(np.diff(row_edges), np.diff(col_edges))
    return sums / sizes[None, :, :]


def featurize(frame: Union[IetsFrame, np.ndarray], grid: int = DEFAULT_GRID, label: Optional[str] = None) -> FeatureVector:
    """
    Block-average every channel onto a grid x grid lattice and concatenate.

    Frames smaller than the grid are centered in a zero canvas first.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    channels = frame.to_array() if isinstance(frame, IetsFrame) else np.asarray(frame)
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 2:
        channels = channels[None, :, :]
    pooled = _block_mean(_center_pad(channels, grid), grid)
    return FeatureVector(values=pooled.reshape(-1), label=label)


# ============================================================
# MODEL
# ============================================================

@dataclass(eq=False)
class LinearModel:
    """
    Logistic-regression weights.

    Binary models hold one weight row scoring classes[1]; with more classes
    there is one one-vs-rest row per class.
    """
    classes: List[str]
    weights: np.ndarray
    bias: np.ndarray
    loss_history: List[List[float]] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def is_binary(self) -> bool:
        return len(self.classes) == 2

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise TrainingError(f"Expected features of dimension {self.n_features}, got shape {X.shape}")
        return X

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Binary: (n,) scores for classes[1]; otherwise (n, k) one-vs-rest scores"""
        scores = self._check(X) @ self.weights.T + self.bias
        return scores[:, 0] if self.is_binary else scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_function(X)
        if self.is_binary:
            index = (scores > 0).astype(np.int64)
        else:
            index = np.argmax(scores, axis=1)
        return np.asarray(self.classes, dtype=object)[index]


def loss_and_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> Tuple[float, np.ndarray]:
    """
    Mean logistic loss with an L2 penalty on the weights (not the bias).

    Args:
        weights: d + 1 parameters, the last one is the bias
        X: (n, d) features
        y: (n,) targets in {0, 1}

    Returns:
        (loss, gradient of shape (d + 1,))
    """
    w, b = weights[:-1], weights[-1]
    z = X @ w + b
    signed = np.where(y > 0, z, -z)
    loss = float(np.mean(np.logaddexp(0.0, -signed)) + 0.5 * l2 * np.dot(w, w))

    residual = (expit(z) - y) / len(y)
    gradient = np.empty_like(weights)
    gradient[:-1] = X.T @ residual + l2 * w
    gradient[-1] = residual.sum()
    return loss, gradient


def _fit_binary(
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    learning_rate: float,
    l2: float,
    rng: np.random.Generator
) -> Tuple[np.ndarray, List[float]]:
    weights = rng.normal(0.0, 0.01, size=X.shape[1] + 1)
    loss, gradient = loss_and_gradient(weights, X, y, l2)
    history = [loss]

    for _ in range(epochs):
        step = learning_rate
        while True:
            candidate = weights - step * gradient
            candidate_loss, candidate_gradient = loss_and_gradient(candidate, X, y, l2)
            if candidate_loss <= loss:
                break
            step *= 0.5
            if step < 1e-12:
                candidate, candidate_loss, candidate_gradient = weights, loss, gradient
                break
        weights, loss, gradient = candidate, candidate_loss, candidate_gradient
        history.append(loss)

    return weights, history


def train_linear(
    X: np.ndarray,
    labels: Sequence,
    epochs: int = 200,
    learning_rate: float = 1.0,
    seed: int = 0,
    l2: float = 1e-3
) -> LinearModel:
    """
    Fit a linear classifier with backtracking gradient descent.

    The step halves until the full-batch loss does not rise, so every model's
    loss history is non-increasing. Classes are the sorted distinct labels.

    Raises:
        TrainingError: fewer than two classes, or X and labels disagree
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray([str(label) for label in labels], dtype=object)
    if X.ndim != 2 or len(X) != len(labels):
        raise TrainingError(f"Features of shape {X.shape} do not match {len(labels)} labels")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise TrainingError(f"Training needs at least two classes, got {classes}")

    rng = np.random.default_rng(seed)
    targets = [classes[1]] if len(classes) == 2 else classes
    rows, biases, histories = [], [], []
    for target in targets:
        y = (labels == target).astype(np.float64)
        weights, history = _fit_binary(X, y, epochs, learning_rate, l2, rng)
        rows.append(weights[:-1])
        biases.append(weights[-1])
        histories.append(history)

    model = LinearModel(classes=classes, weights=np.vstack(rows), bias=np.asarray(biases), loss_history=histories)
    logger.debug(
        f"Trained {len(targets)} linear model(s) on {X.shape[0]}x{X.shape[1]}, "
        f"final loss {[round(h[-1], 5) for h in histories]}"
    )
    return model


# ============================================================
# METRICS
# ============================================================

def roc_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Rank-statistic AUC with tie-averaged ranks; NaN when one class is missing"""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(np.count_nonzero(positive))
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float('nan')
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalReport:
    accuracy: float
    auc: float
    class_counts: Dict[str, int]
    variant: Optional[str] = None
    n_test: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            'accuracy': self.accuracy,
            'auc': self.auc,
            'class_counts': dict(self.class_counts),
            'variant': self.variant,
            'n_test': self.n_test,
        }


def evaluate(model: LinearModel, X: np.ndarray, labels: Sequence, variant: Optional[str] = None) -> EvalReport:
    """
    Accuracy and AUC on a test set.

    Binary AUC scores classes[1] against classes[0]; with more classes it is the
    mean of the one-vs-rest AUCs that are defined.
    """
    labels = np.asarray([str(label) for label in labels], dtype=object)
    if len(labels) == 0:
        raise TrainingError("Test set is empty")
    X = model._check(X)
    if len(X) != len(labels):
        raise TrainingError(f"{len(X)} feature rows for {len(labels)} labels")

    predicted = model.predict(X)
    accuracy = float(np.mean(predicted == labels))
    scores = model.decision_function(X)
    if model.is_binary:
        auc = roc_auc(scores, labels == model.classes[1])
    else:
        per_class = [roc_auc(scores[:, k], labels == name) for k, name in enumerate(model.classes)]
        defined = [value for value in per_class if not np.isnan(value)]
        auc = float(np.mean(defined)) if defined else float('nan')

    names, counts = np.unique(labels, return_counts=True)
    return EvalReport(
        accuracy=accuracy,
        auc=auc,
        class_counts={str(name): int(count) for name, count in zip(names, counts)},
        variant=variant,
        n_test=len(labels)
    )


# ============================================================
# PERSISTENCE
# ============================================================

def save_model(model: LinearModel, path: Union[str, Path]) -> Path:
    """
    Flat little-endian container:
    magic 'IETSLIN1', uint32 feature dim, uint32 weight rows, uint32 JSON length,
    the JSON list of class names, then float64 weights (rows x dim) and biases (rows).
    """
    path = Path(path)
    names = json.dumps(model.classes).encode('utf-8')
    rows, dim = model.weights.shape
    payload = (
        MODEL_HEADER.pack(MODEL_MAGIC, dim, rows, len(names))
        + names
        + model.weights.astype('<f8').tobytes()
        + model.bias.astype('<f8').tobytes()
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise ExportError(f"Could not write model ({e.strerror or e})", path=str(path)) from e
    return path


def load_model(path: Union[str, Path]) -> LinearModel:
    data = Path(path).read_bytes()
    if len(data) < MODEL_HEADER.size:
        raise FormatError("Model file shorter than its header", offset=len(data))
    magic, dim, rows, name_length = MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError("Not a linear model file (bad magic)", offset=0)
    offset = MODEL_HEADER.size
    expected = offset + name_length + 8 * (rows * dim + rows)
    if len(data) != expected:
        raise FormatError(f"Model file size {len(data)} does not match header ({expected})", offset=len(data))
    classes = json.loads(data[offset:offset + name_length].decode('utf-8'))
    offset += name_length
    weights = np.frombuffer(data, dtype='<f8', count=rows * dim, offset=offset).reshape(rows, dim).astype(np.float64)
    offset += 8 * rows * dim
    bias = np.frombuffer(data, dtype='<f8', count=rows, offset=offset).astype(np.float64)
    return LinearModel(classes=classes, weights=weights, bias=bias)


# ============================================================
# VARIANT COMPARISON
# ============================================================

def frame_features(
    samples,
    variant: Union[SurfaceVariant, str],
    params: FilterParams,
    grid: int = DEFAULT_GRID,
    aggregator: Union[Aggregator, str] = Aggregator.MEAN,
    flip: bool = False
) -> np.ndarray:
    """Feature matrix (one row per sample) for one surface variant"""
    rows = []
    for sample in samples:
        frame = compose_frame(sample.stream, params, variant=variant, aggregator=aggregator)
        if flip:
            frame = flip_frame(frame)
        rows.append(featurize(frame, grid).values)
    if not rows:
        return np.zeros((0, 3 * grid * grid))
    return np.vstack(rows)


def stratified_split(labels: Sequence[str], test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; every class keeps at least one training sample"""
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for name in sorted(set(labels.tolist())):
        members = rng.permutation(np.flatnonzero(labels == name))
        n_test = min(int(round(len(members) * test_fraction)), len(members) - 1)
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(np.asarray(test, dtype=np.int64))


def mirror_labels(labels: Sequence[str], mapping: Optional[Mapping[str, str]] = None) -> np.ndarray:
    """Labels of left-right mirrored samples; classes missing from mapping keep their label"""
    mapping = mapping or {}
    return np.asarray([mapping.get(str(label), str(label)) for label in labels], dtype=object)


def run_variant_comparison(
    samples,
    variants: Sequence[Union[SurfaceVariant, str]] = (SurfaceVariant.RAW_TS, SurfaceVariant.FSAE_TS, SurfaceVariant.IETS),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    grid: int = DEFAULT_GRID,
    params: FilterParams = FilterParams(),
    test_fraction: float = 0.5,
    epochs: int = 200,
    learning_rate: float = 1.0,
    l2: float = 1e-3,
    flip_augment: bool = False,
    flip_labels: Optional[Mapping[str, str]] = None
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Train and test a linear model per (variant, seed).

    Frames are composed once per variant; each seed draws its own stratified
    split and weight initialization. flip_augment adds mirrored copies of the
    training frames. A mirrored frame keeps its label unless flip_labels maps
    it to another class (e.g. left_to_right <-> right_to_left); without that
    mapping only classes that are symmetric under mirroring should be flipped.

    Returns:
        (per-run table, per-variant summary with mean/std accuracy and mean AUC)
    """
    labels = np.asarray([str(sample.label) for sample in samples], dtype=object)
    if len(set(labels.tolist())) < 2:
        raise TrainingError("Variant comparison needs samples from at least two classes")

    flipped_labels = mirror_labels(labels, flip_labels)
    runs = []
    for variant in variants:
        variant = SurfaceVariant.parse(variant)
        X = frame_features(samples, variant, params, grid)
        X_flipped = frame_features(samples, variant, params, grid, flip=True) if flip_augment else None
        for seed in seeds:
            train, test = stratified_split(labels, test_fraction, seed)
            X_train, y_train = X[train], labels[train]
            if X_flipped is not None:
                X_train = np.vstack((X_train, X_flipped[train]))
                y_train = np.concatenate((y_train, flipped_labels[train]))
            model = train_linear(X_train, y_train, epochs=epochs, learning_rate=learning_rate, seed=seed, l2=l2)
            report = evaluate(model, X[test], labels[test], variant=variant.value)
            runs.append({'variant': variant.value, 'seed': seed, 'accuracy': report.accuracy, 'auc': report.auc})
            logger.debug(f"{variant.value} seed {seed}: accuracy {report.accuracy:.3f}, AUC {report.auc:.3f}")

    per_run = pd.DataFrame(runs)
    summary = (
        per_run.groupby('variant', sort=False)
        .agg(accuracy_mean=('accuracy', 'mean'), accuracy_std=('accuracy', 'std'), auc_mean=('auc', 'mean'), runs=('seed', 'count'))
        .reset_index()
    )
    for row in summary.itertuples():
        logger.info(f"📊 {row.variant}: accuracy {row.accuracy_mean:.3f} ± {row.accuracy_std:.3f}, AUC {row.auc_mean:.3f}")
    return per_run, summary
