"""CSV ingestion, z-standardization, k-fold cross-validation and metrics."""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError
from .train import fit

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    target_name: str = None
    x_mean: np.ndarray = None
    x_sd: np.ndarray = None
    y_mean: float = None
    y_sd: float = None
    keep_columns: np.ndarray = None

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx])

    @property
    def standardized(self):
        return self.x_mean is not None

    def unstandardize_y(self, values):
        if self.y_mean is None:
            return np.asarray(values)
        return np.asarray(values) * self.y_sd + self.y_mean

    def transform(self, X, y=None):
        """Apply stored standardization to raw features (and targets)."""
        X = np.asarray(X, dtype=np.float64)
        keep = self.keep_columns
        Xs = (X[:, keep] - self.x_mean) / self.x_sd
        if y is None:
            return Xs
        ys = y if self.y_mean is None else (np.asarray(y) - self.y_mean) / self.y_sd
        return Xs, ys

    def stats_dict(self):
        return {
            "feature_names": list(self.feature_names),
            "keep_columns": None if self.keep_columns is None else self.keep_columns.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_sd": self.x_sd.tolist(),
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
        }


def read_csv_columns(path):
    """Header and float matrix of a numeric CSV; errors name the row and column."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    vals = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {i}, column {j + 1} ({header[j]})") from None
            if not math.isfinite(x):
                raise DataError(f"{path}: missing or non-finite value {cell!r} at row {i}, column {j + 1} ({header[j]})")
            vals[i - 2, j] = x
    if vals.shape[0] == 0:
        raise DataError(f"{path} has a header but no data rows")
    return header, vals


def _resolve_target(header, target):
    if target is None:
        return len(header) - 1
    if isinstance(target, int):
        idx = target
    elif target in header:
        return header.index(target)
    elif str(target).lstrip("-").isdigit():
        idx = int(target)
    else:
        raise DataError(f"target column {target!r} not found in header {header}")
    if not -len(header) <= idx < len(header):
        raise DataError(f"target index {idx} out of range for {len(header)} columns")
    return idx % len(header)


def ingest_csv(path, target=None, task="classify"):
    """Read a header-plus-numeric CSV into a :class:`Dataset`.

    ``target`` is a column name, a 0-based index (int or digit string), or
    ``None`` for the last column. Classification targets must be 0 or 1.
    """
    header, vals = read_csv_columns(path)
    t = _resolve_target(header, target)
    y = vals[:, t]
    if task == "classify" and not np.all((y == 0) | (y == 1)):
        bad = int(np.flatnonzero((y != 0) & (y != 1))[0]) + 2
        raise DataError(f"{path}: classification label at row {bad} is not 0 or 1")
    cols = [j for j in range(len(header)) if j != t]
    return Dataset(vals[:, cols], y, [header[j] for j in cols], header[t])


def read_features(path, feature_names, target_name=None):
    """Features named ``feature_names`` (and the target, if present) from a CSV.

    Returns ``(X, y)`` with ``y = None`` when the target column is absent.
    """
    header, vals = read_csv_columns(path)
    missing = [f for f in feature_names if f not in header]
    if missing:
        raise DataError(f"{path} lacks feature columns {missing}")
    X = vals[:, [header.index(f) for f in feature_names]]
    y = vals[:, header.index(target_name)] if target_name in header else None
    return X, y


def zstandardize(train, *others, standardize_target=False):
    """Standardize features (and optionally targets) with training-set statistics.

    Constant training features are dropped with a warning. Returns the
    transformed training set followed by each transformed ``other``.
    """
    if len(train) == 0:
        raise DataError("cannot standardize an empty training set")
    mean = train.X.mean(axis=0)
    sd = train.X.std(axis=0)
    keep = np.flatnonzero(sd > 0)
    if keep.size < sd.size:
        dropped = [train.feature_names[j] for j in np.flatnonzero(sd == 0)]
        warnings.warn(f"dropping constant features: {dropped}", stacklevel=2)
    if keep.size == 0:
        raise DataError("every feature is constant on the training set")
    names = [train.feature_names[j] for j in keep]
    y_mean = y_sd = None
    if standardize_target:
        y_mean = float(train.y.mean())
        y_sd = float(train.y.std())
        if not y_sd > 0:
            raise DataError("target is constant on the training set")
    out = []
    for ds in (train,) + others:
        Xs = (ds.X[:, keep] - mean[keep]) / sd[keep]
        ys = ds.y if y_mean is None else (ds.y - y_mean) / y_sd
        out.append(Dataset(Xs, ys, names, ds.target_name, mean[keep], sd[keep], y_mean, y_sd, keep))
    return out[0] if not others else tuple(out)


def fold_assignment(n, folds, seed):
    """Fold index of each of ``n`` rows; depends only on ``(seed, n, folds)``."""
    if folds < 2:
        raise DataError("cross-validation needs at least two folds")
    if folds > n:
        raise DataError(f"{folds} folds for only {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=int)
    for k, chunk in enumerate(np.array_split(perm, folds)):
        out[chunk] = k
    return out


def fold_seed(seed, fold):
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def f1_score(y_true, y_pred):
    """F1 of the positive class 1; 0 with a warning when undefined."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    if tp == 0:
        if fp == 0 and fn == 0:
            warnings.warn("F1 undefined without positives; reporting 0", stacklevel=2)
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def rmse(y_true, y_pred):
    r = np.asarray(y_true, float) - np.asarray(y_pred, float)
    return float(np.sqrt(np.mean(r * r)))


def evaluate(result, test, task, threshold=0.5):
    """Held-out metrics of a fit on an already standardized test set.

    ``loglik`` is the mean predictive log-density (standardized space for
    regression); ``f1`` uses the mixture class probability at ``threshold``;
    ``rmse`` compares the un-standardized mixture mean with raw targets.
    """
    mix = result.predict(test.X)
    out = {"loglik": float(np.mean(mix.log_density(test.y)))}
    if task == "classify":
        out["f1"] = f1_score(test.y, mix.class_prob() >= threshold)
    else:
        out["rmse"] = rmse(test.unstandardize_y(test.y), test.unstandardize_y(mix.mean()))
    return out


@dataclass
class FoldResult:
    metric: str
    values: list = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def sd(self):
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0


@dataclass
class CrossvalReport:
    results: dict
    folds: np.ndarray
    config: object

    def rows(self):
        for name, fr in self.results.items():
            for k, v in enumerate(fr.values):
                yield k, name, v

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "metric", "value"])
        for k, name, v in self.rows():
            w.writerow([k, name, repr(float(v))])
        for name, fr in self.results.items():
            w.writerow(["mean", name, repr(fr.mean)])
            w.writerow(["sd", name, repr(fr.sd)])

    def summary(self):
        space = "" if self.config.task == "classify" else " (log-likelihood in standardized target space)"
        lines = [f"{len(np.unique(self.folds))}-fold cross-validation, task={self.config.task}{space}"]
        for name, fr in self.results.items():
            lines.append(f"  {name:>8}: {fr.mean:.4f} +/- {fr.sd:.4f}")
        return "\n".join(lines)


def crossval(config, dataset, callback=None):
    """Seeded k-fold cross-validation following the standardize-fit-evaluate protocol."""
    folds = fold_assignment(len(dataset), config.folds, config.seed)
    regression = config.task != "classify"
    results = {}
    for k in range(config.folds):
        train = dataset.subset(folds != k)
        test = dataset.subset(folds == k)
        tr, te = zstandardize(train, test, standardize_target=regression)
        try:
            res = fit(config, tr, rng=fold_seed(config.seed, k))
        except NumericalError as exc:
            raise NumericalError(f"fold {k}: {exc.reason}", block=exc.block, step=exc.step) from exc
        metrics = evaluate(res, te, config.task)
        logger.info("fold %d: %s", k, metrics)
        if callback is not None:
            callback(k, res, metrics)
        for name, v in metrics.items():
            results.setdefault(name, FoldResult(name)).values.append(v)
    return CrossvalReport(results, folds, config)
