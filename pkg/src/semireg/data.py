"""Datasets: synthetic heteroscedastic tasks, CSV ingestion, splits, scaling.

Unlabeled data is represented by a dataset whose ``targets`` is None; the
true targets of the unlabeled partition are kept on the split object under an
oracle-only field that the training API never reads (it is used solely to
score pseudo-label quality after the fact).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataSchemaError, ParameterError
from .matrix import Matrix
from .rng import Rng

TARGET_FUNCTIONS = ("linear", "sinusoidal", "piecewise")
NOISE_MODELS = ("constant", "input_dependent")


@dataclass(frozen=True)
class RegressionDataset:
    """Feature rows with optional targets (None marks an unlabeled set)."""

    features: Matrix
    targets: np.ndarray | None = None
    true_noise_sigma: np.ndarray | None = None

    def __post_init__(self):
        for name in ("targets", "true_noise_sigma"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.features.rows,):
                raise ParameterError(f"{name} must have one value per feature row")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def n(self) -> int:
        return self.features.rows

    @property
    def input_dim(self) -> int:
        return self.features.cols

    def subset(self, idx: np.ndarray) -> "RegressionDataset":
        return RegressionDataset(
            features=Matrix(self.features.data[idx]),
            targets=None if self.targets is None else self.targets[idx],
            true_noise_sigma=None
            if self.true_noise_sigma is None
            else self.true_noise_sigma[idx],
        )


@dataclass(frozen=True)
class SemiSupervisedSplit:
    """Disjoint labeled/unlabeled/validation/test partition of one dataset.

    ``oracle_unlabeled_targets`` holds the hidden truth for the unlabeled
    rows. It exists only for after-the-fact evaluation of pseudo-labels and
    must never feed a training decision.
    """

    labeled: RegressionDataset
    unlabeled: RegressionDataset
    validation: RegressionDataset
    test: RegressionDataset
    label_fraction: float
    oracle_unlabeled_targets: np.ndarray | None = None


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    input_dim: int = 1
    target_function: str = "sinusoidal"
    noise_model: str = "input_dependent"
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 40:
            raise ParameterError(f"n_samples must be >= 40, got {self.n_samples}")
        if self.input_dim < 1:
            raise ParameterError("input_dim must be >= 1")
        if self.target_function not in TARGET_FUNCTIONS:
            raise ParameterError(f"target_function must be one of {TARGET_FUNCTIONS}")
        if self.noise_model not in NOISE_MODELS:
            raise ParameterError(f"noise_model must be one of {NOISE_MODELS}")
        if self.noise_scale < 0:
            raise ParameterError("noise_scale must be >= 0")


def _target_values(kind: str, x: np.ndarray) -> np.ndarray:
    x0 = x[:, 0]
    rest = x[:, 1:].sum(axis=1) if x.shape[1] > 1 else 0.0
    if kind == "linear":
        slopes = 1.0 + 0.5 * np.arange(x.shape[1])
        return x @ slopes + 0.5
    if kind == "sinusoidal":
        return np.sin(2.0 * x0) + 0.5 * x0 + 0.3 * rest
    # piecewise: linear on the left half, sinusoidal on the right
    # (continuous at x0 = 0, with a slope kink)
    return 0.4 * x0 + np.where(x0 > 0.0, np.sin(2.0 * x0), 0.0) + 0.3 * rest


def noise_sigma(spec: SyntheticSpec, x: np.ndarray) -> np.ndarray:
    """Per-sample noise level; smooth and positive in the input-dependent mode.

    input_dependent: sigma(x) = scale * (0.15 + 1.1 * logistic(1.5 * x0)),
    rising smoothly from ~0.16*scale on the left of the input range to
    ~1.25*scale on the right (a ~60x spread in noise variance).
    """
    if spec.noise_model == "constant":
        return np.full(x.shape[0], float(spec.noise_scale))
    x0 = x[:, 0]
    return spec.noise_scale * (0.15 + 1.1 / (1.0 + np.exp(-1.5 * x0)))


def generate_synthetic(spec: SyntheticSpec) -> RegressionDataset:
    """Inputs uniform on [-3, 3]^d, targets f(x) plus Gaussian noise N(0, sigma(x)^2)."""
    rng = Rng(spec.seed)
    x = rng.uniforms(spec.n_samples * spec.input_dim).reshape(
        spec.n_samples, spec.input_dim
    ) * 6.0 - 3.0
    clean = _target_values(spec.target_function, x)
    sigma = noise_sigma(spec, x)
    noise = rng.gaussians(spec.n_samples) * sigma
    return RegressionDataset(
        features=Matrix(x),
        targets=clean + noise,
        true_noise_sigma=sigma,
    )


@dataclass(frozen=True)
class CsvSchema:
    feature_columns: tuple[str, ...]
    target_column: str | None
    has_header: bool = True


def load_csv(path, schema: CsvSchema) -> RegressionDataset:
    """Parse a comma-separated file of 64-bit reals, preserving row order.

    Column references are names when the file has a header, otherwise 0-based
    indices given as strings. Any unparseable or non-finite cell is rejected
    with its row/column coordinates.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataSchemaError(f"{path}: file is empty")

    if schema.has_header:
        header = rows[0]
        data_rows = rows[1:]
        col_index = {name: i for i, name in enumerate(header)}

        def resolve(name: str) -> int:
            if name not in col_index:
                raise DataSchemaError(f"{path}: missing column {name!r}")
            return col_index[name]

    else:
        data_rows = rows
        width = len(rows[0])

        def resolve(name: str) -> int:
            idx = int(name)
            if not 0 <= idx < width:
                raise DataSchemaError(f"{path}: column index {idx} out of range")
            return idx

    if not data_rows:
        raise DataSchemaError(f"{path}: no data rows")
    feature_idx = [resolve(c) for c in schema.feature_columns]
    target_idx = resolve(schema.target_column) if schema.target_column is not None else None

    def parse_cell(row_no: int, col_no: int, text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise DataSchemaError(
                f"{path}: unparseable value {text!r} at row {row_no}, column {col_no}"
            ) from None
        if not np.isfinite(value):
            raise DataSchemaError(
                f"{path}: non-finite value {text!r} at row {row_no}, column {col_no}"
            )
        return value

    features = np.empty((len(data_rows), len(feature_idx)))
    targets = np.empty(len(data_rows)) if target_idx is not None else None
    first_data_row = 1 if schema.has_header else 0
    for r, row in enumerate(data_rows):
        row_no = r + first_data_row
        needed = max(feature_idx + ([target_idx] if target_idx is not None else []))
        if len(row) <= needed:
            raise DataSchemaError(f"{path}: row {row_no} has only {len(row)} cells")
        for j, c in enumerate(feature_idx):
            features[r, j] = parse_cell(row_no, c, row[c])
        if targets is not None:
            targets[r] = parse_cell(row_no, target_idx, row[target_idx])
    return RegressionDataset(features=Matrix(features), targets=targets)


def save_csv(dataset: RegressionDataset, path, feature_names: list[str] | None = None):
    """Inverse of load_csv for datasets with targets: header + full-precision reals."""
    names = feature_names or [f"x{i}" for i in range(dataset.input_dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = list(names) + (["y"] if dataset.targets is not None else [])
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features.data[i]]
            if dataset.targets is not None:
                row.append(repr(float(dataset.targets[i])))
            writer.writerow(row)


def split_semi_supervised(
    data: RegressionDataset,
    label_fraction: float,
    val_fraction: float,
    test_fraction: float,
    rng: Rng,
) -> SemiSupervisedSplit:
    """Seeded uniform partition into labeled/unlabeled/validation/test.

    ``val_fraction`` and ``test_fraction`` are fractions of the full dataset;
    ``label_fraction`` applies to the remaining training rows, with the rest
    becoming the unlabeled set (possibly empty at label_fraction=1).
    """
    if data.targets is None:
        raise ParameterError("cannot split a dataset without targets")
    if not 0.0 < label_fraction <= 1.0:
        raise ParameterError(f"label_fraction must be in (0, 1], got {label_fraction}")
    for name, frac in (("val_fraction", val_fraction), ("test_fraction", test_fraction)):
        if not 0.0 <= frac < 1.0:
            raise ParameterError(f"{name} must be in [0, 1), got {frac}")
    if val_fraction + test_fraction >= 1.0:
        raise ParameterError("val_fraction + test_fraction must leave training data")

    n = data.n
    order = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    n_val = int(round(val_fraction * n))
    n_train = n - n_test - n_val
    if n_train < 1:
        raise ParameterError("fractions leave no training rows")
    n_labeled = int(round(label_fraction * n_train))
    n_labeled = max(1, min(n_labeled, n_train))

    test_idx = order[:n_test]
    val_idx = order[n_test : n_test + n_val]
    labeled_idx = order[n_test + n_val : n_test + n_val + n_labeled]
    unlabeled_idx = order[n_test + n_val + n_labeled :]

    unlabeled_full = data.subset(unlabeled_idx)
    unlabeled = RegressionDataset(
        features=unlabeled_full.features,
        targets=None,
        true_noise_sigma=unlabeled_full.true_noise_sigma,
    )
    return SemiSupervisedSplit(
        labeled=data.subset(labeled_idx),
        unlabeled=unlabeled,
        validation=data.subset(val_idx),
        test=data.subset(test_idx),
        label_fraction=label_fraction,
        oracle_unlabeled_targets=unlabeled_full.targets,
    )


class Normalizer:
    """Per-feature and target standardization fitted on labeled data only.

    Zero-variance features pass through unchanged; each one is recorded in
    ``constant_features`` and reported via warnings.warn. Targets are
    standardized so a zero log-variance prediction means unit variance on the
    training scale; ``log_var_offset`` converts predicted log-variances back
    to original target units.
    """

    def __init__(self, labeled: RegressionDataset):
        if labeled.n == 0:
            raise ParameterError("cannot fit a normalizer on an empty dataset")
        if labeled.targets is None:
            raise ParameterError("normalizer needs labeled targets")
        feats = labeled.features.data
        self.feature_mean = feats.mean(axis=0)
        feature_std = feats.std(axis=0)
        self.constant_features = tuple(int(i) for i in np.where(feature_std == 0.0)[0])
        for i in self.constant_features:
            warnings.warn(f"feature {i} has zero variance; passing it through unscaled")
        self.feature_std = np.where(feature_std == 0.0, 1.0, feature_std)
        self.feature_mean = np.where(feature_std == 0.0, 0.0, self.feature_mean)
        self.target_mean = float(labeled.targets.mean())
        target_std = float(labeled.targets.std())
        if target_std == 0.0:
            warnings.warn("targets have zero variance; passing them through unscaled")
            target_std = 1.0
            self.target_mean = 0.0
        self.target_std = target_std

    @property
    def log_var_offset(self) -> float:
        """Add to a normalized-scale log-variance to express it in original units."""
        return float(2.0 * np.log(self.target_std))

    def transform_features(self, features: Matrix) -> Matrix:
        return Matrix((features.data - self.feature_mean) / self.feature_std)

    def transform_targets(self, targets: np.ndarray) -> np.ndarray:
        return (np.asarray(targets, dtype=np.float64) - self.target_mean) / self.target_std

    def inverse_targets(self, targets: np.ndarray) -> np.ndarray:
        return np.asarray(targets, dtype=np.float64) * self.target_std + self.target_mean

    def transform_dataset(self, dataset: RegressionDataset) -> RegressionDataset:
        return RegressionDataset(
            features=self.transform_features(dataset.features),
            targets=None if dataset.targets is None else self.transform_targets(dataset.targets),
            true_noise_sigma=None
            if dataset.true_noise_sigma is None
            else dataset.true_noise_sigma / self.target_std,
        )
