"""Dataset loading, dimensionality reduction and feature encoding.

The model consumes 3 + n_atoms/2 features per sample: three pulse inputs
(rabi, detuning, local-detuning scales) and n_atoms/2 per-atom coupling
inputs. Raw features are reduced with PCA fitted on the training split only,
then min-max mapped onto fixed ranges: [pi/2, 2*pi] for the rabi and
detuning slots, [-2*pi, -pi/2] for the local-detuning slot (same span,
negative), and [0, 1] for coupling slots. Projections outside the fitted
range at evaluation time are clamped to the range ends.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PULSE_SLOT_RANGE = (math.pi / 2.0, 2.0 * math.pi)
LOCAL_SLOT_RANGE = (-2.0 * math.pi, -math.pi / 2.0)
COUPLING_SLOT_RANGE = (0.0, 1.0)

_IDX_DTYPES = {
    0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class RawDataset:
    """Numeric features with binary labels (0/1)."""

    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    feature_names: tuple[str, ...] = ()
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d array, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must be 1-d and match the sample count")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(int))
        if self.feature_names and len(self.feature_names) != x.shape[1]:
            raise ValueError("feature_names length must match the feature count")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def majority_fraction(self) -> float:
        counts = np.bincount(self.labels, minlength=2)
        return float(counts.max()) / self.n_samples


def _read_idx(path: str | Path, expect_ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0:
        raise ValueError(f"{path}: bad IDX magic (leading bytes {raw[:2]!r})")
    if dtype_code not in _IDX_DTYPES:
        raise ValueError(f"{path}: unknown IDX dtype code 0x{dtype_code:02x}")
    if ndim != expect_ndim:
        raise ValueError(f"{path}: expected {expect_ndim}-d IDX data, header says {ndim}-d")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise ValueError(f"{path}: truncated IDX dimension list")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    dtype = _IDX_DTYPES[dtype_code]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = raw[header_len:]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, dimensions {dims} require {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(float)


def load_idx(images_path: str | Path, labels_path: str | Path,
             class_a: int, class_b: int,
             sample_cap: int | None = None, seed: int = 0) -> RawDataset:
    """Two classes from an IDX image/label file pair, flattened to vectors.

    class_a becomes label 0 and class_b label 1. With sample_cap set, a
    seeded uniform subsample (without replacement) of the pooled two-class
    rows is kept, in ascending original order.
    """
    if class_a == class_b:
        raise ValueError("class_a and class_b must differ")
    images = _read_idx(images_path, expect_ndim=3)
    labels = _read_idx(labels_path, expect_ndim=1).astype(int)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    mask = np.isin(labels, (class_a, class_b))
    if not np.any(labels == class_a):
        raise ValueError(f"class {class_a} absent from {labels_path}")
    if not np.any(labels == class_b):
        raise ValueError(f"class {class_b} absent from {labels_path}")
    idx = np.nonzero(mask)[0]
    if sample_cap is not None and sample_cap < len(idx):
        if sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")
        keep = np.random.default_rng(seed).choice(len(idx), size=sample_cap, replace=False)
        idx = idx[np.sort(keep)]
    feats = images[idx].reshape(len(idx), -1)
    y = (labels[idx] == class_b).astype(int)
    return RawDataset(features=feats, labels=y, provenance="idx-pair")


def load_csv(path: str | Path, label_column: str) -> RawDataset:
    """Numeric CSV with a header row; one column holds the 0/1 labels."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ValueError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    labels = arr[:, label_idx]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ValueError(f"{path}: column {label_column!r} must contain only 0/1 labels")
    feat_cols = [i for i in range(arr.shape[1]) if i != label_idx]
    names = tuple(header[i] for i in feat_cols)
    return RawDataset(features=arr[:, feat_cols], labels=labels.astype(int), provenance="csv",
                      feature_names=names)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


# -- PCA ---------------------------------------------------------------------

@dataclass(frozen=True)
class PCAModel:
    """Mean, principal axes (rows) and explained-variance ratios."""

    mean: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)
    explained_variance_ratio: np.ndarray = field(repr=False)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def fit_pca(features: np.ndarray, n_components: int) -> PCAModel:
    """PCA via SVD of the centered data.

    Components use a deterministic sign: the largest-magnitude entry of each
    component is made positive (first such entry on ties). Ratios are
    fractions of the total variance, so they sum to 1 only when n_components
    spans the full feature space.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("PCA needs a 2-d array with at least 2 samples")
    if not 1 <= n_components <= x.shape[1]:
        raise ValueError(
            f"n_components must be in [1, {x.shape[1]}], got {n_components}"
        )
    mean = x.mean(axis=0)
    xc = x - mean
    total_var = float((xc ** 2).sum()) / (x.shape[0] - 1)
    if total_var <= 0.0:
        raise ValueError("zero-variance input: PCA is undefined")
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:n_components]
    flip = np.sign(comps[np.arange(comps.shape[0]), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    var = (s[:n_components] ** 2) / (x.shape[0] - 1)
    return PCAModel(mean=mean, components=comps,
                    explained_variance_ratio=var / total_var)


def project(model: PCAModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.mean.shape[0]:
        raise ValueError(
            f"features have {x.shape[1]} columns, PCA was fitted on {model.mean.shape[0]}"
        )
    return (x - model.mean) @ model.components.T


# -- feature scaling ----------------------------------------------------------

def slot_ranges(n_slots: int) -> list[tuple[float, float]]:
    """Target range per encoded slot: rabi, detuning, local, then couplings."""
    if n_slots < 4:
        raise ValueError("encoding needs at least 4 slots (3 pulse + 1 coupling)")
    return [PULSE_SLOT_RANGE, PULSE_SLOT_RANGE, LOCAL_SLOT_RANGE] + \
        [COUPLING_SLOT_RANGE] * (n_slots - 3)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-slot affine map from the fitted projection range onto the target range.

    The map is increasing: fitted minimum -> target low end, fitted maximum ->
    target high end. Out-of-range projections clamp to the ends; a degenerate
    slot (min == max) maps to the range midpoint.
    """

    mins: np.ndarray = field(repr=False)
    maxs: np.ndarray = field(repr=False)
    lows: np.ndarray = field(repr=False)
    highs: np.ndarray = field(repr=False)

    @property
    def n_slots(self) -> int:
        return self.mins.shape[0]

    def transform(self, projections: np.ndarray) -> np.ndarray:
        p = np.asarray(projections, dtype=float)
        if p.ndim == 1:
            p = p[None, :]
        if p.shape[1] != self.n_slots:
            raise ValueError(f"expected {self.n_slots} slots, got {p.shape[1]}")
        span = self.maxs - self.mins
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = (p - self.mins) / span
        frac = np.where(span > 0, np.clip(frac, 0.0, 1.0), 0.5)
        return self.lows + frac * (self.highs - self.lows)


def fit_scaler(projections: np.ndarray) -> FeatureScaler:
    p = np.asarray(projections, dtype=float)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError("projections must be a non-empty 2-d array")
    ranges = slot_ranges(p.shape[1])
    lows = np.array([r[0] for r in ranges])
    highs = np.array([r[1] for r in ranges])
    return FeatureScaler(mins=p.min(axis=0), maxs=p.max(axis=0), lows=lows, highs=highs)


# -- encoded datasets -----------------------------------------------------------

@dataclass(frozen=True)
class EncodedDataset:
    """Model-ready features: pulse inputs (n, 3), coupling inputs (n, n/2 atoms)."""

    pulse: np.ndarray = field(repr=False)
    couplings: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.pulse, float)
        c = np.asarray(self.couplings, float)
        y = np.asarray(self.labels).astype(int)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"pulse inputs must be (n, 3), got {p.shape}")
        if c.ndim != 2 or c.shape[0] != p.shape[0] or c.shape[1] < 1:
            raise ValueError("coupling inputs must be (n, k>=1) matching the sample count")
        if y.shape != (p.shape[0],) or not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be binary and match the sample count")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("coupling inputs must lie in [0, 1]")
        object.__setattr__(self, "pulse", p)
        object.__setattr__(self, "couplings", c)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.pulse.shape[0]

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx)
        return EncodedDataset(self.pulse[idx], self.couplings[idx], self.labels[idx])


def encode(pca: PCAModel, scaler: FeatureScaler, raw: RawDataset) -> EncodedDataset:
    """Project, scale and split the slots into pulse and coupling inputs."""
    enc = scaler.transform(project(pca, raw.features))
    return EncodedDataset(pulse=enc[:, :3], couplings=enc[:, 3:], labels=raw.labels)


def fit_encoding(train: RawDataset, n_atoms: int) -> tuple[PCAModel, FeatureScaler]:
    """Fit PCA (3 + n_atoms/2 components) and the slot scaler on the training split."""
    if n_atoms < 2 or n_atoms % 2:
        raise ValueError("the model needs an even atom count >= 2")
    n_slots = 3 + n_atoms // 2
    pca = fit_pca(train.features, n_slots)
    scaler = fit_scaler(project(pca, train.features))
    return pca, scaler


# -- splits and synthetic data ---------------------------------------------------

def train_test_split(raw: RawDataset, fraction: float, seed: int = 0
                     ) -> tuple[RawDataset, RawDataset]:
    """Seeded stratified split; both parts keep both classes."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        members = np.nonzero(raw.labels == cls)[0]
        if len(members) == 0:
            raise ValueError(f"class {cls} absent: cannot stratify")
        members = rng.permutation(members)
        n_train = int(round(fraction * len(members)))
        if n_train == 0 or n_train == len(members):
            raise ValueError(
                f"fraction {fraction} leaves class {cls} empty in one part "
                f"({len(members)} members)"
            )
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    mk = lambda idx: RawDataset(raw.features[idx], raw.labels[idx], raw.feature_names,
                                raw.provenance)
    return mk(tr), mk(te)


def make_blobs(n_samples: int, n_features: int = 5, separation: float = 8.0,
               sigma: float = 1.0, seed: int = 0) -> RawDataset:
    """Two balanced isotropic Gaussian blobs.

    Class means sit at -/+ separation/2 * sigma on the first axis, so
    `separation` is the distance between the means in sigma units.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    if n_features < 1 or sigma <= 0 or separation < 0:
        raise ValueError("invalid blob configuration")
    rng = np.random.default_rng(seed)
    n0 = n_samples // 2
    n1 = n_samples - n0
    x = rng.normal(0.0, sigma, (n_samples, n_features))
    x[:n0, 0] -= separation * sigma / 2.0
    x[n0:, 0] += separation * sigma / 2.0
    y = np.concatenate([np.zeros(n0, int), np.ones(n1, int)])
    perm = rng.permutation(n_samples)
    names = tuple(f"f{i}" for i in range(n_features))
    return RawDataset(features=x[perm], labels=y[perm], feature_names=names,
                      provenance="synthetic")
