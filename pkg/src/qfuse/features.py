"""Temporal feature extraction from multivariate time courses.

Four views of a (timepoints x components) matrix:

- z-scored time courses (TC)
- static functional connectivity (FNC): Fisher-z Pearson correlations
- dynamic FNC (dFNC): sliding-window correlations, one row per window
- multiscale dispersion entropy (MsDE): per component and time scale
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

# Pearson r is clipped to this magnitude before atanh so Fisher z stays finite
R_CLIP = 1.0 - 1e-7


class FeatureError(Exception):
    pass


class ZeroVarianceError(FeatureError):
    pass


class WindowTooLargeError(FeatureError):
    pass


class SeriesTooShortError(FeatureError):
    pass


class ScaleTooLargeError(FeatureError):
    pass


@dataclass(frozen=True)
class TimeCourses:
    """One subject's component time courses, shape (timepoints, components)."""

    data: np.ndarray
    subject_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise FeatureError(
                f"time courses must be (timepoints >= 2, components >= 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FeatureError("time courses contain non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def n_timepoints(self) -> int:
        return self.data.shape[0]

    @property
    def n_components(self) -> int:
        return self.data.shape[1]


def _as_tc_array(tc) -> np.ndarray:
    if isinstance(tc, TimeCourses):
        return tc.data
    return TimeCourses(np.asarray(tc, dtype=float)).data


def _constant_columns(x: np.ndarray) -> np.ndarray:
    # max == min is an exact test; std underflows to ~1e-17 instead of 0
    # when the column's mean is not representable (e.g. constant 4.2)
    return x.max(axis=0) == x.min(axis=0)


def zscore(tc) -> np.ndarray:
    """Per-component standardisation to zero mean, unit variance."""
    x = _as_tc_array(tc)
    dead = np.flatnonzero(_constant_columns(x))
    if dead.size:
        raise ZeroVarianceError(f"component {dead[0]} has zero variance")
    return (x - x.mean(axis=0)) / x.std(axis=0)


def _fisher_z(r: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(r, -R_CLIP, R_CLIP))


def fnc(tc) -> np.ndarray:
    """Static connectivity: Fisher-z transformed Pearson correlations,
    shape (B, B), symmetric, zero diagonal."""
    x = _as_tc_array(tc)
    dead = np.flatnonzero(_constant_columns(x))
    if dead.size:
        raise ZeroVarianceError(f"component {dead[0]} has zero variance")
    r = np.corrcoef(x, rowvar=False)
    # mirror the upper triangle so the result is symmetric bit for bit
    # (corrcoef's covariance product is only symmetric up to rounding)
    z = np.triu(_fisher_z(r), k=1)
    return z + z.T


def upper_triangle(mat: np.ndarray) -> np.ndarray:
    """Row-major flattening of the strict upper triangle (i < j)."""
    i, j = np.triu_indices(mat.shape[0], k=1)
    return mat[i, j]


def dfnc(tc, window: int, step: int) -> np.ndarray:
    """Sliding-window connectivity.

    Returns (n_windows, B*(B-1)/2): each row is the row-major upper
    triangle of the Fisher-z correlation matrix over one window of
    ``window`` timepoints taken every ``step``.  A zero-variance component
    inside a window yields 0 for its pairs and a warning.
    """
    x = _as_tc_array(tc)
    n, b = x.shape
    if window < 2:
        raise FeatureError(f"window must be >= 2, got {window}")
    if step < 1:
        raise FeatureError(f"step must be >= 1, got {step}")
    if window > n:
        raise WindowTooLargeError(f"window {window} exceeds series length {n}")
    starts = range(0, n - window + 1, step)
    iu, ju = np.triu_indices(b, k=1)
    rows = np.empty((len(starts), iu.size))
    for w, s in enumerate(starts):
        seg = x[s:s + window]
        dead = _constant_columns(seg)
        if dead.any():
            warnings.warn(
                f"window at offset {s}: zero-variance component(s) "
                f"{np.flatnonzero(dead).tolist()}; affected pairs set to 0")
            seg = seg.copy()
            # unit filler keeps corrcoef finite; affected pairs are zeroed below
            seg[:, dead] = np.linspace(0.0, 1.0, window)[:, None]
        r = np.corrcoef(seg, rowvar=False)
        z = _fisher_z(r)
        if dead.any():
            z[dead, :] = 0.0
            z[:, dead] = 0.0
        rows[w] = z[iu, ju]
    return rows


def coarse_grain(x: np.ndarray, scale: int) -> np.ndarray:
    """Non-overlapping mean pooling: floor(N / scale) bins, remainder
    samples dropped."""
    x = np.asarray(x, dtype=float).ravel()
    if scale < 1:
        raise FeatureError(f"scale must be >= 1, got {scale}")
    n = x.size // scale
    if n < 1:
        raise SeriesTooShortError(f"series of length {x.size} too short for scale {scale}")
    return x[:n * scale].reshape(n, scale).mean(axis=1)


def _round_half_up_classes(theta: np.ndarray, n_classes: int) -> np.ndarray:
    # round(c*theta + 0.5) with ties away from zero, clamped to [1, c]
    labels = np.floor(n_classes * theta + 1.0).astype(int)
    return np.clip(labels, 1, n_classes)


def ncdf_map(x: np.ndarray, n_classes: int) -> np.ndarray:
    """Map a signal to integer classes 1..c through the normal CDF taken
    at the signal's own mean and standard deviation.  A constant signal
    maps to the midpoint class round(c/2 + 0.5)."""
    x = np.asarray(x, dtype=float).ravel()
    if n_classes < 2:
        raise FeatureError(f"need at least 2 classes, got {n_classes}")
    mu, sd = x.mean(), x.std()
    if sd == 0.0:
        theta = np.full(x.shape, 0.5)
    else:
        theta = norm.cdf(x, loc=mu, scale=sd)
    return _round_half_up_classes(theta, n_classes)


def minmax_map(x: np.ndarray, n_classes: int) -> np.ndarray:
    """Alternative discretisation: min-max normalisation to [0, 1] then
    the same rounding rule as ncdf_map."""
    x = np.asarray(x, dtype=float).ravel()
    if n_classes < 2:
        raise FeatureError(f"need at least 2 classes, got {n_classes}")
    lo, hi = x.min(), x.max()
    if hi == lo:
        theta = np.full(x.shape, 0.5)
    else:
        theta = (x - lo) / (hi - lo)
    return _round_half_up_classes(theta, n_classes)


def dispersion_entropy(labels: np.ndarray, n_classes: int,
                       embedding: int = 2, delay: int = 1) -> float:
    """Shannon entropy (natural log) of dispersion-pattern frequencies.

    Patterns are the embedded vectors (labels[i], labels[i+delay], ...,
    labels[i+(embedding-1)*delay]).  Bounded by [0, embedding*ln(c)].
    """
    labels = np.asarray(labels)
    if embedding < 1 or delay < 1:
        raise FeatureError("embedding and delay must be >= 1")
    if labels.min() < 1 or labels.max() > n_classes:
        raise FeatureError("labels must lie in 1..n_classes")
    if labels.size < embedding * delay:
        raise SeriesTooShortError(
            f"need at least embedding*delay = {embedding * delay} labels, got {labels.size}")
    n_vec = labels.size - (embedding - 1) * delay
    # encode each pattern as an integer base n_classes
    codes = np.zeros(n_vec, dtype=np.int64)
    for j in range(embedding):
        codes = codes * n_classes + (labels[j * delay:j * delay + n_vec] - 1)
    _, counts = np.unique(codes, return_counts=True)
    p = counts / n_vec
    return float(-(p * np.log(p)).sum())


def msde(tc, scales=(1, 2, 3, 4), n_classes: int = 6,
         embedding: int = 2, delay: int = 1,
         discretize: str = "ncdf") -> np.ndarray:
    """Multiscale dispersion entropy, shape (len(scales), B).

    Entry (s, b): coarse-grain component b at scales[s], discretise with
    ``discretize`` ("ncdf" or "minmax"), then dispersion entropy.
    """
    x = _as_tc_array(tc)
    mapper = {"ncdf": ncdf_map, "minmax": minmax_map}.get(discretize)
    if mapper is None:
        raise FeatureError(f"unknown discretize mode {discretize!r}")
    n, b = x.shape
    out = np.empty((len(scales), b))
    for si, scale in enumerate(scales):
        if n // scale < embedding * delay:
            raise ScaleTooLargeError(
                f"scale {scale} leaves {n // scale} samples per component "
                f"(< embedding*delay = {embedding * delay})")
        for bi in range(b):
            grained = coarse_grain(x[:, bi], scale)
            out[si, bi] = dispersion_entropy(mapper(grained, n_classes),
                                             n_classes, embedding, delay)
    return out


# ---------------------------------------------------------------------------
# CSV I/O

def load_tc_csv(path) -> TimeCourses:
    """Read a (timepoints x components) CSV; a non-numeric first row is
    treated as a header and skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",") if tok != ""]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    name = str(path)
    return TimeCourses(data, subject_id=name.rsplit("/", 1)[-1].removesuffix(".csv"))


def save_matrix_csv(path, mat: np.ndarray) -> None:
    np.savetxt(path, np.asarray(mat), delimiter=",", fmt="%.10g")
