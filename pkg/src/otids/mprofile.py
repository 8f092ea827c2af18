"""Matrix profile engine on z-normalized Euclidean distance.

For every length-m window the minimal distance to all other windows (outside
an exclusion zone) is computed, with

    d(x, y) = sqrt(2m * (1 - (sum(x*y) - m*mu_x*mu_y) / (m*sigma_x*sigma_y)))

using the population standard deviation. Low values mark recurring motifs,
high values mark discords (anomaly candidates).

Two routes are provided: a brute-force computation from explicitly
z-normalized windows, and a fast variant using precomputed running moments
and O(1) sliding dot-product updates along diagonals (numba-compiled,
O(n^2) time, O(n) memory). Degenerate windows: both constant -> d = 0,
exactly one constant -> d = sqrt(2m).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import Alert, InputError, PreconditionError, TimeSeries, atomic_write_text

_CONST_TOL = 1e-10


@dataclass(frozen=True)
class ProfileConfig:
    m: int
    exclusion_radius: int = 0  # 0 means the default ceil(m/2)

    def __post_init__(self):
        if self.m < 3:
            raise PreconditionError(f"window length m must be >= 3, got {self.m}")
        if self.exclusion_radius == 0:
            object.__setattr__(self, "exclusion_radius", math.ceil(self.m / 2))
        if self.exclusion_radius < 1:
            raise PreconditionError("exclusion_radius must be >= 1")


@dataclass(frozen=True, eq=False)
class MatrixProfile:
    """Per-window minimal distances and nearest-neighbor window starts."""

    values: np.ndarray
    indices: np.ndarray
    config: ProfileConfig
    start_time: float = 0.0
    bin_width: float = 1.0
    channel_name: str = ""


def window_stats(x: np.ndarray) -> tuple[float, float]:
    """Mean and population standard deviation (divisor m) of one window."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x)), float(np.std(x))


def znorm_distance(x, y) -> float:
    """The z-normalized Euclidean distance between two equal-length windows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"window length mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("windows must be finite")
    m = len(x)
    mu_x, sigma_x = window_stats(x)
    mu_y, sigma_y = window_stats(y)
    x_const = sigma_x <= _CONST_TOL * max(1.0, abs(mu_x))
    y_const = sigma_y <= _CONST_TOL * max(1.0, abs(mu_y))
    if x_const and y_const:
        return 0.0
    if x_const or y_const:
        return math.sqrt(2.0 * m)
    # ||zx - zy||^2 = 2m(1 - ratio) algebraically, but subtracting the
    # normalized windows before squaring keeps affine-related pairs at ~0
    # instead of sqrt(2m * eps); equivalent to clamping the ratio to [-1, 1].
    zx = (x - mu_x) / sigma_x
    zy = (y - mu_y) / sigma_y
    return math.sqrt(min(float(np.sum((zx - zy) ** 2)), 4.0 * m))


def _sliding_moments(values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Running window means, population stddevs, and constant-window flags.

    Computed per window rather than by cumulative-sum differences: the
    cancellation in the cumsum route can miss exactly-constant windows,
    and the constant flags must match the brute-force oracle's exactly.
    """
    windows = np.lib.stride_tricks.sliding_window_view(values, m)
    mu = windows.mean(axis=1)
    sigma = windows.std(axis=1)
    const = sigma <= _CONST_TOL * np.maximum(1.0, np.abs(mu))
    return mu, sigma, const


def _check_series(series: TimeSeries, config: ProfileConfig) -> np.ndarray:
    values = np.asarray(series.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InputError("series values must be finite")
    if len(values) < 2 * config.m:
        raise PreconditionError(
            f"series too short: {len(values)} samples, need >= {2 * config.m} for m={config.m}")
    return values


def matrix_profile_brute(series: TimeSeries, config: ProfileConfig) -> MatrixProfile:
    """Reference computation from explicitly z-normalized windows."""
    values = _check_series(series, config)
    m = config.m
    excl = config.exclusion_radius
    l = len(values) - m + 1
    windows = np.lib.stride_tricks.sliding_window_view(values, m).astype(np.float64)
    mu = windows.mean(axis=1)
    sigma = windows.std(axis=1)
    const = sigma <= _CONST_TOL * np.maximum(1.0, np.abs(mu))
    safe_sigma = np.where(const, 1.0, sigma)
    Z = (windows - mu[:, None]) / safe_sigma[:, None]
    Z[const] = 0.0

    best = np.full(l, np.inf)
    best_idx = np.full(l, -1, dtype=np.int64)
    chunk = max(1, int(2**24 // max(l, 1)))
    j_idx = np.arange(l)
    for start in range(0, l, chunk):
        stop = min(start + chunk, l)
        rho = (Z[start:stop] @ Z.T) / m
        rho += np.outer(const[start:stop], const).astype(np.float64)
        np.clip(rho, -1.0, 1.0, out=rho)
        d = np.sqrt(2.0 * m * (1.0 - rho))
        i_idx = np.arange(start, stop)
        mask = np.abs(i_idx[:, None] - j_idx[None, :]) <= excl
        d[mask] = np.inf
        jmin = np.argmin(d, axis=1)
        dmin = d[np.arange(stop - start), jmin]
        best[start:stop] = dmin
        best_idx[start:stop] = np.where(np.isfinite(dmin), jmin, -1)
    return MatrixProfile(
        values=best,
        indices=best_idx,
        config=config,
        start_time=series.start_time,
        bin_width=series.bin_width,
        channel_name=series.channel_name,
    )


@njit(cache=True, nogil=True)
def _diag_kernel(x, m, a, b, c, k_start, k_end, best_rho, best_idx):  # pragma: no cover
    l = len(x) - m + 1
    for k in range(k_start, k_end):
        qt = 0.0
        for t in range(m):
            qt += x[t] * x[t + k]
        for i in range(l - k):
            j = i + k
            if i > 0:
                qt += x[i + m - 1] * x[j + m - 1] - x[i - 1] * x[j - 1]
            rho = qt * a[i] * a[j] - b[i] * b[j] + c[i] * c[j]
            if rho > best_rho[i] or (rho == best_rho[i] and j < best_idx[i]):
                best_rho[i] = rho
                best_idx[i] = j
            if rho > best_rho[j] or (rho == best_rho[j] and i < best_idx[j]):
                best_rho[j] = rho
                best_idx[j] = i


def matrix_profile_fast(series: TimeSeries, config: ProfileConfig, n_jobs: int = 1) -> MatrixProfile:
    """Fast variant; matches the brute-force result within 1e-6 per element.

    With n_jobs > 1 the diagonals are partitioned across threads and merged
    with a fixed rule, so the result is identical to the sequential one.
    """
    values = _check_series(series, config)
    m = config.m
    excl = config.exclusion_radius
    l = len(values) - m + 1
    mu, sigma, const = _sliding_moments(values, m)
    a = np.where(const, 0.0, 1.0 / (np.where(const, 1.0, sigma) * math.sqrt(m)))
    b = np.where(const, 0.0, mu / np.where(const, 1.0, sigma))
    c = const.astype(np.float64)

    k_start = excl + 1
    if n_jobs <= 1 or k_start >= l:
        best_rho = np.full(l, -np.inf)
        best_idx = np.full(l, 2**62, dtype=np.int64)
        _diag_kernel(values, m, a, b, c, k_start, l, best_rho, best_idx)
        parts = [(best_rho, best_idx)]
    else:
        bounds = np.linspace(k_start, l, n_jobs + 1).astype(np.int64)
        parts = [(np.full(l, -np.inf), np.full(l, 2**62, dtype=np.int64)) for _ in range(n_jobs)]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [
                pool.submit(_diag_kernel, values, m, a, b, c,
                            int(bounds[w]), int(bounds[w + 1]), parts[w][0], parts[w][1])
                for w in range(n_jobs)
            ]
            for fut in futures:
                fut.result()

    best_rho, best_idx = parts[0]
    for rho_w, idx_w in parts[1:]:
        take = (rho_w > best_rho) | ((rho_w == best_rho) & (idx_w < best_idx))
        best_rho = np.where(take, rho_w, best_rho)
        best_idx = np.where(take, idx_w, best_idx)

    none = ~np.isfinite(best_rho)
    rho = np.clip(best_rho, -1.0, 1.0)
    dist = np.sqrt(2.0 * m * (1.0 - rho))
    dist[none] = np.inf
    idx = np.where(none, -1, best_idx)
    return MatrixProfile(
        values=dist,
        indices=idx.astype(np.int64),
        config=config,
        start_time=series.start_time,
        bin_width=series.bin_width,
        channel_name=series.channel_name,
    )


# ---------------------------------------------------------------------------
# Threshold calibration and detection

@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    false_positive_bins: int
    attack_intervals: tuple[tuple[int, int], ...]  # inclusive window-start ranges
    n_windows: int
    n_attack_windows: int


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (start, end) index pairs."""
    out = []
    in_run = False
    start = 0
    for i, v in enumerate(mask):
        if v and not in_run:
            in_run, start = True, i
        elif not v and in_run:
            out.append((start, i - 1))
            in_run = False
    if in_run:
        out.append((start, len(mask) - 1))
    return out


def attack_windows(bin_labels: np.ndarray, m: int) -> np.ndarray:
    """Window i is attack-marked iff it overlaps >= 1 attack-labeled bin."""
    attack_bins = np.asarray([lab == "attack" for lab in bin_labels], dtype=np.float64)
    l = len(attack_bins) - m + 1
    if l < 1:
        raise PreconditionError("labels shorter than one window")
    s = np.concatenate(([0.0], np.cumsum(attack_bins)))
    return (s[m:] - s[:-m]) > 0


def calibrate_marked(values: np.ndarray, marked: np.ndarray) -> CalibrationResult:
    """Calibration core over per-window values and attack marks."""
    values = np.asarray(values, dtype=np.float64)
    marked = np.asarray(marked, dtype=bool)
    if len(marked) != len(values):
        raise InputError(f"marks imply {len(marked)} windows, profile has {len(values)}")
    intervals = _runs(marked)
    if not intervals:
        raise PreconditionError("nothing to calibrate: no attack-labeled interval present")
    scores = [float(np.max(values[s:e + 1])) for s, e in intervals]
    threshold = min(scores)
    flagged = values >= threshold
    fp = int(np.count_nonzero(flagged & ~marked))
    return CalibrationResult(
        threshold=threshold,
        false_positive_bins=fp,
        attack_intervals=tuple(intervals),
        n_windows=len(marked),
        n_attack_windows=int(np.count_nonzero(marked)),
    )


def calibrate_threshold(profile: MatrixProfile, bin_labels) -> CalibrationResult:
    """Minimum threshold whose >= rule still flags every attack interval."""
    marked = attack_windows(np.asarray(bin_labels, dtype=object), profile.config.m)
    return calibrate_marked(profile.values, marked)


def detect(profile: MatrixProfile, threshold: float, source: str = "ot_traffic") -> list[Alert]:
    """Maximal runs of windows at or above the threshold, as alerts."""
    if not np.isfinite(threshold):
        raise InputError("threshold must be finite")
    flagged = profile.values >= threshold
    alerts = []
    for s, e in _runs(flagged):
        score = float(np.max(profile.values[s:e + 1]))
        alerts.append(Alert(
            source=source,
            start_time=profile.start_time + s * profile.bin_width,
            end_time=profile.start_time + (e + profile.config.m) * profile.bin_width,
            score=score if np.isfinite(score) else 0.0,
            detail=f"{profile.channel_name or 'series'}: windows {s}..{e} >= {threshold:.6g}",
        ))
    return alerts


def write_profile(profile: MatrixProfile, path) -> None:
    lines = ["window_start,value,neighbor"]
    for i, (v, j) in enumerate(zip(profile.values, profile.indices)):
        lines.append(f"{i},{float(v)!r},{int(j)}")
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_profile_values(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a profile CSV as (values, neighbor indices)."""
    values = []
    indices = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "window_start,value,neighbor":
            raise InputError(f"{path}: not a profile CSV")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                _, v, j = line.split(",")
                values.append(float(v))
                indices.append(int(j))
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
    return np.asarray(values), np.asarray(indices, dtype=np.int64)
