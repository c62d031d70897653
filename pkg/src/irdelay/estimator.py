"""Tail characterization of simulated transfer delays.

Turns samples into an empirical CCDF and fits its tail either as
exponential (log P vs t linear) or power law (log P vs log t linear).
A two-segment least-squares changepoint search locates the "waist"
where a bounded-codeword delay distribution leaves its main body.
"""

import math
from dataclasses import dataclass

import numpy as np

MIN_FIT_POINTS = 10
MIN_WAIST_POINTS = 50
DEFAULT_TAIL_FLOOR_COUNT = 10
DEFAULT_TAIL_CEIL = 0.1
WAIST_SSE_IMPROVEMENT = 0.05


class EstimatorError(ValueError):
    pass


@dataclass
class TailEstimate:
    kind: str                 # "exponential" or "power-law"
    slope: float              # positive magnitude of the fitted rate/exponent
    window: tuple             # (t_lo, t_hi) actually used
    r_squared: float
    n_points: int
    waist: float | None = None

    def to_dict(self):
        return {
            "kind": self.kind,
            "slope": self.slope,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "waist": self.waist,
        }


def empirical_ccdf(samples, censored=None):
    """P-hat[X > x] at each distinct sample value, censored samples excluded.

    Returns (values, tail_probs, n_censored). The last point has tail
    probability 0 by construction.
    """
    samples = np.asarray(samples, dtype=float)
    n_censored = 0
    if censored is not None:
        censored = np.asarray(censored, dtype=bool)
        n_censored = int(censored.sum())
        samples = samples[~censored]
    if samples.size == 0:
        raise EstimatorError("no uncensored samples")
    values, counts = np.unique(samples, return_counts=True)
    n = samples.size
    tail = (n - np.cumsum(counts)) / n
    return values, tail, n_censored


def default_window(values, tail, n_samples):
    """Value window where tail prob is in [floor_count/n, DEFAULT_TAIL_CEIL].

    Deep enough to be asymptotic, shallow enough to dodge order-statistic
    noise at the extreme tail.
    """
    floor = DEFAULT_TAIL_FLOOR_COUNT / n_samples
    keep = (tail >= floor) & (tail <= DEFAULT_TAIL_CEIL)
    if not keep.any():
        raise EstimatorError("default fit window is empty")
    return float(values[keep].min()), float(values[keep].max())


def _linear_fit(x, y):
    """OLS slope/intercept/R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    if sxx == 0:
        raise EstimatorError("degenerate fit: no spread in x")
    slope = ((x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = ((y - ym) ** 2).sum()
    r2 = 1.0 if syy == 0 else max(0.0, 1.0 - (resid ** 2).sum() / syy)
    return slope, intercept, r2


def _windowed_points(values, tail, window, log_x):
    lo, hi = window
    keep = (values >= lo) & (values <= hi) & (tail > 0)
    if log_x:
        keep &= values > 0
    x = values[keep]
    y = np.log(tail[keep])
    if log_x:
        x = np.log(x)
    return x, y, keep.sum()


def _fit(values, tail, window, kind):
    values = np.asarray(values, dtype=float)
    tail = np.asarray(tail, dtype=float)
    log_x = kind == "power-law"
    x, y, n_points = _windowed_points(values, tail, window, log_x)
    if n_points < MIN_FIT_POINTS:
        raise EstimatorError(
            f"only {n_points} usable points in window {window}; "
            f"need >= {MIN_FIT_POINTS}"
        )
    slope, _, r2 = _linear_fit(x, y)
    return TailEstimate(kind=kind, slope=-slope, window=tuple(window),
                        r_squared=r2, n_points=int(n_points))


def fit_exponential(values, tail, window):
    """Least-squares rate of log P-hat vs t; slope reported as positive."""
    return _fit(values, tail, window, "exponential")


def fit_power_law(values, tail, window):
    """Least-squares exponent of log P-hat vs log t."""
    return _fit(values, tail, window, "power-law")


def detect_waist(values, tail, log_x=False, window=None):
    """Two-segment piecewise-linear changepoint of the log-CCDF.

    Fits independent OLS lines left and right of every admissible split
    of the (optionally log-) x axis against log tail probability and
    returns the split minimizing total squared error, with both slopes
    (positive magnitudes) and a low-confidence flag when the two-segment
    fit barely improves on a single line.
    """
    values = np.asarray(values, dtype=float)
    tail = np.asarray(tail, dtype=float)
    if window is None:
        keep = tail > 0
    else:
        keep = (values >= window[0]) & (values <= window[1]) & (tail > 0)
    if log_x:
        keep &= values > 0
    x = values[keep]
    y = np.log(tail[keep])
    xs = np.log(x) if log_x else x
    m = xs.size
    if m < MIN_WAIST_POINTS:
        raise EstimatorError(
            f"waist detection needs >= {MIN_WAIST_POINTS} points, got {m}"
        )

    # prefix sums give O(1) segment SSE at every candidate split
    def seg_sse(c_n, c_x, c_y, c_xx, c_xy, c_yy):
        sxx = c_xx - c_x * c_x / c_n
        sxy = c_xy - c_x * c_y / c_n
        syy = c_yy - c_y * c_y / c_n
        with np.errstate(divide="ignore", invalid="ignore"):
            out = syy - np.where(sxx > 0, sxy * sxy / np.maximum(sxx, 1e-300), 0.0)
        return np.maximum(out, 0.0)

    cn = np.arange(1, m + 1, dtype=float)
    cx, cy = np.cumsum(xs), np.cumsum(y)
    cxx, cxy, cyy = np.cumsum(xs * xs), np.cumsum(xs * y), np.cumsum(y * y)
    lo = max(2, MIN_FIT_POINTS)
    splits = np.arange(lo, m - lo + 1)
    left = seg_sse(cn[splits - 1], cx[splits - 1], cy[splits - 1],
                   cxx[splits - 1], cxy[splits - 1], cyy[splits - 1])
    right = seg_sse(cn[-1] - cn[splits - 1], cx[-1] - cx[splits - 1],
                    cy[-1] - cy[splits - 1], cxx[-1] - cxx[splits - 1],
                    cxy[-1] - cxy[splits - 1], cyy[-1] - cyy[splits - 1])
    total = left + right
    best = int(np.argmin(total))
    split = int(splits[best])
    single_sse = float(seg_sse(cn[-1], cx[-1], cy[-1], cxx[-1], cxy[-1],
                               cyy[-1]))
    # a single line that already fits to rounding noise needs no split
    if single_sse <= 1e-9 * m:
        improvement = 0.0
    else:
        improvement = 1.0 - total[best] / single_sse
    pre_slope, _, _ = _linear_fit(xs[:split], y[:split])
    post_slope, _, _ = _linear_fit(xs[split:], y[split:])
    return {
        "waist": float(x[split - 1]),
        "pre_slope": -pre_slope,
        "post_slope": -post_slope,
        "sse_improvement": float(improvement),
        "confident": improvement >= WAIST_SSE_IMPROVEMENT,
        "n_points": int(m),
    }


def ccdf_to_csv(values, tail, path):
    with open(path, "w", newline="") as fh:
        fh.write("value,tail_prob\n")
        for v, p in zip(values, tail):
            fh.write(f"{v:.10g},{p:.10g}\n")
