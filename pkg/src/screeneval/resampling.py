"""Bootstrap intervals and paired permutation tests.

Both draw from named substreams keyed by (seed, draw index), so draws can be
evaluated in any order or in parallel without changing the result. The
permutation test swaps the two modalities within each image independently
with probability one half, the natural exchangeability for comparing two
raters scored against a shared reference, and enumerates all swap patterns
exhaustively when that is no more work than the requested Monte Carlo draws.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, UndefinedMetricError
from .rng import substream_rng

_TIE_TOL = 1e-12


def bootstrap_ci(
    statistic: Callable,
    sample,
    resamples: int,
    level: float = 0.95,
    seed: int = 0,
    max_retries: int = 100,
) -> tuple[float, float]:
    """Percentile bootstrap interval for ``statistic`` on ``sample``.

    Resampling is with replacement at the record level. A resample on which
    the statistic is undefined (raises UndefinedMetricError) is redrawn from
    the same substream, up to ``max_retries`` times.
    """
    n = len(sample)
    if n == 0:
        raise DomainError("bootstrap needs a nonempty sample")
    if resamples < 100:
        raise DomainError("bootstrap needs at least 100 resamples")
    if not (0.0 < level < 1.0):
        raise DomainError(f"level={level} outside (0, 1)")

    indexable = np.asarray(sample) if not isinstance(sample, np.ndarray) else sample
    values = np.empty(resamples, dtype=float)
    for draw in range(resamples):
        rng = substream_rng(seed, "bootstrap", draw)
        for _ in range(max_retries):
            idx = rng.integers(0, n, size=n)
            try:
                values[draw] = float(statistic(indexable[idx]))
                break
            except UndefinedMetricError:
                continue
        else:
            raise UndefinedMetricError(
                f"statistic undefined on {max_retries} consecutive resamples"
            )
    alpha = 1.0 - level
    low, high = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(low), float(high)


def _paired_arrays(paired):
    a = np.asarray([p[0] for p in paired])
    b = np.asarray([p[1] for p in paired])
    ref = np.asarray([p[2] for p in paired])
    return a, b, ref


def permutation_test(
    paired: Sequence[tuple],
    metric: Callable,
    permutations: int,
    seed: int = 0,
    method: str = "auto",
) -> float:
    """Two-sided p-value for metric(A) - metric(B) on paired predictions.

    ``paired`` holds (prediction_a, prediction_b, reference) per image and
    ``metric(predictions, references)`` returns the scalar being compared.
    The null distribution swaps A and B within each image; draws on which the
    metric is undefined are excluded (at most half may be excluded). With
    2^n <= permutations the swap patterns are enumerated exhaustively and the
    p-value is the exact tail proportion; otherwise Monte Carlo with the
    add-one correction (1 + hits) / (1 + valid draws). ``method`` forces one
    path ("exhaustive" or "monte_carlo") instead of the size-based choice.
    """
    n = len(paired)
    if n == 0:
        raise DomainError("permutation test needs nonempty paired data")
    if method not in ("auto", "exhaustive", "monte_carlo"):
        raise DomainError(f"unknown method {method!r}")
    if method == "auto":
        exhaustive = n < 63 and (1 << n) <= permutations
    else:
        exhaustive = method == "exhaustive"
        if exhaustive and not (n < 63 and (1 << n) <= 1 << 22):
            raise DomainError(f"exhaustive enumeration infeasible for n={n}")
    if not exhaustive and permutations < 1000:
        raise DomainError("permutation test needs at least 1,000 Monte Carlo draws")

    a, b, ref = _paired_arrays(paired)
    observed = float(metric(a, ref)) - float(metric(b, ref))
    threshold = abs(observed) - _TIE_TOL

    def null_value(mask: np.ndarray) -> float | None:
        swapped_a = np.where(mask, b, a)
        swapped_b = np.where(mask, a, b)
        try:
            return float(metric(swapped_a, ref)) - float(metric(swapped_b, ref))
        except UndefinedMetricError:
            return None

    if exhaustive:
        total = 1 << n
        hits = valid = 0
        bit_index = np.arange(n)
        for bits in range(total):
            mask = (bits >> bit_index) & 1 == 1
            value = null_value(mask)
            if value is None:
                continue
            valid += 1
            if abs(value) >= threshold:
                hits += 1
        _check_skips(total - valid, total)
        return hits / valid

    hits = valid = 0
    for draw in range(permutations):
        rng = substream_rng(seed, "permutation", draw)
        value = null_value(rng.random(n) < 0.5)
        if value is None:
            continue
        valid += 1
        if abs(value) >= threshold:
            hits += 1
    _check_skips(permutations - valid, permutations)
    return (1 + hits) / (1 + valid)


def _check_skips(skipped: int, total: int) -> None:
    if skipped * 2 > total:
        raise UndefinedMetricError(
            f"metric undefined on {skipped}/{total} permutation draws"
        )


# -- paired metrics for use with permutation_test -----------------------------


def sensitivity_stat(predictions: np.ndarray, references: np.ndarray) -> float:
    """Sensitivity over boolean arrays; undefined without positives."""
    positives = references.astype(bool)
    if not positives.any():
        raise UndefinedMetricError("no positive references")
    return float(predictions[positives].astype(bool).mean())


def specificity_stat(predictions: np.ndarray, references: np.ndarray) -> float:
    negatives = ~references.astype(bool)
    if not negatives.any():
        raise UndefinedMetricError("no negative references")
    return float((~predictions[negatives].astype(bool)).mean())


def kappa_stat(n_categories: int) -> Callable:
    """Quadratic-weighted kappa over integer-coded category arrays."""
    idx = np.arange(n_categories)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (n_categories - 1) ** 2

    def stat(predictions: np.ndarray, references: np.ndarray) -> float:
        codes = references.astype(np.int64) * n_categories + predictions.astype(np.int64)
        counts = np.bincount(codes, minlength=n_categories * n_categories)
        observed = counts.reshape(n_categories, n_categories) / len(predictions)
        expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
        denom = float((weights * expected).sum())
        if denom == 0.0:
            raise UndefinedMetricError("degenerate marginals")
        return 1.0 - float((weights * observed).sum()) / denom

    return stat
