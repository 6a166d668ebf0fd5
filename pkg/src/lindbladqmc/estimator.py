"""Ratio telescoping and error analysis.

The fidelity at full coupling is reached from an exactly known zero-coupling
anchor through a product of per-step ratios,

``ln F(t, full) - ln F(t, 0) = - sum_i ln < w_lo_i / w_hi_i >_i``,

each mean estimated by its own chain.  Errors are standard errors of the
mean with automatic binning, propagated through the logs in quadrature.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EstimatorError

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class FactorEstimate:
    """Mean ratio of one coupling step, with sampling diagnostics."""

    factor_index: int
    coupling_lo: float
    coupling_hi: float
    mean: float
    stderr: float
    n_samples: int
    acceptance_rate: float
    max_drift: float


@dataclass(frozen=True)
class SeriesPoint:
    t_w: float
    log_ratio: float
    stderr: float
    volume: int
    kind: str


def binned_stderr(values):
    """Mean and standard error with bin size grown until the error plateaus.

    The bin size doubles while at least 16 bins remain; the largest standard
    error seen along the way is reported, which is the plateau value for
    positively correlated data and the plain error for independent data.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise EstimatorError("no samples to average")
    mean = float(values.mean())
    if n == 1:
        return mean, float("inf")
    best = float(values.std(ddof=1) / np.sqrt(n))
    size = 1
    while n // (2 * size) >= 16:
        size *= 2
        n_bins = n // size
        bins = values[: n_bins * size].reshape(n_bins, size).mean(axis=1)
        best = max(best, float(bins.std(ddof=1) / np.sqrt(n_bins)))
    return mean, best


def estimate_factor(result):
    """Collapse one :class:`~lindbladqmc.sampler.ChainResult` to its mean ratio."""
    mean, stderr = binned_stderr(result.values)
    return FactorEstimate(
        factor_index=result.factor_index,
        coupling_lo=result.coupling_lo,
        coupling_hi=result.coupling_hi,
        mean=mean,
        stderr=stderr,
        n_samples=len(result.samples),
        acceptance_rate=result.acceptance_rate,
        max_drift=result.max_drift,
    )


def telescope(factors):
    """Combine per-step means into ``(log_ratio, stderr)`` of the full product.

    ``log_ratio`` is the log of the fidelity at full coupling over its
    zero-coupling anchor.  A non-positive factor mean means the estimate
    cannot be formed and is reported as a failure, never patched over.
    """
    bad = [f.factor_index for f in factors if not (f.mean > 0.0) or not np.isfinite(f.mean)]
    if bad:
        raise EstimatorError(f"non-positive factor means at steps {bad}")
    log_ratio = -sum(np.log(f.mean) for f in factors)
    var = sum((f.stderr / f.mean) ** 2 for f in factors)
    return float(log_ratio), float(np.sqrt(var))


def anchor_log_value(kind, params, volume):
    """Exact log fidelity at zero coupling.

    Echo: the zero-coupling trace is the dimension of the doubled space,
    ``2^{2V}``.  Purity: sites decouple and each contributes
    ``2 + 2 exp(-gamma t / 2)`` (two stationary diagonal states plus two
    coherences decaying at half the jump rate), exactly, at any slice count.
    """
    if kind == "echo":
        return 2.0 * volume * LOG2
    if kind == "purity":
        return volume * float(np.log(2.0 + 2.0 * np.exp(-params.gamma * params.t / 2.0)))
    raise ValueError(f"kind must be 'echo' or 'purity', got {kind!r}")


def anchor_log_value_alt(kind, params, volume):
    """Variant purity anchor with coherences decaying at the full jump rate.

    Kept alongside the primary anchor in run metadata; the dense reference
    solver agrees with :func:`anchor_log_value`, not with this form.
    """
    if kind == "echo":
        return 2.0 * volume * LOG2
    return volume * float(np.log(2.0 + 2.0 * np.exp(-params.gamma * params.t)))


def assemble_point(factors, params, volume, kind):
    """Series point ``ln F(t) / F(0)`` from one time point's factor estimates."""
    log_ratio, stderr = telescope(factors)
    log_value = log_ratio + anchor_log_value(kind, params, volume) - 2.0 * volume * LOG2
    return SeriesPoint(
        t_w=params.w * params.t,
        log_ratio=float(log_value),
        stderr=stderr,
        volume=volume,
        kind=kind,
    )


def zero_time_point(volume, kind):
    """The trivial ``t = 0`` row: the fidelity equals its initial value."""
    return SeriesPoint(t_w=0.0, log_ratio=0.0, stderr=0.0, volume=volume, kind=kind)
