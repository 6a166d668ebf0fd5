"""Single-flip Metropolis sampling of the auxiliary-field chains.

Each chain samples the weight at one coupling point ("hi") and measures, on
the sampled configurations, the ratio of the weight at the neighbouring
coupling point ("lo") to the weight at "hi".  For the echo kind the two
points differ in the field coupling ``lam`` (hopping fixed); for the purity
kind they differ in the hopping amplitude (``lam`` fixed), so the decoupling
prefactor and the field-sum factor cancel inside the measured ratio.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import bss
from .errors import NumericalError
from .model import FieldConfig

logger = logging.getLogger("lindbladqmc")


@dataclass(frozen=True)
class ChainSettings:
    """Sweep counts and stabilization knobs for one Markov chain."""

    n_warmup: int = 200
    n_sweeps: int = 2000
    meas_interval: int = 2
    n_stab: int = bss.DEFAULT_N_STAB
    drift_tol: float = bss.DEFAULT_DRIFT_TOL

    def __post_init__(self):
        if self.n_warmup < 0 or self.n_sweeps < 1:
            raise ValueError("sweep counts out of range")
        if self.meas_interval < 1:
            raise ValueError("meas_interval must be >= 1")
        if self.n_stab < 1:
            raise ValueError("n_stab must be >= 1")
        if self.drift_tol <= 0:
            raise ValueError("drift_tol must be positive")


@dataclass(frozen=True)
class RatioSample:
    """One measured weight ratio and the fingerprint of the config it came from."""

    value: float
    fingerprint: str


@dataclass
class ChainResult:
    """Samples and diagnostics of one chain at one coupling step."""

    kind: str
    factor_index: int
    coupling_lo: float
    coupling_hi: float
    seed_key: tuple
    samples: list = field(default_factory=list)
    accepted: int = 0
    proposed: int = 0
    max_drift: float = 0.0

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposed if self.proposed else 0.0

    @property
    def values(self):
        return np.array([s.value for s in self.samples])


def sweep(green, config, props, lam, rng, n_stab=bss.DEFAULT_N_STAB,
          drift_tol=bss.DEFAULT_DRIFT_TOL):
    """One full sweep: every (slice, site) in slice-major order.

    Starts and ends with ``green`` wrapped to slice 0; the Green's function
    is rebuilt from scratch every ``n_stab`` wraps.  Returns the number of
    accepted flips.
    """
    if green.slice_index != 0:
        raise ValueError("sweep expects the Green's function wrapped to slice 0")
    accepted = 0
    for l in range(config.n_t):
        for x in range(config.volume):
            s_old = int(config.s[l, x])
            ratio, _ = bss.flip_ratio(green, s_old, lam, x)
            if rng.random() < ratio:
                bss.apply_flip(green, s_old, lam, x)
                config.flip(l, x)
                accepted += 1
        bss.wrap(green, config, props, lam)
        if green.wraps_since_rebuild >= n_stab:
            bss.restabilize(green, config, props, lam, n_stab, drift_tol)
    return accepted


def measure_ratio(config, props_lo, lam_lo, props_hi, lam_hi,
                  n_stab=bss.DEFAULT_N_STAB):
    """Weight ratio lo/hi of the current configuration, both from scratch.

    The "hi" weight is recomputed rather than carried through the fast
    updates, so a measurement can never inherit accumulated update error.  A
    zero-weight numerator gives a ratio of exactly 0; a zero-weight
    denominator cannot occur for a sampled configuration and raises.
    """
    lw_lo = bss.log_weight(config, props_lo, lam_lo, n_stab)
    lw_hi = bss.log_weight(config, props_hi, lam_hi, n_stab)
    if not np.isfinite(lw_hi):
        raise NumericalError(
            "sampled configuration has zero weight at its own coupling",
            log_det=lw_hi,
        )
    value = float(np.exp(lw_lo - lw_hi)) if np.isfinite(lw_lo) else 0.0
    return RatioSample(value=value, fingerprint=config.fingerprint())


def coupling_steps(params, kind, factor_index):
    """(lo, hi) coupling values of ratio factor ``factor_index``.

    Echo interpolates the field coupling from 0 to its physical value,
    purity interpolates the hopping from 0 to ``params.w``, both in
    ``params.n_ratio`` equal steps.
    """
    if not (0 <= factor_index < params.n_ratio):
        raise ValueError(f"factor index {factor_index} outside [0, {params.n_ratio})")
    if kind == "echo":
        step = params.d_lambda
    elif kind == "purity":
        step = params.d_w
    else:
        raise ValueError(f"kind must be 'echo' or 'purity', got {kind!r}")
    return factor_index * step, (factor_index + 1) * step


def run_chain(settings, adj, params, factor_index, kind, seed_key):
    """Equilibrate and measure one chain; deterministic given ``seed_key``."""
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_key)))
    lo, hi = coupling_steps(params, kind, factor_index)
    if kind == "echo":
        props_hi = bss.make_propagators(adj, params.w, params.dt, params.n_t, kind)
        props_lo = props_hi
        lam_lo, lam_hi = lo, hi
    else:
        props_hi = bss.make_propagators(adj, hi, params.dt, params.n_t, kind)
        props_lo = bss.make_propagators(adj, lo, params.dt, params.n_t, kind)
        lam_lo = lam_hi = params.lam

    volume = adj.shape[0]
    config = FieldConfig.random(params.n_t, volume, rng)
    green = bss.green_from_scratch(config, props_hi, lam_hi, 0, settings.n_stab)
    result = ChainResult(
        kind=kind,
        factor_index=factor_index,
        coupling_lo=lo,
        coupling_hi=hi,
        seed_key=tuple(seed_key),
    )

    for _ in range(settings.n_warmup):
        result.accepted += sweep(
            green, config, props_hi, lam_hi, rng, settings.n_stab, settings.drift_tol
        )
        result.proposed += params.n_t * volume
    for i in range(settings.n_sweeps):
        result.accepted += sweep(
            green, config, props_hi, lam_hi, rng, settings.n_stab, settings.drift_tol
        )
        result.proposed += params.n_t * volume
        if (i + 1) % settings.meas_interval == 0:
            result.samples.append(
                measure_ratio(config, props_lo, lam_lo, props_hi, lam_hi, settings.n_stab)
            )
    result.max_drift = green.max_drift
    logger.debug(
        "chain %s factor %d: acceptance %.3f, drift %.2e, %d samples",
        kind, factor_index, result.acceptance_rate, result.max_drift,
        len(result.samples),
    )
    return result
