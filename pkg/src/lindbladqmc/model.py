"""Model parameters and the discrete auxiliary-field transformation.

The dissipative hopping model is simulated in imaginary time: the evolution
over ``t`` is split into ``n_t`` slices of width ``dt``, and on every slice
the on-site coupling between the two fermion species is decoupled by a
two-valued auxiliary field ``s = +/-1`` per site,

.. math::

    e^{\\Delta t \\gamma (n^c - 1/2)(n^d - 1/2)}
        = \\tfrac{1}{2} e^{-\\gamma \\Delta t / 4}
          \\sum_{s = \\pm 1} e^{s \\lambda (n^c + n^d - 1)},
    \\qquad \\cosh \\lambda = e^{\\gamma \\Delta t / 2}.

All weights produced from this identity are non-negative, which is what makes
the Monte Carlo sampling sign-free.
"""

from dataclasses import dataclass, field
from hashlib import sha1

import numpy as np


def lambda_from_gamma(gamma_dt):
    """Auxiliary-field coupling from ``gamma * dt``.

    Solves ``cosh(lam) = exp(gamma_dt / 2)``; for small arguments
    ``lam -> sqrt(gamma_dt)``.
    """
    if gamma_dt < 0:
        raise ValueError(f"gamma * dt must be non-negative, got {gamma_dt}")
    return float(np.arccosh(np.exp(gamma_dt / 2.0)))


def hs_identity_residual(nc, nd, gamma_dt):
    """Absolute residual of the field-decoupling identity at occupations (nc, nd)."""
    lam = lambda_from_gamma(gamma_dt)
    lhs = np.exp(gamma_dt * (nc - 0.5) * (nd - 0.5))
    rhs = 0.5 * np.exp(-gamma_dt / 4.0) * (
        np.exp(lam * (nc + nd - 1)) + np.exp(-lam * (nc + nd - 1))
    )
    return float(abs(lhs - rhs))


@dataclass(frozen=True)
class ModelParams:
    """Physical and discretization parameters of one time point.

    ``w`` is the hopping rate, ``gamma`` the jump rate, ``dt`` the slice
    width, ``n_t`` the slice count and ``n_ratio`` the number of coupling
    steps used by the ratio estimator.
    """

    w: float
    gamma: float
    dt: float
    n_t: int
    n_ratio: int = 32

    def __post_init__(self):
        if self.w < 0:
            raise ValueError(f"hopping w must be non-negative, got {self.w}")
        if self.gamma < 0:
            raise ValueError(f"jump rate gamma must be non-negative, got {self.gamma}")
        if self.dt <= 0:
            raise ValueError(f"slice width dt must be positive, got {self.dt}")
        if self.n_t < 1:
            raise ValueError(f"slice count n_t must be >= 1, got {self.n_t}")
        if self.n_ratio < 1:
            raise ValueError(f"n_ratio must be >= 1, got {self.n_ratio}")

    @property
    def t(self):
        return self.n_t * self.dt

    @property
    def gamma_dt(self):
        return self.gamma * self.dt

    @property
    def lam(self):
        return lambda_from_gamma(self.gamma_dt)

    @property
    def d_lambda(self):
        return self.lam / self.n_ratio

    @property
    def d_w(self):
        return self.w / self.n_ratio


def log_normalization(params, volume):
    """Log of the constant prefactor collected by the field decoupling.

    Per slice and site the identity contributes ``exp(-gamma dt / 2) / 2``,
    i.e. ``1 / (2 cosh lam)``, so the total is
    ``n_t * volume * (-gamma dt / 2 - ln 2)``.
    """
    return params.n_t * volume * (-params.gamma_dt / 2.0 - np.log(2.0))


def log_normalization_at(lam, n_t, volume):
    """Same prefactor expressed through the coupling ``lam`` itself.

    Used when the coupling is scanned away from its physical value; at
    ``lam = lambda_from_gamma(gamma * dt)`` it agrees with
    :func:`log_normalization` because ``ln(2 cosh lam) = gamma dt / 2 + ln 2``.
    """
    return -n_t * volume * float(np.log(2.0 * np.cosh(lam)))


@dataclass
class FieldConfig:
    """Auxiliary-field configuration, one sign per (slice, site).

    ``spin_sum`` caches the total sign sum entering the weight and is kept
    in sync by :meth:`flip`.
    """

    s: np.ndarray
    spin_sum: int = field(init=False)

    def __post_init__(self):
        self.s = np.ascontiguousarray(self.s, dtype=np.int8)
        if self.s.ndim != 2:
            raise ValueError("field configuration must be 2d (n_t, volume)")
        if not np.all(np.abs(self.s) == 1):
            raise ValueError("field entries must be +/-1")
        self.spin_sum = int(self.s.sum())

    @property
    def n_t(self):
        return self.s.shape[0]

    @property
    def volume(self):
        return self.s.shape[1]

    @classmethod
    def random(cls, n_t, volume, rng):
        s = rng.integers(0, 2, size=(n_t, volume)).astype(np.int8) * 2 - 1
        return cls(s)

    def flip(self, slice_index, site):
        old = int(self.s[slice_index, site])
        self.s[slice_index, site] = -old
        self.spin_sum -= 2 * old

    def copy(self):
        return FieldConfig(self.s.copy())

    def fingerprint(self):
        return sha1(self.s.tobytes()).hexdigest()
