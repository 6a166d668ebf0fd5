"""Stabilized determinant machinery for the auxiliary-field chains.

Conventions
-----------
After the field decoupling, one species of the doubled system contributes the
determinant ``det(1 + bnd * B_0 * B_1 * ... * B_{n_t-1})`` with per-slice
matrices

.. math::

    B_l = e^{K \\Delta t} \\, \\mathrm{diag}(e^{\\lambda s_{l}}),
    \\qquad K = -i w A,

where ``A`` is the hopping multiplicity matrix.  The boundary matrix ``bnd``
is the identity for the purity kind and the reversed full-interval hopping
``exp(+i w t A)`` for the echo kind.  The second species is the complex
conjugate of the first, so the total weight is

.. math::

    \\ln w(s) = \\ln N - \\lambda \\sum s
               + 2 \\, \\mathrm{Re} \\ln \\det(1 + bnd \\, B_\\uparrow),

manifestly non-negative.  ``ln N`` is the decoupling prefactor
``-n_t V \\ln(2 \\cosh \\lambda)``.

For local updates at slice ``l`` the chain is rotated cyclically so that
slice ``l`` is the rightmost factor,

.. math::

    C(l) = B_{l+1} \\cdots B_{n_t-1} \\; bnd \\; B_0 \\cdots B_l,
    \\qquad G(l) = [1 + C(l)]^{-1}.

Flipping ``s_{l, x}`` multiplies ``C(l)`` from the right by
``1 + \\Delta e_x e_x^T`` with ``\\Delta = e^{-2 \\lambda s_{l,x}} - 1``, so
the determinant ratio is ``R = 1 + \\Delta (1 - G_{xx})``, the weight ratio is
``e^{2 \\lambda s_{l,x}} |R|^2``, and the accepted update is the rank-1
Sherman-Morrison formula ``G <- G - (\\Delta / R) (e_x - G e_x)(e_x^T G)``.
Moving to the next slice conjugates ``G`` by ``B_{l+1}`` (with ``bnd``
attached when crossing the chain boundary back to slice 0).

Long chains are kept numerically sane with the usual column-pivoted QR
factorization ``U D T`` (``U`` unitary, ``D`` positive diagonal carrying the
scales, ``T`` well conditioned), refreshed every ``n_stab`` factors; the
inverse and log-determinant are assembled through the big/small split of
``D`` so no ill-conditioned matrix is ever formed or inverted directly.
"""

import logging

import numpy as np
import scipy.linalg as la

from .errors import NumericalError, StabilizationError

logger = logging.getLogger("lindbladqmc")

DEFAULT_N_STAB = 10
DEFAULT_DRIFT_TOL = 1e-6


def exp_hopping(adj, theta):
    """Dense ``exp(-i theta A)`` for a real symmetric hopping matrix ``A``."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("hopping matrix must be square")
    if not np.array_equal(adj, adj.T):
        raise ValueError("hopping matrix must be symmetric")
    evals, evecs = np.linalg.eigh(adj)
    return (evecs * np.exp(-1j * theta * evals)[None, :]) @ evecs.T


class SlicePropagators:
    """Fixed per-chain matrices: slice hopping factor and boundary.

    ``exp_k`` and ``boundary`` are unitary symmetric functions of the same
    hopping matrix, so they commute and elementwise conjugation inverts them
    and their product.
    """

    def __init__(self, exp_k, boundary, kind, n_t):
        self.exp_k = exp_k
        self.exp_k_conj = exp_k.conj()
        self.boundary = boundary
        self.boundary_conj = boundary.conj()
        self.boundary_exp_k = boundary @ exp_k
        self.boundary_exp_k_conj = self.boundary_exp_k.conj()
        self.kind = kind
        self.n_t = n_t

    @property
    def volume(self):
        return self.exp_k.shape[0]

    def conjugate_species(self):
        """Propagators of the conjugate species, for independent cross-checks."""
        return SlicePropagators(
            self.exp_k_conj.copy(), self.boundary_conj.copy(), self.kind, self.n_t
        )


def make_propagators(adj, w, dt, n_t, kind):
    """Build :class:`SlicePropagators` for one chain.

    ``kind='purity'`` uses an identity boundary; ``kind='echo'`` closes the
    chain with the reversed hopping evolution over the whole interval.
    """
    if kind not in ("echo", "purity"):
        raise ValueError(f"kind must be 'echo' or 'purity', got {kind!r}")
    adj = np.asarray(adj, dtype=np.float64)
    exp_k = exp_hopping(adj, w * dt)
    if kind == "echo":
        boundary = exp_hopping(adj, -w * n_t * dt)
    else:
        boundary = np.eye(adj.shape[0], dtype=np.complex128)
    return SlicePropagators(exp_k, boundary, kind, n_t)


def _slice_matrix(config, props, lam, l):
    return props.exp_k * np.exp(lam * config.s[l])[None, :]


def _iter_factors_reversed(config, props, lam, last_slice, include_boundary=True):
    """Yield the rotated chain's factors from rightmost to leftmost.

    The boundary matrix sits between slice ``n_t - 1`` and slice 0 in cyclic
    order, i.e. it follows slice 0 in the reversed traversal.
    """
    n_t = config.n_t
    for k in range(n_t):
        l = (last_slice - k) % n_t
        yield _slice_matrix(config, props, lam, l)
        if l == 0 and include_boundary:
            yield props.boundary


def udt_accumulate(factors_reversed, dim, n_stab=DEFAULT_N_STAB):
    """Column-pivoted QR factorization ``U D T`` of a matrix product.

    Consumes the factors from rightmost to leftmost, refreshing the
    factorization every ``n_stab`` factors so intermediate products never
    build up a large dynamic range.
    """
    unit = np.eye(dim, dtype=np.complex128)
    u = unit
    d = np.ones(dim)
    t = unit
    buffer = unit
    pending = 0

    def absorb():
        nonlocal u, d, t, buffer, pending
        m = (buffer @ u) * d[None, :]
        q, r, piv = la.qr(m, mode="economic", pivoting=True)
        d_new = np.abs(np.diag(r))
        if not np.all(d_new > 0.0):
            raise NumericalError("chain factorization became singular", log_det=-np.inf)
        t_part = np.empty_like(r)
        t_part[:, piv] = r / d_new[:, None]
        u = q
        d = d_new
        t = t_part @ t
        buffer = unit
        pending = 0

    for f in factors_reversed:
        buffer = f @ buffer
        pending += 1
        if pending >= n_stab:
            absorb()
    if pending:
        absorb()
    return u, d, t


def build_chain(config, props, lam, n_stab=DEFAULT_N_STAB):
    """Stabilized ``U D T`` factorization of the bare product ``B_0 ... B_{n_t-1}``."""
    factors = _iter_factors_reversed(
        config, props, lam, config.n_t - 1, include_boundary=False
    )
    return udt_accumulate(factors, props.volume, n_stab)


def _green_logdet(u, d, t, want_green=True):
    """Inverse and log-determinant of ``1 + U D T`` via the big/small split.

    With ``D = D_b D_s`` (``D_b >= 1 >= D_s > 0``),

    ``1 + U D T = U D_b (D_b^{-1} U^+ + D_s T)``,

    so only the well-scaled inner matrix is ever solved or passed to a
    determinant.
    """
    d_big = np.maximum(d, 1.0)
    d_small = np.minimum(d, 1.0)
    uh = u.conj().T
    inner = uh / d_big[:, None] + d_small[:, None] * t
    sign_inner, logabs_inner = np.linalg.slogdet(inner)
    sign_u, logabs_u = np.linalg.slogdet(u)
    logabs = logabs_inner + logabs_u + np.log(d_big).sum()
    if not np.isfinite(logabs):
        if want_green:
            raise NumericalError(
                "singular chain matrix: zero-weight configuration", log_det=-np.inf
            )
        return None, complex(-np.inf, 0.0)
    phase = np.angle(sign_inner) + np.angle(sign_u)
    log_det = complex(logabs, phase)
    if not want_green:
        return None, log_det
    green = la.solve(inner, uh / d_big[:, None])
    return green, log_det


def log_weight(config, props, lam, n_stab=DEFAULT_N_STAB):
    """Log Monte Carlo weight of a field configuration (``-inf`` allowed).

    Combines the decoupling prefactor, the field sum and twice the real part
    of the log-determinant of ``1 + bnd * B``.
    """
    factors = _iter_factors_reversed(config, props, lam, config.n_t - 1)
    u, d, t = udt_accumulate(factors, props.volume, n_stab)
    _, log_det = _green_logdet(u, d, t, want_green=False)
    log_norm = -config.n_t * config.volume * float(np.log(2.0 * np.cosh(lam)))
    return log_norm - lam * config.spin_sum + 2.0 * log_det.real


class GreenState:
    """Equal-time Green's function of the rotated chain, plus bookkeeping."""

    def __init__(self, g, slice_index, log_det):
        self.g = g
        self.slice_index = slice_index
        self.log_det = log_det
        self.wraps_since_rebuild = 0
        self.max_drift = 0.0


def green_from_scratch(config, props, lam, slice_index=0, n_stab=DEFAULT_N_STAB):
    """Fresh ``G = [1 + C(slice_index)]^{-1}`` from the stabilized chain."""
    if not (0 <= slice_index < config.n_t):
        raise ValueError(f"slice index {slice_index} outside [0, {config.n_t})")
    factors = _iter_factors_reversed(config, props, lam, slice_index)
    u, d, t = udt_accumulate(factors, props.volume, n_stab)
    green, log_det = _green_logdet(u, d, t)
    return GreenState(green, slice_index, log_det)


def flip_ratio(green, s_old, lam, site):
    """Metropolis weight ratio and determinant ratio for one proposed flip."""
    delta = np.expm1(-2.0 * lam * s_old)
    det_ratio = 1.0 + delta * (1.0 - green.g[site, site])
    weight_ratio = np.exp(2.0 * lam * s_old) * abs(det_ratio) ** 2
    return weight_ratio, det_ratio


def apply_flip(green, s_old, lam, site):
    """Rank-1 update of ``G`` after an accepted flip at (current slice, site)."""
    delta = np.expm1(-2.0 * lam * s_old)
    det_ratio = 1.0 + delta * (1.0 - green.g[site, site])
    col = -green.g[:, site]
    col[site] += 1.0
    row = green.g[site, :]
    green.g -= (delta / det_ratio) * np.outer(col, row)
    green.log_det += np.log(det_ratio)


def wrap(green, config, props, lam):
    """Conjugate ``G`` to the next slice (cyclically, boundary attached at 0)."""
    nxt = (green.slice_index + 1) % config.n_t
    scale = np.exp(lam * config.s[nxt].astype(np.float64))
    if nxt == 0:
        w_mat = props.boundary_exp_k * scale[None, :]
        w_inv = (1.0 / scale)[:, None] * props.boundary_exp_k_conj
    else:
        w_mat = props.exp_k * scale[None, :]
        w_inv = (1.0 / scale)[:, None] * props.exp_k_conj
    green.g = w_inv @ green.g @ w_mat
    green.slice_index = nxt
    green.wraps_since_rebuild += 1


def restabilize(green, config, props, lam, n_stab=DEFAULT_N_STAB, drift_tol=DEFAULT_DRIFT_TOL):
    """Rebuild ``G`` from scratch, record the fast-update drift, reset counters."""
    rebuilt = green_from_scratch(config, props, lam, green.slice_index, n_stab)
    drift = float(np.max(np.abs(green.g - rebuilt.g)))
    green.max_drift = max(green.max_drift, drift)
    if drift > drift_tol:
        raise StabilizationError(
            f"Green's function drift {drift:.3e} exceeds tolerance {drift_tol:.3e}"
        )
    green.g = rebuilt.g
    green.log_det = rebuilt.log_det
    green.wraps_since_rebuild = 0
    return drift
