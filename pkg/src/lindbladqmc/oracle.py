"""Dense reference solvers on the doubled Fock space.

The master equation for the density matrix is vectorized: a copy of the
lattice fermions (``c``, modes ``0 .. volume-1``) carries the ket index and a
second copy (``d``, modes ``volume .. 2*volume-1``) the bra index.  A basis
state of the doubled space is encoded as an integer whose bit ``p`` is the
occupation of mode ``p``, so the vectorized density matrix lives at
``index = row_bits + (col_bits << volume)``.

In this representation the generator of the evolution splits into

* a quadratic part ``K`` = ``-i w`` (hopping of ``c``) ``+ i w`` (hopping of
  ``d``), and
* a diagonal part ``U`` = ``gamma * sum_x [(n^c_x - 1/2)(n^d_x - 1/2) - 1/4]``
  from the number-operator jumps.

Everything here is exact diagonalization / dense matrix exponentials and is
deliberately independent of the determinant code, except for
:func:`brute_force_hs` whose entire point is to cross-check the determinant
weights by exhaustive summation over the auxiliary fields.

Sizes are capped hard: these solvers exist to arbitrate formulas, not to
scale.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .errors import SizeCapError
from .lattice import adjacency_matrix
from .model import FieldConfig

MAX_DENSE_SITES = 6
MAX_BRUTE_FIELDS = 20


@dataclass
class FockOperators:
    """Annihilation operators for ``n_modes`` fermionic modes.

    Jordan-Wigner convention: bit ``p`` of the basis index is the occupation
    of mode ``p`` and the sign string counts occupied modes below ``p``.
    """

    n_modes: int
    dim: int
    lowering: list

    @classmethod
    def build(cls, n_modes):
        dim = 1 << n_modes
        states = np.arange(dim, dtype=np.int64)
        ops = []
        for p in range(n_modes):
            occupied = ((states >> p) & 1) == 1
            cols = states[occupied]
            rows = cols ^ (1 << p)
            # parity of occupied modes below p
            signs = 1.0 - 2.0 * (np.bitwise_count(cols & ((1 << p) - 1)) % 2)
            mat = sp.csr_matrix((signs, (rows, cols)), shape=(dim, dim))
            ops.append(mat)
        return cls(n_modes=n_modes, dim=dim, lowering=ops)

    def raising(self, p):
        return self.lowering[p].conj().T.tocsr()

    def occupation_diagonal(self, p):
        states = np.arange(self.dim, dtype=np.int64)
        return ((states >> p) & 1).astype(np.float64)

    def quadratic(self, mat):
        """Sparse matrix of ``sum_ab mat[a, b] raising(a) lowering(b)``."""
        mat = np.asarray(mat)
        if mat.shape != (self.n_modes, self.n_modes):
            raise ValueError("coefficient matrix has wrong shape")
        out = sp.csr_matrix((self.dim, self.dim), dtype=np.complex128)
        for a, b in zip(*np.nonzero(mat)):
            out = out + mat[a, b] * (self.raising(a) @ self.lowering[b])
        return out


@dataclass
class LiouvillianMatrix:
    """Vectorized generator: quadratic part plus diagonal jump part."""

    kinetic: sp.csr_matrix
    potential_diag: np.ndarray
    volume: int

    @property
    def dim(self):
        return self.kinetic.shape[0]

    def dense(self):
        return self.kinetic.toarray() + np.diag(self.potential_diag.astype(np.complex128))

    def dense_kinetic(self):
        return self.kinetic.toarray()


def liouvillian_from_adjacency(adj, w, gamma):
    """Build the vectorized generator from an explicit hopping matrix.

    Exists separately from :func:`build_liouvillian` so degenerate geometries
    (single site, zero hopping) can be exercised in tests.
    """
    adj = np.asarray(adj, dtype=np.float64)
    volume = adj.shape[0]
    if volume > MAX_DENSE_SITES:
        raise SizeCapError(
            f"dense reference solver capped at {MAX_DENSE_SITES} sites, got {volume}"
        )
    ops = FockOperators.build(2 * volume)
    coeff = np.zeros((2 * volume, 2 * volume), dtype=np.complex128)
    coeff[:volume, :volume] = -1j * w * adj
    coeff[volume:, volume:] = +1j * w * adj
    kinetic = ops.quadratic(coeff)

    states = np.arange(ops.dim, dtype=np.int64)
    potential = np.zeros(ops.dim, dtype=np.float64)
    for x in range(volume):
        occ_c = ((states >> x) & 1).astype(np.float64)
        occ_d = ((states >> (volume + x)) & 1).astype(np.float64)
        potential += gamma * ((occ_c - 0.5) * (occ_d - 0.5) - 0.25)
    return LiouvillianMatrix(kinetic=kinetic.tocsr(), potential_diag=potential, volume=volume)


def build_liouvillian(spec, params):
    """Vectorized generator for the periodic lattice of ``spec``."""
    return liouvillian_from_adjacency(adjacency_matrix(spec), params.w, params.gamma)


def vectorize_density_matrix(rho, volume):
    """Flatten a density matrix into the doubled-space index convention."""
    dim = 1 << volume
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (dim, dim):
        raise ValueError("density matrix has wrong shape")
    vec = np.zeros(dim * dim, dtype=np.complex128)
    for i in range(dim):
        for j in range(dim):
            vec[i + (j << volume)] = rho[i, j]
    return vec


def trace_of_vectorized(vec, volume):
    dim = 1 << volume
    idx = np.arange(dim) + (np.arange(dim) << volume)
    return complex(vec[idx].sum())


def exact_fidelities(spec, params):
    """Exact (echo, purity) traces at ``t = params.t`` via dense expm."""
    liou = build_liouvillian(spec, params)
    evolved = expm(liou.dense() * params.t)
    purity = complex(np.trace(evolved))
    reverse = expm(-liou.dense_kinetic() * params.t)
    echo = complex(np.trace(reverse @ evolved))
    return echo, purity


def trotter_trace(spec, params, kind):
    """Trace of the slice-split evolution, exact in everything but ``dt``.

    The first-order splitting applies the quadratic factor before the
    diagonal factor on every slice, matching the factor order of the
    determinant chain; for ``kind='echo'`` the reversed quadratic evolution
    over the full interval multiplies from the left.
    """
    if kind not in ("echo", "purity"):
        raise ValueError(f"kind must be 'echo' or 'purity', got {kind!r}")
    liou = build_liouvillian(spec, params)
    kin = liou.dense_kinetic()
    step = expm(kin * params.dt) * np.exp(liou.potential_diag * params.dt)[None, :]
    chain = np.linalg.matrix_power(step, params.n_t)
    if kind == "echo":
        chain = expm(-kin * params.t) @ chain
    return complex(np.trace(chain))


def brute_force_hs(spec, params, kind, weight_fn=None):
    """Exhaustive sum of determinant weights over all field configurations.

    Must reproduce :func:`trotter_trace` to near machine precision at any
    ``dt``: the auxiliary-field decoupling is exact slice by slice, so the
    only discrepancy allowed is roundoff.  ``weight_fn`` is injectable so the
    release checks can verify that a deliberately corrupted weight breaks the
    agreement.
    """
    from .bss import log_weight, make_propagators

    if weight_fn is None:
        weight_fn = log_weight
    volume = spec.volume
    n_fields = params.n_t * volume
    if n_fields > MAX_BRUTE_FIELDS:
        raise SizeCapError(
            f"brute-force field sum capped at {MAX_BRUTE_FIELDS} fields, got {n_fields}"
        )
    props = make_propagators(
        adjacency_matrix(spec), params.w, params.dt, params.n_t, kind
    )
    total = 0.0
    for signs in itertools.product((1, -1), repeat=n_fields):
        s = np.array(signs, dtype=np.int8).reshape(params.n_t, volume)
        lw = weight_fn(FieldConfig(s), props, params.lam)
        total += float(np.exp(lw))
    return total
