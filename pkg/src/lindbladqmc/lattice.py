"""Periodic square-lattice geometry.

Sites are indexed row-major, ``index = x + lx * y``, and every module that
needs coordinates goes through :func:`site_index` / :func:`site_coords` so the
ordering is defined in exactly one place.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic rectangular lattice, ``lx * ly`` sites."""

    lx: int
    ly: int

    def __post_init__(self):
        if self.lx < 2 or self.ly < 2:
            raise ConfigError(f"lattice extents must be >= 2, got {self.lx}x{self.ly}")

    @property
    def volume(self):
        return self.lx * self.ly


def site_index(x, y, spec):
    """Row-major site index of coordinates ``(x, y)``."""
    if not (0 <= x < spec.lx and 0 <= y < spec.ly):
        raise ValueError(f"coordinates ({x}, {y}) outside {spec.lx}x{spec.ly} lattice")
    return x + spec.lx * y


def site_coords(index, spec):
    """Inverse of :func:`site_index`."""
    if not (0 <= index < spec.volume):
        raise ValueError(f"site index {index} outside lattice of volume {spec.volume}")
    return index % spec.lx, index // spec.lx


def adjacency_matrix(spec):
    """Symmetric hopping multiplicity matrix of the periodic lattice.

    Each site is summed over its +x and +y neighbours, so for an extent of 2
    the wrapped bond is counted from both ends and the entry is 2.
    """
    v = spec.volume
    adj = np.zeros((v, v), dtype=np.float64)
    for y in range(spec.ly):
        for x in range(spec.lx):
            i = site_index(x, y, spec)
            jx = site_index((x + 1) % spec.lx, y, spec)
            jy = site_index(x, (y + 1) % spec.ly, spec)
            adj[i, jx] += 1.0
            adj[jx, i] += 1.0
            adj[i, jy] += 1.0
            adj[jy, i] += 1.0
    return adj
