"""Periodic hypercubic lattices, the lattice Laplacian and its momentum spectrum.

Sites are numbered lexicographically in their coordinates with the first
coordinate varying slowest, so site 0 is the origin.  The Laplacian is stored
with the positive semidefinite sign convention, ``-Delta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Lattice:
    """A ``d``-dimensional periodic lattice of linear size ``L``.

    ``neighbors[x, 2*mu]`` is ``x + e_mu`` and ``neighbors[x, 2*mu + 1]`` is
    ``x - e_mu``.  For ``L == 2`` both slots of a direction hold the same site,
    so the neighbor relation is a multigraph with double bonds.
    """

    d: int
    L: int
    coords: np.ndarray = field(repr=False, compare=False)
    neighbors: np.ndarray = field(repr=False, compare=False)

    @property
    def V(self) -> int:
        return self.L**self.d

    @property
    def n_slots(self) -> int:
        return 2 * self.d

    def site(self, coord) -> int:
        """Index of the site with the given coordinate (taken mod ``L``)."""
        c = np.mod(np.asarray(coord, dtype=int), self.L)
        return int(np.ravel_multi_index(tuple(c), (self.L,) * self.d))

    def translate(self, x: int, shift) -> int:
        return self.site(self.coords[x] + np.asarray(shift, dtype=int))

    def displacement_index(self, x, y):
        """Site index of the displacement ``y - x`` (vectorised)."""
        diff = np.mod(self.coords[np.asarray(y)] - self.coords[np.asarray(x)], self.L)
        return np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), (self.L,) * self.d)

    @cached_property
    def displacement_table(self) -> np.ndarray:
        """``table[x, y]`` = site index of ``y - x``."""
        x = np.arange(self.V)
        return self.displacement_index(x[:, None], x[None, :])

    @cached_property
    def bonds(self) -> np.ndarray:
        """Forward bonds ``(x, x + e_mu)``, one row per ``(x, mu)``.

        Every bond of the multigraph appears exactly once; for ``L == 2`` the
        pair ``{x, y}`` appears twice (once from each end), which is its
        multiplicity.
        """
        out = np.empty((self.V * self.d, 2), dtype=np.int64)
        out[:, 0] = np.repeat(np.arange(self.V), self.d)
        out[:, 1] = self.neighbors[:, 0::2].ravel()
        return out


def build_lattice(d: int, L: int) -> Lattice:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    if int(L) != L or L < 2:
        raise ValueError(f"linear size must be an integer >= 2, got {L!r}")
    d, L = int(d), int(L)
    V = L**d
    coords = np.stack(np.unravel_index(np.arange(V), (L,) * d), axis=1).astype(np.int64)
    neighbors = np.empty((V, 2 * d), dtype=np.int64)
    for mu in range(d):
        for k, step in enumerate((1, -1)):
            shifted = coords.copy()
            shifted[:, mu] = (shifted[:, mu] + step) % L
            neighbors[:, 2 * mu + k] = np.ravel_multi_index(tuple(shifted.T), (L,) * d)
    coords.setflags(write=False)
    neighbors.setflags(write=False)
    return Lattice(d=d, L=L, coords=coords, neighbors=neighbors)


def laplacian(lat: Lattice) -> np.ndarray:
    """Return ``-Delta`` as a dense ``V x V`` integer-valued float matrix.

    Diagonal entries are ``2d``; an off-diagonal entry is minus the number of
    neighbor slots joining the two sites (``-2`` for the double bonds at
    ``L == 2``).
    """
    V = lat.V
    out = np.zeros((V, V))
    out[np.arange(V), np.arange(V)] = 2 * lat.d
    rows = np.repeat(np.arange(V), lat.n_slots)
    np.add.at(out, (rows, lat.neighbors.ravel()), -1.0)
    return out


@dataclass(frozen=True)
class MomentumSpectrum:
    momenta: np.ndarray  # (V, d), p = 2 pi n / L with n_mu in 0..L-1
    energies: np.ndarray  # (V,), E_p = 2d - 2 sum_mu cos p_mu


def _energy_grid(d: int, L: int) -> np.ndarray:
    e1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(L) / L)
    grid = np.zeros((L,) * d)
    for mu in range(d):
        shape = [1] * d
        shape[mu] = L
        grid = grid + e1.reshape(shape)
    return grid.ravel()


def momentum_spectrum(lat: Lattice) -> MomentumSpectrum:
    """Enumerate the ``V`` lattice momenta in site order and their energies.

    Momentum ``k`` has the integer label ``coords[k]``, so ``E[0] == 0`` is the
    zero mode.
    """
    momenta = 2.0 * np.pi * lat.coords / lat.L
    return MomentumSpectrum(momenta=momenta, energies=_energy_grid(lat.d, lat.L))


def softest_energy(L: int) -> float:
    """Smallest nonzero ``E_p``, ``4 sin^2(pi / L)``."""
    return 4.0 * np.sin(np.pi / L) ** 2
