"""Periodic grids, complex lattice fields, and multi-component states.

All spatial discretization lives here: uniform periodic lattices on
[0, L_1) x ... x [0, L_d), unitary Fourier transforms (Parseval scaling, so
L2 norms agree between the physical and spectral views), and the value
semantics shared by every downstream module: operations never mutate their
inputs, grids are immutable and freely shareable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on the box [0, L_1) x ... x [0, L_d).

    Wavenumbers are the angular frequencies 2*pi*n/L_j per axis in FFT
    ordering; the set is symmetric about zero except for the single
    unpaired Nyquist mode on each axis.
    """

    dim: int
    npts: tuple[int, ...]
    lengths: tuple[float, ...]

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.npts)

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.npts))

    @cached_property
    def dv(self) -> float:
        """Volume of one lattice cell."""
        return float(np.prod([L / n for L, n in zip(self.lengths, self.npts)]))

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def k_axes(self) -> tuple[np.ndarray, ...]:
        """Per-axis angular wavenumbers in FFT ordering."""
        return tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
            for n, L in zip(self.npts, self.lengths)
        )

    @cached_property
    def x_axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.arange(n) * (L / n) for n, L in zip(self.npts, self.lengths)
        )

    @cached_property
    def k_mesh(self) -> tuple[np.ndarray, ...]:
        """Open (broadcastable) meshgrid of wavenumbers."""
        return tuple(np.meshgrid(*self.k_axes, indexing="ij", sparse=True))

    @cached_property
    def x_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.x_axes, indexing="ij", sparse=True))

    @cached_property
    def k_squared(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for km in self.k_mesh:
            out = out + km**2
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes whose index hits the unpaired Nyquist frequency."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, n in enumerate(self.npts):
            idx = [slice(None)] * self.dim
            idx[ax] = n // 2
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask: keep |mode index| <= floor(n/3) per axis."""
        keep = np.ones(self.shape, dtype=bool)
        for ax, n in enumerate(self.npts):
            idx = np.abs(np.fft.fftfreq(n) * n)
            ax_keep = idx <= n // 3
            shape = [1] * self.dim
            shape[ax] = n
            keep &= ax_keep.reshape(shape)
        return keep

    @cached_property
    def _fft_scale(self) -> float:
        # Parseval-unitary scaling: sum_k |f_hat|^2 == sum_x |f|^2 * dv.
        return float(np.sqrt(self.dv / self.size))

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        """Forward transform (unitary). Works on (..., *shape) arrays."""
        axes = tuple(range(values.ndim - self.dim, values.ndim))
        return np.fft.fftn(values, axes=axes) * self._fft_scale

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        axes = tuple(range(coeffs.ndim - self.dim, coeffs.ndim))
        return np.fft.ifftn(coeffs / self._fft_scale, axes=axes)


def make_grid(dim: int, points_per_axis, lengths) -> Grid:
    """Build a periodic grid, rejecting odd or tiny sizes and bad lengths."""
    points = tuple(int(n) for n in np.atleast_1d(points_per_axis))
    lens = tuple(float(L) for L in np.atleast_1d(lengths))
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if len(points) != dim or len(lens) != dim:
        raise ValueError("points_per_axis and lengths must have one entry per axis")
    for n in points:
        if n < 4:
            raise ValueError(f"grid needs at least 4 points per axis, got {n}")
        if n % 2 != 0:
            raise ValueError(f"points per axis must be even, got {n}")
    for L in lens:
        if L <= 0:
            raise ValueError(f"axis lengths must be positive, got {L}")
    return Grid(dim=dim, npts=points, lengths=lens)


@dataclass
class Field:
    """Complex scalar function on a grid, stored in physical space."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    @property
    def spectral(self) -> np.ndarray:
        return self.grid.to_spectral(self.values)

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray) -> "Field":
        return cls(grid, grid.to_physical(np.asarray(coeffs, dtype=complex)))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dv))

    def inner(self, other: "Field") -> complex:
        """L2 pairing int f * conj(g) dx."""
        return complex(np.sum(self.values * np.conj(other.values)) * self.grid.dv)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def __add__(self, other):
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, Field):
            return Field(self.grid, self.values * c.values)
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


@dataclass
class State:
    """Ordered bundle of components on a shared grid.

    Stored as one (s, *grid.shape) complex array so spectral operators can
    act on all components at once. ``component(i)`` returns a Field view.
    """

    grid: Grid
    data: np.ndarray
    roles: tuple[str, ...]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (len(self.roles),) + self.grid.shape:
            raise ValueError(
                f"state shape {self.data.shape} incompatible with "
                f"{len(self.roles)} roles on grid {self.grid.shape}"
            )

    @property
    def n_components(self) -> int:
        return len(self.roles)

    def component(self, i) -> Field:
        if isinstance(i, str):
            i = self.roles.index(i)
        return Field(self.grid, self.data[i])

    @classmethod
    def from_fields(cls, fields, roles=None) -> "State":
        grid = fields[0].grid
        roles = tuple(roles) if roles else tuple(f"c{i}" for i in range(len(fields)))
        data = np.stack([f.values for f in fields])
        return cls(grid, data, roles)

    @classmethod
    def zeros(cls, grid: Grid, roles) -> "State":
        roles = tuple(roles)
        return cls(grid, np.zeros((len(roles),) + grid.shape, dtype=complex), roles)

    def spectral(self) -> np.ndarray:
        return self.grid.to_spectral(self.data)

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray, roles) -> "State":
        return cls(grid, grid.to_physical(coeffs), tuple(roles))

    def copy(self) -> "State":
        return State(self.grid, self.data.copy(), self.roles)

    def norm_plain(self) -> float:
        """Unweighted L2 norm over all components."""
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.grid.dv))

    def times_field(self, values: np.ndarray) -> "State":
        """Pointwise multiplication of every component by a scalar field."""
        return State(self.grid, self.data * values, self.roles)

    def __add__(self, other):
        return State(self.grid, self.data + other.data, self.roles)

    def __sub__(self, other):
        return State(self.grid, self.data - other.data, self.roles)

    def __mul__(self, c):
        return State(self.grid, self.data * c, self.roles)

    __rmul__ = __mul__

    def __neg__(self):
        return State(self.grid, -self.data, self.roles)
