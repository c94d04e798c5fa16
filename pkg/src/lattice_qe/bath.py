"""Square-lattice bosonic bath: dispersion, momentum grid, mode transform, DOS.

Energies are measured from the band centre (rotating frame at the bare mode
frequency) and ``hbar = 1``, so the band occupies ``[-4J, 4J]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import special

__all__ = [
    "LatticeSpec",
    "KPoint",
    "dispersion",
    "dos",
    "dos_exact",
    "k_transform",
    "inverse_k_transform",
]


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic ``N x N`` lattice with nearest-neighbour hopping ``J``."""

    N: int
    J: float = 1.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N:
            raise ValueError(f"N must be an integer, got {self.N!r}")
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be even and >= 2, got {self.N}")
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "J", float(self.J))

    @property
    def k_values(self) -> np.ndarray:
        """1D momenta ``2*pi/N * (-N/2, ..., N/2 - 1)`` in ascending order."""
        return 2 * np.pi / self.N * np.arange(-self.N // 2, self.N // 2)

    def k_grid(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.k_values
        return np.meshgrid(k, k, indexing="ij")

    def dispersion_grid(self) -> np.ndarray:
        kx, ky = self.k_grid()
        return dispersion(self, kx, ky)

    @property
    def band_edge(self) -> float:
        return 4.0 * self.J

    @property
    def max_group_speed(self) -> float:
        return 2.0 * np.sqrt(2.0) * self.J

    @property
    def revival_time(self) -> float:
        """Earliest time at which periodic images can return to an emitter."""
        return self.N / self.max_group_speed

    def kpoint(self, ix: int, iy: int) -> "KPoint":
        """Grid point with integer indices in ``[-N/2, N/2)``."""
        half = self.N // 2
        if not (-half <= ix < half and -half <= iy < half):
            raise ValueError(f"k indices ({ix}, {iy}) outside [-{half}, {half})")
        step = 2 * np.pi / self.N
        return KPoint(ix * step, iy * step)

    def on_grid(self, kx, ky) -> bool:
        step = 2 * np.pi / self.N
        ix = np.asarray(kx) / step
        iy = np.asarray(ky) / step
        half = self.N // 2
        ok = np.isclose(ix, np.round(ix), atol=1e-9) & np.isclose(iy, np.round(iy), atol=1e-9)
        ok &= (np.round(ix) >= -half) & (np.round(ix) < half)
        ok &= (np.round(iy) >= -half) & (np.round(iy) < half)
        return bool(np.all(ok))


@dataclass(frozen=True)
class KPoint:
    kx: float
    ky: float


def dispersion(spec: LatticeSpec, kx, ky=None):
    """Band energy ``-2J (cos kx + cos ky)``.

    Accepts either a :class:`KPoint` or two broadcastable arrays.
    """
    if isinstance(kx, KPoint):
        kx, ky = kx.kx, kx.ky
    return -2.0 * spec.J * (np.cos(kx) + np.cos(ky))


def dos(spec: LatticeSpec, E: float, resolution: float, grid: int = 4096) -> float:
    """Histogram estimate of the infinite-lattice density of states at ``E``.

    Counts the points of a dense ``grid x grid`` momentum mesh whose energy
    falls in ``[E - resolution/2, E + resolution/2)`` and divides by the bin
    width, so the estimate integrates to one over any tiling of the band.
    The count is exact enumeration; it is done by sorting the 1D cosine table
    instead of materialising ``grid**2`` energies.

    Args:
        spec: Lattice (only ``J`` is used; the mesh size is ``grid``).
        E: Energy at the bin centre.
        resolution: Bin width, > 0.
        grid: Linear size of the counting mesh (even).

    Returns:
        Density in units of 1/energy; exactly 0 outside ``[-4J, 4J]``.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if abs(E) > spec.band_edge:
        return 0.0
    c = np.sort(np.cos(LatticeSpec(grid).k_values))
    # omega in [lo, hi)  <=>  cx + cy in (-hi/2J, -lo/2J]
    s_lo = -(E + 0.5 * resolution) / (2 * spec.J)
    s_hi = -(E - 0.5 * resolution) / (2 * spec.J)
    count = np.searchsorted(c, s_hi - c, side="right") - np.searchsorted(c, s_lo - c, side="right")
    return float(count.sum()) / grid**2 / resolution


def dos_exact(spec: LatticeSpec, E):
    """Closed-form infinite-lattice DOS, ``K(1 - E^2/16J^2) / (2 pi^2 J)``.

    Diverges logarithmically at ``E = 0`` and vanishes outside the band.
    """
    E = np.asarray(E, dtype=float)
    x = (E / spec.band_edge) ** 2
    with np.errstate(divide="ignore"):
        val = special.ellipkm1(np.where(x < 1, x, 0.5)) / (2 * np.pi**2 * spec.J)
    val = np.where(np.abs(E) < spec.band_edge, val, 0.0)
    return val[()] if val.ndim == 0 else val


def _check_grid(spec: LatticeSpec, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.shape != (spec.N, spec.N):
        raise ValueError(f"expected an {spec.N}x{spec.N} grid, got shape {grid.shape}")
    return grid


def k_transform(spec: LatticeSpec, grid, workers: int | None = None) -> np.ndarray:
    """Real-space amplitudes ``C[nx, ny]`` to momentum amplitudes ``C[ix, iy]``.

    ``C_k = (1/N) sum_n exp(-i k.n) C_n`` with ``k`` indices sorted ascending
    (``ix = 0`` is ``k = -pi``). Unitary.
    """
    grid = _check_grid(spec, grid)
    return scipy.fft.fftshift(scipy.fft.fft2(grid, norm="ortho", workers=workers))


def inverse_k_transform(spec: LatticeSpec, grid, workers: int | None = None) -> np.ndarray:
    """Inverse of :func:`k_transform`."""
    grid = _check_grid(spec, grid)
    return scipy.fft.ifft2(scipy.fft.ifftshift(grid), norm="ortho", workers=workers)
