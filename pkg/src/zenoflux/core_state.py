"""Grids, wave functions, spatial regions and projectors.

Conventions used across the whole package (ħ = 1 throughout):

* grids are uniform and periodic: x_i = x_min + i·dx for i = 0..n-1 with
  dx = (x_max - x_min)/n, so x_max is identified with x_min by the
  spectral propagator,
* norms are rectangle sums  ‖ψ‖² = Σ_i |ψ_i|²·dx,
* an open region (a, b) owns the grid indices strictly between a and b.
  The grid points at a and b belong to neither the region nor the
  complement's interior; they are the flux-evaluation sites.

All types are immutable after construction (arrays are marked read-only),
so values can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import EmptyOverlap, GridMismatch, InvalidGrid, PacketTruncated

__all__ = [
    "SpatialGrid", "WaveFunction", "Region", "Projector", "PolarFields",
    "make_grid", "gaussian_packet", "truncated_state", "apply_projector",
    "polar_decompose", "spatial_region", "half_line_region", "full_region",
    "spatial_projector", "rank_one_projector",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic lattice on [x_min, x_max)."""

    x_min: float
    x_max: float
    n_points: int
    dx: float

    @cached_property
    def positions(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Periodic wavenumber lattice matching numpy's FFT ordering."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def is_power_of_two(self) -> bool:
        n = self.n_points
        return n > 0 and (n & (n - 1)) == 0

    def index_of(self, position: float) -> int:
        """Nearest lattice index to a physical position."""
        i = int(round((position - self.x_min) / self.dx))
        if i < 0 or i >= self.n_points:
            raise InvalidGrid(f"position {position} outside grid")
        return i


def make_grid(x_min: float, x_max: float, n_points: int) -> SpatialGrid:
    """Build a uniform grid; n_points >= 16 and x_max > x_min required."""
    if not np.isfinite(x_min) or not np.isfinite(x_max) or x_max <= x_min:
        raise InvalidGrid(f"need x_max > x_min, got [{x_min}, {x_max}]")
    if n_points < 16:
        raise InvalidGrid(f"n_points must be >= 16, got {n_points}")
    dx = (x_max - x_min) / n_points
    return SpatialGrid(float(x_min), float(x_max), int(n_points), dx)


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes sampled on a grid."""

    grid: SpatialGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True)
        if amps.shape != (self.grid.n_points,):
            raise GridMismatch(
                f"amplitude array of length {amps.size} on a grid of "
                f"{self.grid.n_points} points")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm_sq - 1.0) < 1e-12

    def normalized(self) -> "WaveFunction":
        n2 = self.norm_sq
        if n2 <= 0.0:
            raise EmptyOverlap("cannot normalize a zero state")
        return WaveFunction(self.grid, self.amplitudes / np.sqrt(n2))

    def braket(self, other: "WaveFunction") -> complex:
        """⟨self|other⟩ with the rectangle-sum inner product."""
        _require_same_grid(self.grid, other.grid)
        return complex(
            np.sum(np.conj(self.amplitudes) * other.amplitudes) * self.grid.dx)


def _require_same_grid(a: SpatialGrid, b: SpatialGrid) -> None:
    if a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


@dataclass(frozen=True)
class Region:
    """Open spatial set realized as half-open interior index ranges.

    ``intervals`` lists (lo, hi) pairs of interior indices; the lattice
    sites lo-1 and hi are the region's boundary points (where they exist
    on the grid) and belong to neither the region nor its complement's
    interior.  ``anchored`` marks the side, if any, on which the region
    stands in for an unbounded set cut off inside the grid.
    """

    grid: SpatialGrid
    intervals: tuple[tuple[int, int], ...]
    anchored: Optional[str] = None

    def __post_init__(self):
        n = self.grid.n_points
        prev_hi = -1
        for lo, hi in self.intervals:
            if not (0 <= lo < hi <= n):
                raise InvalidGrid(f"interval ({lo}, {hi}) outside grid")
            if lo - 1 < prev_hi:
                raise InvalidGrid("region intervals overlap or are unsorted")
            prev_hi = hi
        if self.anchored not in (None, "left", "right"):
            raise InvalidGrid(f"bad anchor {self.anchored!r}")

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.grid.n_points, dtype=bool)
        for lo, hi in self.intervals:
            m[lo:hi] = True
        m.flags.writeable = False
        return m

    @cached_property
    def boundary_sites(self) -> tuple[tuple[Optional[int], Optional[int]], ...]:
        """Per interval, the lattice indices of the two boundary points
        (None where the interval touches the edge of the grid)."""
        n = self.grid.n_points
        sites = []
        for lo, hi in self.intervals:
            left = lo - 1 if lo - 1 >= 0 else None
            right = hi if hi <= n - 1 else None
            sites.append((left, right))
        return tuple(sites)

    @property
    def n_interior(self) -> int:
        return sum(hi - lo for lo, hi in self.intervals)


def spatial_region(grid: SpatialGrid, intervals, anchored: str | None = None) -> Region:
    """Region from physical open intervals; endpoints snap to the lattice."""
    index_ranges = []
    for a, b in intervals:
        if not (a < b):
            raise InvalidGrid(f"need a < b, got ({a}, {b})")
        ia = grid.index_of(a)
        ib = grid.index_of(b)
        if ib - ia < 2:
            raise InvalidGrid(f"interval ({a}, {b}) has no interior points")
        index_ranges.append((ia + 1, ib))
    return Region(grid, tuple(index_ranges), anchored)


def half_line_region(grid: SpatialGrid, boundary: float, side: str = "left",
                     margin_fraction: float = 0.05) -> Region:
    """Half line up to ``boundary``, cut off just inside the grid edge.

    ``side`` is the side of the boundary the region occupies.  The far
    cut sits ``margin_fraction`` of the grid width inside the edge, so
    edge-band guards can police the half-line fiction.
    """
    width = grid.x_max - grid.x_min
    if side == "left":
        a = grid.x_min + margin_fraction * width
        return spatial_region(grid, [(a, boundary)], anchored="left")
    if side == "right":
        b = grid.x_max - margin_fraction * width
        return spatial_region(grid, [(boundary, b)], anchored="right")
    raise InvalidGrid(f"side must be 'left' or 'right', got {side!r}")


def full_region(grid: SpatialGrid) -> Region:
    """The whole grid; has no boundary sites (periodic topology)."""
    return Region(grid, ((0, grid.n_points),))


@dataclass(frozen=True)
class Projector:
    """No-click projector: either a spatial mask or a rank-1 |φ⟩⟨φ|."""

    kind: str  # "spatial" | "rank_one"
    region: Optional[Region] = None
    state: Optional[WaveFunction] = None

    def __post_init__(self):
        if self.kind == "spatial":
            if self.region is None:
                raise ValueError("spatial projector needs a region")
        elif self.kind == "rank_one":
            if self.state is None:
                raise ValueError("rank-1 projector needs a state")
        else:
            raise ValueError(f"unknown projector kind {self.kind!r}")

    @property
    def grid(self) -> SpatialGrid:
        return self.region.grid if self.kind == "spatial" else self.state.grid


def spatial_projector(region: Region) -> Projector:
    return Projector("spatial", region=region)


def rank_one_projector(state: WaveFunction) -> Projector:
    """Projector onto the ray of ``state`` (normalized internally)."""
    return Projector("rank_one", state=state.normalized())


def apply_projector(p: Projector, psi: WaveFunction) -> WaveFunction:
    """Apply a projector; the result is in general not normalized."""
    _require_same_grid(p.grid, psi.grid)
    if p.kind == "spatial":
        return WaveFunction(
            psi.grid, np.where(p.region.mask, psi.amplitudes, 0.0))
    c = p.state.braket(psi)
    return WaveFunction(psi.grid, c * p.state.amplitudes)


@dataclass(frozen=True)
class PolarFields:
    """Polar form ψ = R·e^{iS}; S is unwrapped only where R is resolvable."""

    grid: SpatialGrid
    magnitude: np.ndarray
    phase: np.ndarray
    phase_defined: np.ndarray

    def __post_init__(self):
        for name in ("magnitude", "phase", "phase_defined"):
            arr = np.array(getattr(self, name), copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def recombined(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


def polar_decompose(psi: WaveFunction, r_threshold: float | None = None) -> PolarFields:
    """Split ψ into magnitude and unwrapped phase.

    The phase is unwrapped independently along each maximal run of points
    with R above the threshold (default 1e-6 of the peak); elsewhere the
    raw principal angle is kept and the point is flagged undefined.
    """
    amps = psi.amplitudes
    magnitude = np.abs(amps)
    if r_threshold is None:
        r_threshold = 1e-6 * float(magnitude.max(initial=0.0))
    defined = magnitude > r_threshold
    phase = np.angle(amps)
    for lo, hi in _true_runs(defined):
        phase[lo:hi] = np.unwrap(phase[lo:hi])
    return PolarFields(psi.grid, magnitude, phase, defined)


def _true_runs(mask: np.ndarray):
    """Half-open (lo, hi) index ranges of maximal True runs."""
    idx = np.flatnonzero(np.diff(mask.astype(np.int8)))
    edges = np.concatenate(([0], idx + 1, [mask.size]))
    return [(int(edges[i]), int(edges[i + 1]))
            for i in range(edges.size - 1) if mask[edges[i]]]


def gaussian_packet(grid: SpatialGrid, x0: float, sigma: float,
                    k0: float) -> WaveFunction:
    """Normalized packet  exp(-(x-x0)²/4σ² + i·k0·x).

    Raises PacketTruncated when either grid edge carries more than 1e-8
    of the peak amplitude.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = grid.positions
    amps = np.exp(-((x - x0) ** 2) / (4.0 * sigma ** 2) + 1j * k0 * x)
    mags = np.abs(amps)
    peak = float(mags.max())
    if mags[0] > 1e-8 * peak or mags[-1] > 1e-8 * peak:
        raise PacketTruncated(
            f"packet (x0={x0}, sigma={sigma}) reaches the grid edges")
    return WaveFunction(grid, amps).normalized()


def truncated_state(grid: SpatialGrid, region: Region,
                    inner: WaveFunction) -> WaveFunction:
    """Restrict ``inner`` to the region and renormalize.

    The result vanishes on the boundary sites and outside the region.
    """
    _require_same_grid(grid, inner.grid)
    _require_same_grid(grid, region.grid)
    masked = np.where(region.mask, inner.amplitudes, 0.0)
    norm = np.sqrt(np.sum(np.abs(masked) ** 2) * grid.dx)
    if norm < 1e-12:
        raise EmptyOverlap("state has no support inside the region")
    return WaveFunction(grid, masked / norm)
