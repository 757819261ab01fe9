"""Probability density, discrete current, boundary flux, and the
arrival/departure time densities of an unmeasured evolution.

The discrete current lives at half-grid sites,

    j_{i+1/2} = Im(conj(ψ_i)·ψ_{i+1}) / (m·dx),

chosen so the Crank-Nicolson update satisfies the discrete continuity
equation exactly (with the current evaluated on the half-step average
state).  The flux through a region boundary point is the mean of the two
adjacent half-site currents, oriented outward from the region, and the
region probability is a trapezoid that gives the boundary points half
weight; with these pairings  -dP̄/dt = Φ  holds to integrator accuracy.

The arrival density is the positive part of the outward flux; the
negative part is the departure density, during which there is no arrival
at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _numerics as num
from .core_state import Region, WaveFunction
from .errors import GridMismatch, NonMonotoneWindow
from .propagator import (CRANK_NICOLSON, HamiltonianSpec, PropagatorConfig,
                         evolve)

__all__ = [
    "ArrivalSeries", "BreakdownProbe", "probability_current",
    "boundary_flux", "region_probability", "arrival_series",
    "arrival_integral", "breakdown_probe",
]


def probability_current(psi: WaveFunction, mass: float) -> np.ndarray:
    """Current at the n-1 half-grid sites (hard-wall ends)."""
    a = psi.amplitudes
    return np.imag(np.conj(a[:-1]) * a[1:]) / (mass * psi.grid.dx)


def _site_current(jhalf: np.ndarray, site: int) -> float:
    """Current interpolated onto a lattice site; outside samples are 0."""
    left = jhalf[site - 1] if site >= 1 else 0.0
    right = jhalf[site] if site <= jhalf.size - 1 else 0.0
    return 0.5 * (left + right)


def boundary_flux(psi: WaveFunction, region: Region, mass: float,
                  method: str = "grid", epsilon_seq=None) -> float:
    """Outward probability flux through the region's boundary points.

    Positive flux means probability leaving the region.  ``method`` is
    "grid" (half-site currents, continuity-exact for smooth states) or
    "limit" (one-sided extrapolation of Im(conj(ψ)ψ')/m, appropriate for
    states that jump at the boundary, e.g. freshly collapsed ones).

    For anchored regions the cut standing in for an unbounded end is
    bookkeeping, not a physical boundary, so it carries no flux; the
    edge-band guard polices the assumption that nothing reaches it.
    """
    if psi.grid != region.grid:
        raise GridMismatch("state and region live on different grids")
    if method == "grid":
        jhalf = probability_current(psi, mass)
        flux = 0.0
        for (left_site, right_site) in _physical_boundaries(region):
            if right_site is not None:
                flux += _site_current(jhalf, right_site)
            if left_site is not None:
                flux -= _site_current(jhalf, left_site)
        return float(flux)
    if method == "limit":
        return _limit_flux(psi, region, mass, epsilon_seq)
    raise ValueError(f"unknown flux method {method!r}")


def _physical_boundaries(region: Region):
    """Boundary-site pairs with the anchored (fictional) side dropped."""
    sites = list(region.boundary_sites)
    if region.anchored == "left" and sites:
        sites[0] = (None, sites[0][1])
    elif region.anchored == "right" and sites:
        sites[-1] = (sites[-1][0], None)
    return tuple(sites)


def _limit_flux(psi, region, mass, epsilon_seq):
    grid = psi.grid
    x = grid.positions
    dx = grid.dx
    amps = psi.amplitudes
    if epsilon_seq is None:
        epsilon_seq = num.DEFAULT_EPSILON_SEQ
    flux = 0.0
    for (lo, hi), (left_site, right_site) in zip(region.intervals,
                                                 _physical_boundaries(region)):
        half_width = 0.5 * (hi - lo + 1) * dx
        eps = num.filter_epsilons(epsilon_seq, half_width)
        if right_site is not None:
            lim, step = num.one_sided_product_limit(
                x, amps, lo, hi, x[hi - 1] + dx, "right", eps, dx)
            num.check_extrapolation(lim, step)
            flux += lim.imag / mass
        if left_site is not None:
            lim, step = num.one_sided_product_limit(
                x, amps, lo, hi, x[lo] - dx, "left", eps, dx)
            num.check_extrapolation(lim, step)
            flux -= lim.imag / mass
    return float(flux)


def region_probability(psi: WaveFunction, region: Region) -> float:
    """∫|ψ|² over the region: trapezoid giving boundary points half weight."""
    if psi.grid != region.grid:
        raise GridMismatch("state and region live on different grids")
    rho = np.abs(psi.amplitudes) ** 2
    dx = psi.grid.dx
    total = 0.0
    for (lo, hi), (left_site, right_site) in zip(region.intervals,
                                                 region.boundary_sites):
        total += rho[lo:hi].sum() * dx
        if left_site is not None:
            total += 0.5 * rho[left_site] * dx
        if right_site is not None:
            total += 0.5 * rho[right_site] * dx
    return float(total)


@dataclass(frozen=True)
class ArrivalSeries:
    """Sampled unmeasured evolution: region probability, outward flux,
    clamped arrival/departure densities and the no-click hazard."""

    times: np.ndarray
    region_prob: np.ndarray
    flux: np.ndarray
    arrival_density: np.ndarray
    departure_density: np.ndarray
    hazard: np.ndarray
    continuity_residual: float

    def __post_init__(self):
        for name in ("times", "region_prob", "flux", "arrival_density",
                     "departure_density", "hazard"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def total_density(self) -> np.ndarray:
        """-dP̄/dt by centred differences (one-sided at the ends)."""
        return -np.gradient(self.region_prob, self.times)

    def index_at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 0.0
        if abs(self.times[i] - t) > 0.5 * dt + 1e-12:
            raise ValueError(f"time {t} not on the sample lattice")
        return i


def arrival_series(psi0: WaveFunction, H: HamiltonianSpec, region: Region,
                   t_max: float, sample_dt: float,
                   config: PropagatorConfig | None = None) -> ArrivalSeries:
    """Evolve without measurement, sampling P̄(t) and the boundary flux.

    The default integrator is Crank-Nicolson (hard walls keep fast tail
    components from wrapping back into the region) with the edge-band
    guard on the side where the region stands in for a half line.
    """
    if t_max <= 0.0 or sample_dt <= 0.0:
        raise ValueError("t_max and sample_dt must be positive")
    outside = np.where(region.mask, 0.0, psi0.amplitudes)
    if np.sqrt(np.sum(np.abs(outside) ** 2) * psi0.grid.dx) > 1e-10:
        raise ValueError("initial state must be supported inside the region")
    if config is None:
        guard = region.anchored or "both"
        config = PropagatorConfig(method=CRANK_NICOLSON,
                                  dt=min(5e-3, sample_dt), leak_guard=guard)
    n_samples = int(round(t_max / sample_dt))
    if abs(n_samples * sample_dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("sample_dt must divide t_max")
    mass = H.mass
    times = sample_dt * np.arange(n_samples + 1)
    prob = np.empty(n_samples + 1)
    flux = np.empty(n_samples + 1)
    psi = psi0
    prob[0] = region_probability(psi, region)
    flux[0] = boundary_flux(psi, region, mass)
    for n in range(1, n_samples + 1):
        psi = evolve(psi, H, sample_dt, config)
        prob[n] = region_probability(psi, region)
        flux[n] = boundary_flux(psi, region, mass)
    arr = np.where(flux > 0.0, flux, 0.0)
    dep = np.where(flux < 0.0, -flux, 0.0)
    hazard = np.full(n_samples + 1, np.nan)
    ok = prob > 1e-12
    hazard[ok] = flux[ok] / prob[ok]
    dpdt = np.gradient(prob, times)
    residual = float(np.max(np.abs(dpdt[1:-1] + flux[1:-1]))) \
        if n_samples >= 2 else 0.0
    return ArrivalSeries(times, prob, flux, arr, dep, hazard, residual)


def arrival_integral(series: ArrivalSeries, T1: float, T2: float) -> float:
    """∫ arrival density over [T1, T2] (endpoints snap to the lattice).

    Only valid while the flux never turns negative; otherwise arrivals in
    sub-windows are not exclusive events and the integral is refused.
    """
    if T2 < T1:
        raise ValueError("need T1 <= T2")
    i1 = series.index_at(T1)
    i2 = series.index_at(T2)
    window = slice(i1, i2 + 1)
    if np.any(series.flux[window] < -1e-10):
        raise NonMonotoneWindow(
            f"flux turns negative inside [{T1}, {T2}]; arrival "
            "probabilities across a departure window must not be added")
    if i1 == i2:
        return 0.0
    return float(num.trapezoid(series.arrival_density[window],
                               series.times[window]))


@dataclass(frozen=True)
class BreakdownProbe:
    """First-order no-click probability and its ingredients."""

    p_bar_raw: float
    flux: float
    alpha: float


def breakdown_probe(psi: WaveFunction, region: Region, mass: float,
                    delta_t: float) -> BreakdownProbe:
    """First-order conditional no-click probability 1 - δt·α·Φ.

    α is the inverse squared norm of the state restricted to the region.
    The raw value exceeds 1 exactly when the outward flux is negative,
    the regime where the first-order formula stops being a probability.
    """
    if abs(psi.norm_sq - 1.0) > 1e-9:
        raise ValueError("probe state must be normalized on the full grid")
    if delta_t <= 0.0:
        raise ValueError("delta_t must be positive")
    restricted = np.where(region.mask, psi.amplitudes, 0.0)
    alpha = 1.0 / float(np.sum(np.abs(restricted) ** 2) * psi.grid.dx)
    flux = boundary_flux(psi, region, mass)
    return BreakdownProbe(1.0 - delta_t * alpha * flux, flux, alpha)
