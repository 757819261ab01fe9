"""Repeated no-click measurement protocol.

One protocol step is  V = π̄ · e^{-iH·δt}: evolve freely for δt, then
keep only the no-click component.  Survival through step k is
P̄_k = ‖V^k ψ₀‖², accumulated multiplicatively from the per-step
conditional probabilities p̄(t_k|t_{k-1}) while the working state is
renormalized each step (avoids underflow over thousands of steps; the
raw factors reconstruct P̄_k exactly).

On a finite grid the continuum identity V^k = π̄·e^{-iHt} only holds in
a window of measurement intervals: δt small enough to resolve the
dynamics but large enough that the projections do not resolve
grid-scale motion, below which the survival creeps back up (the Zeno
effect reappears, as it must in finite dimension).  The window is
estimated by ``validity_window`` and measured by ``convergence_window``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _numerics as num

from .core_state import Projector, WaveFunction, apply_projector
from .errors import StateNotStored, SurvivalUnderflow
from .propagator import (SPECTRAL, HamiltonianSpec, PropagatorConfig, evolve)

__all__ = [
    "ProtocolConfig", "MeasurementRecord", "ClickSample",
    "ConvergenceReport", "step_V", "run_protocol", "conditional_state",
    "hazard_rate", "survival_closed_form", "click_time_sampler",
    "validity_window", "convergence_window", "find_plateau",
    "SURVIVAL_FLOOR",
]

#: below this survival the protocol halts (nothing left to condition on)
SURVIVAL_FLOOR = 1e-14

#: tolerance for the p̄ > 1 breakdown annotation
BREAKDOWN_EXCESS = 1e-12


@dataclass(frozen=True)
class ProtocolConfig:
    """Repeated-measurement schedule: interval, step count, projector."""

    delta_t: float
    k_max: int
    projector: Projector
    store_states: bool = False
    propagator: Optional[PropagatorConfig] = None

    def __post_init__(self):
        if self.delta_t <= 0.0:
            raise ValueError("delta_t must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.propagator is not None:
            steps = round(self.delta_t / self.propagator.dt)
            if steps < 1 or abs(steps * self.propagator.dt - self.delta_t) \
                    > 1e-9 * self.delta_t:
                raise ValueError(
                    "delta_t must be an integer multiple of the propagator dt")

    def resolved_propagator(self) -> PropagatorConfig:
        """Default engine: one exact spectral step per measurement.

        Edge guards are off by default here: each step's projection wipes
        the click side anyway, and the high-wavenumber content of the
        projection edge travels far within one interval without carrying
        probability that matters at the protocol's accuracy.  Pass an
        explicit propagator config to police edges.
        """
        if self.propagator is not None:
            return self.propagator
        return PropagatorConfig(method=SPECTRAL, dt=self.delta_t,
                                leak_guard="off")


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome of a repeated no-click run.

    ``times`` and ``survival`` have K+1 entries (including t=0 with
    P̄_0 = ‖π̄ψ₀‖²); the conditional arrays have K entries for steps
    1..K.  ``breakdown_flags`` marks steps whose recorded conditional
    probability fell outside [0, 1].
    """

    times: np.ndarray
    survival: np.ndarray
    conditional_no_click: np.ndarray
    conditional_click: np.ndarray
    delta_t: float
    projector: Projector
    states: Optional[tuple[WaveFunction, ...]] = None
    breakdown_flags: np.ndarray = field(default=None)
    halted_early: bool = False

    def __post_init__(self):
        for name in ("times", "survival", "conditional_no_click",
                     "conditional_click"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        flags = self.breakdown_flags
        if flags is None:
            flags = np.zeros(self.conditional_no_click.size, dtype=bool)
        flags = np.array(flags, dtype=bool, copy=True)
        flags.flags.writeable = False
        object.__setattr__(self, "breakdown_flags", flags)

    @property
    def n_steps(self) -> int:
        return self.conditional_no_click.size

    @property
    def has_breakdown(self) -> bool:
        return bool(self.breakdown_flags.any())

    def click_probabilities(self) -> np.ndarray:
        """P_k = p(t_k|t_{k-1})·P̄_{k-1}: joint probability of a first
        click at step k."""
        return self.conditional_click * self.survival[:-1]


def step_V(psi: WaveFunction, H: HamiltonianSpec, projector: Projector,
           delta_t: float, config: PropagatorConfig | None = None) -> WaveFunction:
    """One protocol step π̄·e^{-iH·δt}·ψ (unnormalized; a contraction).

    Defaults to the protocol engine (one exact spectral step, edge guards
    off); pass a config to choose the integrator or police edges.
    """
    if config is None:
        config = PropagatorConfig(method=SPECTRAL, dt=delta_t,
                                  leak_guard="off")
    return apply_projector(projector, evolve(psi, H, delta_t, config))


def run_protocol(psi0: WaveFunction, H: HamiltonianSpec,
                 config: ProtocolConfig) -> MeasurementRecord:
    """Run k_max repeated no-click steps from a state inside the region.

    Halts early (recorded, not raised) when survival underflows.
    """
    proj = config.projector
    pcfg = config.resolved_propagator()
    projected = apply_projector(proj, psi0)
    diff = projected.amplitudes - psi0.amplitudes
    if np.sqrt(np.sum(np.abs(diff) ** 2) * psi0.grid.dx) > 1e-10:
        raise ValueError("initial state must satisfy π̄ψ₀ = ψ₀")
    p_total = projected.norm_sq
    survival = [p_total]
    p_bars: list[float] = []
    flags: list[bool] = []
    states = [projected.normalized()] if config.store_states else None
    current = projected.normalized()
    halted = False
    for _ in range(config.k_max):
        evolved = evolve(current, H, config.delta_t, pcfg)
        clipped = apply_projector(proj, evolved)
        p_bar = clipped.norm_sq / evolved.norm_sq
        flags.append(p_bar > 1.0 + BREAKDOWN_EXCESS or p_bar < -BREAKDOWN_EXCESS)
        p_bars.append(p_bar)
        p_total = p_total * p_bar
        survival.append(p_total)
        if p_total < SURVIVAL_FLOOR:
            halted = True
            break
        current = clipped.normalized()
        if states is not None:
            states.append(current)
    k = len(p_bars)
    p_bars_arr = np.asarray(p_bars)
    return MeasurementRecord(
        times=config.delta_t * np.arange(k + 1),
        survival=np.asarray(survival),
        conditional_no_click=p_bars_arr,
        conditional_click=1.0 - p_bars_arr,
        delta_t=config.delta_t,
        projector=proj,
        states=tuple(states) if states is not None else None,
        breakdown_flags=np.asarray(flags),
        halted_early=halted,
    )


def conditional_state(record: MeasurementRecord, k: int) -> WaveFunction:
    """Normalized no-click state after step k (requires store_states)."""
    if record.states is None:
        raise StateNotStored("run_protocol was called without store_states")
    if not (0 <= k <= record.n_steps):
        raise IndexError(f"step {k} outside the recorded range")
    if record.survival[k] < 1e-12:
        raise SurvivalUnderflow(
            f"survival {record.survival[k]:.3e} at step {k} is too small "
            "for a meaningful conditional state")
    return record.states[k]


def hazard_rate(record: MeasurementRecord) -> np.ndarray:
    """w(t_k) = p(t_k|t_{k-1})/δt for steps 1..K, aligned with times[1:].

    Negative entries are possible only for breakdown-flagged steps and
    are returned as-is rather than clamped.
    """
    return record.conditional_click / record.delta_t


def survival_closed_form(times: np.ndarray, w: np.ndarray, t: float) -> float:
    """exp(-∫₀ᵗ w dt') by trapezoid over the covered part of [0, t]."""
    times = np.asarray(times, dtype=float)
    w = np.asarray(w, dtype=float)
    if times.size != w.size:
        raise ValueError("times and w must have equal length")
    if t < 0.0 or (times.size and t > times[-1] + 1e-9):
        raise ValueError("t outside the sampled range")
    mask = times <= t + 1e-12
    if mask.sum() < 2:
        return 1.0
    return float(np.exp(-num.trapezoid(w[mask], times[mask])))


@dataclass(frozen=True)
class ClickSample:
    """A single sampled run: a detection time or no click in the horizon."""

    detected: bool
    time: Optional[float] = None


def click_time_sampler(record: MeasurementRecord, n_samples: int,
                       seed: int) -> list[ClickSample]:
    """Draw first-click times by inverse CDF over the discrete P_k.

    The undetected outcome carries the leftover mass P̄_K.  A fixed seed
    reproduces the samples exactly.
    """
    p_k = record.click_probabilities()
    cum = np.cumsum(p_k)
    total = (cum[-1] if cum.size else 0.0) + record.survival[-1]
    rng = np.random.default_rng(seed)
    u = rng.random(n_samples) * total
    idx = np.searchsorted(cum, u, side="right")
    times = record.times
    return [ClickSample(True, float(times[i + 1])) if i < p_k.size
            else ClickSample(False) for i in idx]


def validity_window(mass: float, dx: float, t: float) -> tuple[float, float]:
    """Heuristic δt window (10·m·dx², t/20) used to seed interval scans.

    The lower bound marks where projections start resolving grid-scale
    motion.  Treat both bounds as a starting guess only: for sharp
    spatial projections the measured passive plateau can sit far above
    t/20, with the Zeno freeze already creeping in below it.  Always
    calibrate with ``convergence_window``.
    """
    return 10.0 * mass * dx * dx, t / 20.0


def find_plateau(values: np.ndarray, rel_tol: float = 0.02,
                 min_len: int = 3) -> Optional[tuple[int, int]]:
    """Longest index window (i0, i1 inclusive) whose values agree within
    rel_tol relative spread; None when no window of min_len exists."""
    v = np.asarray(values, dtype=float)
    best = None
    for i0 in range(v.size):
        for i1 in range(i0 + min_len - 1, v.size):
            window = v[i0:i1 + 1]
            mean = float(np.mean(window))
            spread = float(window.max() - window.min())
            if spread > rel_tol * max(abs(mean), 1e-12):
                break
            if best is None or (i1 - i0) > (best[1] - best[0]):
                best = (i0, i1)
    return best


@dataclass(frozen=True)
class ConvergenceReport:
    """Survival at a fixed time as a function of the measurement interval."""

    t_fixed: float
    delta_t_values: np.ndarray
    survival_at_t: np.ndarray
    first_step_no_click: np.ndarray
    plateau_window: Optional[tuple[float, float]]
    plateau_value: Optional[float]

    def __post_init__(self):
        for name in ("delta_t_values", "survival_at_t", "first_step_no_click"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def convergence_window(psi0: WaveFunction, H: HamiltonianSpec,
                       projector: Projector, t_fixed: float, delta_t_list,
                       propagator: PropagatorConfig | None = None,
                       rel_tol: float = 0.02) -> ConvergenceReport:
    """Scan δt at fixed horizon and report the survival plateau, if any.

    Each δt must divide t_fixed.  The scan is the practical way to locate
    the validity window on a given grid.
    """
    delta_ts = np.asarray(sorted(delta_t_list, reverse=True), dtype=float)
    survivals = np.empty(delta_ts.size)
    first_steps = np.empty(delta_ts.size)
    for i, dt in enumerate(delta_ts):
        k = int(round(t_fixed / dt))
        if k < 1 or abs(k * dt - t_fixed) > 1e-9 * max(1.0, t_fixed):
            raise ValueError(f"delta_t {dt} does not divide t_fixed {t_fixed}")
        cfg = ProtocolConfig(delta_t=dt, k_max=k, projector=projector,
                             propagator=propagator)
        record = run_protocol(psi0, H, cfg)
        survivals[i] = record.survival[min(k, record.n_steps)]
        first_steps[i] = record.conditional_no_click[0]
    window = find_plateau(survivals, rel_tol)
    if window is None:
        bounds, value = None, None
    else:
        i0, i1 = window
        bounds = (float(delta_ts[i1]), float(delta_ts[i0]))
        value = float(np.mean(survivals[i0:i1 + 1]))
    return ConvergenceReport(t_fixed, delta_ts, survivals, first_steps,
                             bounds, value)
