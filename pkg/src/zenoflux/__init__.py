"""zenoflux: a numerical lab for repeated no-click quantum measurements,
Zeno physics, and flux-based arrival-time statistics on 1D grids."""

from .core_state import (SpatialGrid, WaveFunction, Region, Projector,
                         PolarFields, make_grid, gaussian_packet,
                         truncated_state, apply_projector, polar_decompose,
                         spatial_region, half_line_region, full_region,
                         spatial_projector, rank_one_projector)
from .propagator import (HamiltonianSpec, PropagatorConfig,
                         EnergyDecomposition, build_hamiltonian, evolve,
                         energy_expectation, energy_decomposition,
                         magic_residual, SPECTRAL, CRANK_NICOLSON)
from .measurement import (ProtocolConfig, MeasurementRecord, ClickSample,
                          step_V, run_protocol, conditional_state,
                          hazard_rate, survival_closed_form,
                          click_time_sampler, validity_window,
                          convergence_window)
from .arrival import (ArrivalSeries, BreakdownProbe, probability_current,
                      boundary_flux, region_probability, arrival_series,
                      arrival_integral, breakdown_probe)
from .zeno_lab import (ZenoScanResult, FiniteDimCheck, zeno_scan,
                       finite_dim_impossibility, random_impossibility_trials,
                       gambler_curve, gamma_crosscheck)
from . import errors

__version__ = "0.1.0"
