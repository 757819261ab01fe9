import numpy as np
import pytest

import zenoflux as zf
from zenoflux.measurement import (ProtocolConfig, MeasurementRecord,
                                  click_time_sampler, conditional_state,
                                  convergence_window, find_plateau,
                                  hazard_rate, run_protocol, step_V,
                                  survival_closed_form, validity_window)
from zenoflux.errors import StateNotStored, SurvivalUnderflow
from zenoflux._numerics import trapezoid

from conftest import norm_distance


def _spectral(dt):
    return zf.PropagatorConfig(method=zf.SPECTRAL, dt=dt, leak_guard="off")


# ---------------------------------------------------------------------------
# step_V

def test_step_identity_projector_equals_evolve(standard_scene):
    psi, H, grid = (standard_scene[k] for k in ("psi", "H", "grid"))
    proj = zf.spatial_projector(zf.full_region(grid))
    stepped = step_V(psi, H, proj, 0.25, _spectral(0.25))
    plain = zf.evolve(psi, H, 0.25, _spectral(0.25))
    assert np.array_equal(stepped.amplitudes, plain.amplitudes)


def test_step_preserves_norm_away_from_boundary(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = standard_scene["projector"]
    out = step_V(psi, H, proj, 0.25, _spectral(0.25))
    assert abs(out.norm_sq - 1.0) < 1e-10


def test_step_contracts_at_boundary():
    grid = zf.make_grid(-60, 30, 4096)
    region = zf.half_line_region(grid, 0.0, "left")
    psi = zf.gaussian_packet(grid, -20, 2, 2)
    H = zf.build_hamiltonian(grid, 1.0)
    evolved = zf.evolve(psi, H, 9.0, _spectral(0.05))
    clipped = zf.apply_projector(zf.spatial_projector(region), evolved)
    leaked = evolved.norm_sq - clipped.norm_sq
    # independent quadrature of the removed probability
    outside = np.where(region.mask, 0.0, evolved.amplitudes)
    leak_quad = np.sum(np.abs(outside) ** 2) * grid.dx
    assert clipped.norm_sq < evolved.norm_sq
    assert leaked == pytest.approx(leak_quad, abs=1e-12)


# ---------------------------------------------------------------------------
# run_protocol

def test_full_grid_projector_never_clicks(standard_scene):
    psi, H, grid = (standard_scene[k] for k in ("psi", "H", "grid"))
    cfg = ProtocolConfig(delta_t=0.25, k_max=20,
                         projector=zf.spatial_projector(zf.full_region(grid)))
    record = run_protocol(psi, H, cfg)
    assert np.all(np.abs(record.survival - 1.0) < 1e-12)


def test_rank_one_matches_overlap_power_oracle(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = zf.rank_one_projector(psi)
    cfg = ProtocolConfig(delta_t=0.1, k_max=12, projector=proj)
    record = run_protocol(psi, H, cfg)
    c = psi.braket(zf.evolve(psi, H, 0.1, _spectral(0.1)))
    oracle = np.abs(c) ** (2 * np.arange(1, 13))
    assert np.max(np.abs(record.survival[1:] - oracle)) < 1e-12


def test_rank_one_first_step_loss_quadratic(standard_scene):
    # smooth packet: the one-step loss scales like delta_t^2 (Zeno regime)
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = zf.rank_one_projector(psi)
    losses = []
    dts = (0.2, 0.1, 0.05)
    for dt in dts:
        record = run_protocol(psi, H, ProtocolConfig(
            delta_t=dt, k_max=1, projector=proj))
        losses.append(record.conditional_click[0])
    slope = np.polyfit(np.log(dts), np.log(losses), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_spatial_protocol_tracks_unmeasured_region_mass(standard_scene):
    # the no-click survival stays on the unmeasured region probability as
    # long as the intervals sit inside the detected plateau
    psi, H, region = (standard_scene[k] for k in ("psi", "H", "region"))
    proj = standard_scene["projector"]
    report = convergence_window(psi, H, proj, 10.0, [10.0, 5.0, 2.5, 1.25])
    ref = zf.evolve(psi, H, 10.0,
                    zf.PropagatorConfig(method=zf.CRANK_NICOLSON, dt=5e-3,
                                        leak_guard="left"))
    target = zf.region_probability(ref, region)
    assert report.plateau_window is not None
    assert report.plateau_value == pytest.approx(target, rel=0.02)


def test_protocol_requires_supported_initial_state(standard_scene):
    grid, H = standard_scene["grid"], standard_scene["H"]
    proj = standard_scene["projector"]
    straddling = zf.gaussian_packet(grid, -1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        run_protocol(straddling, H, ProtocolConfig(
            delta_t=0.1, k_max=2, projector=proj))


def test_protocol_halts_on_survival_underflow(standard_scene):
    # a rank-1 projector with nearly orthogonal step overlap underflows fast
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = zf.rank_one_projector(psi)
    cfg = ProtocolConfig(delta_t=4.0, k_max=50, projector=proj)
    record = run_protocol(psi, H, cfg)
    assert record.halted_early
    assert record.n_steps < 50
    assert record.survival[-1] < 1e-14


def test_delta_t_must_be_multiple_of_dt(standard_scene):
    with pytest.raises(ValueError):
        ProtocolConfig(delta_t=0.25, k_max=4,
                       projector=standard_scene["projector"],
                       propagator=zf.PropagatorConfig(dt=0.1))


# ---------------------------------------------------------------------------
# conditional states

def test_conditional_state_k0_is_initial(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    cfg = ProtocolConfig(delta_t=0.25, k_max=2, store_states=True,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    assert norm_distance(conditional_state(record, 0), psi) < 1e-10


def test_conditional_state_far_from_boundary_is_unmeasured(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    cfg = ProtocolConfig(delta_t=0.25, k_max=4, store_states=True,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    ref = zf.evolve(psi, H, 1.0, _spectral(0.25))
    assert norm_distance(conditional_state(record, 4), ref) < 1e-8


def test_conditional_state_passive_at_plateau(standard_scene):
    # two intervals of 5: residual against the once-projected unmeasured
    # state stays below 1e-2 (same-engine comparison)
    psi, H, grid, region = (standard_scene[k]
                            for k in ("psi", "H", "grid", "region"))
    cfg = ProtocolConfig(delta_t=5.0, k_max=2, store_states=True,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    ref = zf.evolve(psi, H, 10.0, _spectral(5.0))
    target = zf.truncated_state(grid, region, ref)
    assert norm_distance(conditional_state(record, 2), target) < 1e-2


def test_conditional_state_requires_storage(standard_scene):
    cfg = ProtocolConfig(delta_t=0.25, k_max=2,
                         projector=standard_scene["projector"])
    record = run_protocol(standard_scene["psi"], standard_scene["H"], cfg)
    with pytest.raises(StateNotStored):
        conditional_state(record, 1)


def test_conditional_state_underflow_guard(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = zf.rank_one_projector(psi)
    record = run_protocol(psi, H, ProtocolConfig(
        delta_t=4.0, k_max=50, projector=proj, store_states=True))
    with pytest.raises(SurvivalUnderflow):
        conditional_state(record, record.n_steps)


# ---------------------------------------------------------------------------
# hazard rate and closed-form survival

def test_hazard_zero_for_identity_projector(standard_scene):
    grid = standard_scene["grid"]
    cfg = ProtocolConfig(delta_t=0.25, k_max=10,
                         projector=zf.spatial_projector(zf.full_region(grid)))
    record = run_protocol(standard_scene["psi"], standard_scene["H"], cfg)
    assert np.max(np.abs(hazard_rate(record))) < 1e-12


def test_hazard_tracks_conditional_state_escape_rate(clipped_gaussian_scene):
    # per-step no-click rate against -2 Im<H> of the current conditional
    # state: the two drift together as repeated clipping reshapes the edge
    scene = clipped_gaussian_scene
    cfg = ProtocolConfig(delta_t=0.15, k_max=6, store_states=True,
                         projector=zf.spatial_projector(scene["region"]))
    record = run_protocol(scene["psi0"], scene["H"], cfg)
    w = hazard_rate(record)
    gammas = np.array([zf.energy_decomposition(record.states[k],
                                               scene["region"], 1.0).gamma
                       for k in range(1, 6)])
    ratios = w[1:6] / gammas
    assert abs(np.median(ratios) - 1.0) < 0.1


def test_hazard_matches_flux_ratio_while_passive(standard_scene):
    # w(t) = flux / region probability, checked in the early bins where
    # survival is still near 1 (the passive window)
    psi, H, region = (standard_scene[k] for k in ("psi", "H", "region"))
    series = zf.arrival_series(psi, H, region, 10.0, 0.02)
    cfg = ProtocolConfig(delta_t=2.5, k_max=4,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    w = hazard_rate(record)
    edges = np.round(record.times / 0.02).astype(int)
    k = 2   # bin (5.0, 7.5]: survival still 0.9+, rate well resolved
    s = slice(edges[k], edges[k + 1] + 1)
    ref = trapezoid(series.flux[s] / series.region_prob[s],
                    series.times[s]) / 2.5
    assert w[k] == pytest.approx(ref, rel=0.02)


def test_survival_closed_form_trivial_cases():
    times = np.linspace(0, 10, 101)
    assert survival_closed_form(times, np.zeros(101), 10.0) == 1.0
    gamma = 0.3
    out = survival_closed_form(times, np.full(101, gamma), 10.0)
    assert out == pytest.approx(np.exp(-gamma * 10.0), rel=1e-12)


def test_survival_closed_form_matches_protocol(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    cfg = ProtocolConfig(delta_t=0.05, k_max=400,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    w = hazard_rate(record)
    closed = survival_closed_form(record.times[1:], w, 20.0)
    assert closed == pytest.approx(record.survival[-1], rel=0.02)


# ---------------------------------------------------------------------------
# click sampling

def test_sampler_all_undetected_when_no_clicks(standard_scene):
    grid = standard_scene["grid"]
    cfg = ProtocolConfig(delta_t=0.25, k_max=8,
                         projector=zf.spatial_projector(zf.full_region(grid)))
    record = run_protocol(standard_scene["psi"], standard_scene["H"], cfg)
    samples = click_time_sampler(record, 500, seed=1)
    assert all(not s.detected for s in samples)


def test_sampler_certain_first_step_click(standard_scene):
    record = MeasurementRecord(
        times=np.array([0.0, 0.5]),
        survival=np.array([1.0, 0.0]),
        conditional_no_click=np.array([0.0]),
        conditional_click=np.array([1.0]),
        delta_t=0.5,
        projector=standard_scene["projector"])
    samples = click_time_sampler(record, 200, seed=9)
    assert all(s.detected and s.time == 0.5 for s in samples)


def test_sampler_distribution_and_reproducibility(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    cfg = ProtocolConfig(delta_t=0.2, k_max=100,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    samples = click_time_sampler(record, 10000, seed=42)
    again = click_time_sampler(record, 10000, seed=42)
    assert samples == again
    detected = np.array([s.time for s in samples if s.detected])
    cdf = np.cumsum(record.click_probabilities())
    emp = np.array([(detected <= t).sum() / len(samples)
                    for t in record.times[1:]])
    assert np.max(np.abs(emp - cdf)) < 0.02
    undetected = sum(not s.detected for s in samples) / len(samples)
    assert undetected == pytest.approx(record.survival[-1], abs=0.02)


# ---------------------------------------------------------------------------
# invariants

def test_contraction_over_random_states(standard_scene):
    grid, H = standard_scene["grid"], standard_scene["H"]
    proj = standard_scene["projector"]
    rng = np.random.default_rng(7)
    for _ in range(50):
        amps = rng.standard_normal(grid.n_points) \
            + 1j * rng.standard_normal(grid.n_points)
        psi = zf.WaveFunction(grid, amps)
        out = step_V(psi, H, proj, 0.1, _spectral(0.1))
        assert out.norm_sq <= psi.norm_sq * (1 + 1e-12)


def test_discrete_semigroup_bit_identity(standard_scene):
    # j steps then k steps is the identical float sequence as j+k steps
    psi, H = standard_scene["psi"], standard_scene["H"]
    proj = standard_scene["projector"]

    def chain(state, steps):
        for _ in range(steps):
            state = step_V(state, H, proj, 0.5, _spectral(0.5))
        return state

    a = chain(psi, 7)
    b = chain(chain(psi, 3), 4)
    assert np.array_equal(a.amplitudes, b.amplitudes)


def test_v_zero_acts_as_projector(standard_scene):
    # the zeroth step of the protocol is the bare projection
    grid = standard_scene["grid"]
    x = grid.positions
    straddle = zf.WaveFunction(
        grid, np.exp(-(x + 55.5) ** 2)).normalized()  # sits on the far cut
    region = standard_scene["region"]
    projected = zf.apply_projector(standard_scene["projector"], straddle)
    cfg = ProtocolConfig(delta_t=0.25, k_max=1,
                         projector=standard_scene["projector"])
    record = run_protocol(standard_scene["psi"], standard_scene["H"], cfg)
    assert record.survival[0] == pytest.approx(
        zf.apply_projector(standard_scene["projector"],
                           standard_scene["psi"]).norm_sq, abs=1e-15)
    assert projected.norm_sq < straddle.norm_sq  # straddles the far cut


def test_survival_product_decomposition(standard_scene):
    psi, H = standard_scene["psi"], standard_scene["H"]
    cfg = ProtocolConfig(delta_t=0.5, k_max=30,
                         projector=standard_scene["projector"])
    record = run_protocol(psi, H, cfg)
    rebuilt = record.survival[0] * np.cumprod(record.conditional_no_click)
    assert np.max(np.abs(rebuilt - record.survival[1:])) < 1e-10
    assert np.all(np.diff(record.survival) <= 1e-15)  # nonincreasing


def test_breakdown_flags_detect_out_of_range_values(standard_scene):
    record = MeasurementRecord(
        times=np.array([0.0, 0.1, 0.2]),
        survival=np.array([1.0, 1.0005, 0.9]),
        conditional_no_click=np.array([1.0005, 0.95]),
        conditional_click=np.array([-0.0005, 0.05]),
        delta_t=0.1,
        projector=standard_scene["projector"],
        breakdown_flags=np.array([True, False]))
    assert record.has_breakdown
    assert list(record.breakdown_flags) == [True, False]


# ---------------------------------------------------------------------------
# validity window and plateau detection

def test_validity_window_values():
    lo, hi = validity_window(mass=1.0, dx=0.02, t=10.0)
    assert lo == pytest.approx(10 * 1.0 * 0.02 ** 2)
    assert hi == pytest.approx(0.5)


def test_find_plateau_synthetic():
    vals = np.array([0.30, 0.50, 0.501, 0.499, 0.502, 0.70])
    assert find_plateau(vals) == (1, 4)
    assert find_plateau(np.array([0.1, 0.5, 0.9])) is None


def test_convergence_window_requires_divisible_intervals(standard_scene):
    with pytest.raises(ValueError):
        convergence_window(standard_scene["psi"], standard_scene["H"],
                           standard_scene["projector"], 10.0, [3.0])


def _raw_chain_residual(n, delta_t, t):
    """|| V^k psi0 - pibar U(t) psi0 || for the standard scenario at a
    given resolution (raw chains, no renormalization)."""
    grid = zf.make_grid(-60, 30, n)
    psi = zf.gaussian_packet(grid, -20, 2, 2)
    H = zf.build_hamiltonian(grid, 1.0)
    proj = zf.spatial_projector(zf.half_line_region(grid, 0.0, "left"))
    cfg = _spectral(delta_t)
    state = zf.apply_projector(proj, psi)
    for _ in range(int(round(t / delta_t))):
        state = zf.apply_projector(proj, zf.evolve(state, H, delta_t, cfg))
    ref = zf.apply_projector(proj, zf.evolve(psi, H, t, cfg))
    return float(np.sqrt(np.sum(np.abs(state.amplitudes - ref.amplitudes) ** 2)
                         * grid.dx))


def test_passive_equivalence_residual_converges_in_dx():
    # the gap between the pulsed chain and the once-projected unmeasured
    # state is a continuum quantity at fixed delta_t: refining the grid
    # reproduces it instead of shrinking it
    residuals = [_raw_chain_residual(n, 2.5, 10.0) for n in (2048, 4096, 8192)]
    assert np.ptp(residuals) < 0.02 * np.mean(residuals)
    assert residuals[-1] > 0.01  # genuinely nonzero in the continuum


@pytest.mark.xfail(
    strict=True,
    reason="the pulsed-vs-unmeasured residual at fixed delta_t does not "
           "vanish with the grid: it converges to the finite continuum "
           "passivity violation of hard pulsed projections (the same "
           "physics that pins the passive plateau at large delta_t)")
def test_passive_equivalence_residual_vanishes_in_dx():
    coarse = _raw_chain_residual(1024, 2.5, 10.0)
    fine = _raw_chain_residual(16384, 2.5, 10.0)
    assert fine < 0.5 * coarse
