"""Experiment configuration, run orchestration, and the self-test entry
point for the ``zenoflux`` command.

Config format: sectioned plain text, ``[section]`` headers, ``key = value``
lines, ``#`` comments.  Sections and keys:

    [grid]       x_min, x_max, n_points
    [packet]     kind (gaussian|truncated), x0, sigma, k0
    [potential]  kind (free|harmonic|tabulated), mass, omega, center, file
    [detector]   boundary, side (left_of|right_of), margin_fraction
    [propagator] method (spectral|crank_nicolson), dt
    [protocol]   delta_t, k_max, projector_kind (spatial|rank_one)
    [run]        kind (protocol|arrival|zeno_scan|gambler|finite_dim|
                 gamma_check), t_max, sample_dt, t_fixed, delta_t_list,
                 seed, n_samples, n_trials, dim_min, dim_max
    [output]     directory, formats (csv,json)

CSV output uses 17 significant digits (round-trip exact for doubles) with
a mandatory header row; JSON is UTF-8 with sorted keys.  Identical config
and seed produce byte-identical CSV/JSON files.

Exit codes: 0 ok, 2 parse error, 3 validation error, 4 numerical
breakdown, 5 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .arrival import arrival_series
from .core_state import (Projector, Region, WaveFunction, apply_projector,
                         full_region, gaussian_packet, half_line_region,
                         make_grid, polar_decompose, rank_one_projector,
                         spatial_projector, spatial_region, truncated_state)
from .errors import (BoundaryLeak, NonMonotoneWindow, ParseError,
                     ValidationError, ZenofluxError)
from .measurement import (ProtocolConfig, click_time_sampler, hazard_rate,
                          run_protocol, validity_window)
from .propagator import (CRANK_NICOLSON, SPECTRAL, PropagatorConfig,
                         build_hamiltonian, energy_expectation, evolve)
from .zeno_lab import (finite_dim_impossibility, gamma_crosscheck,
                       gambler_curve, random_impossibility_trials, zeno_scan)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_BREAKDOWN = 4
EXIT_IO = 5

RUN_KINDS = ("protocol", "arrival", "zeno_scan", "gambler", "finite_dim",
             "gamma_check")

_SCHEMA: dict[str, dict[str, type]] = {
    "grid": {"x_min": float, "x_max": float, "n_points": int},
    "packet": {"kind": str, "x0": float, "sigma": float, "k0": float},
    "potential": {"kind": str, "mass": float, "omega": float,
                  "center": float, "file": str},
    "detector": {"boundary": float, "side": str, "margin_fraction": float},
    "propagator": {"method": str, "dt": float},
    "protocol": {"delta_t": float, "k_max": int, "projector_kind": str},
    "run": {"kind": str, "t_max": float, "sample_dt": float, "t_fixed": float,
            "delta_t_list": list, "seed": int, "n_samples": int,
            "n_trials": int, "dim_min": int, "dim_max": int},
    "output": {"directory": str, "formats": list},
}


@dataclass
class ExperimentConfig:
    """Validated experiment description (one section per dataclass field)."""

    grid: dict = field(default_factory=dict)
    packet: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    propagator: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate sectioned key=value text.

    Raises ParseError (with line number) on malformed text and
    ValidationError on the first violated constraint.
    """
    sections: dict[str, dict] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"unterminated section header {raw!r}")
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ParseError(lineno, f"unknown section [{name}]")
            sections.setdefault(name, {})
            current = name
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw!r}")
        if current is None:
            raise ParseError(lineno, "key=value line before any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[current]:
            raise ParseError(lineno, f"unknown key {key!r} in [{current}]")
        sections[current][key] = _coerce(current, key, value, lineno)
    cfg = ExperimentConfig(**{name: sections.get(name, {})
                              for name in _SCHEMA})
    _validate(cfg)
    return cfg


def _coerce(section: str, key: str, value: str, lineno: int):
    kind = _SCHEMA[section][key]
    try:
        if kind is float:
            return float(value)
        if kind is int:
            out = float(value)
            if out != int(out):
                raise ValueError
            return int(out)
        if kind is list:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if key == "formats":
                return items
            return [float(v) for v in items]
        return value
    except ValueError:
        raise ParseError(lineno,
                         f"cannot parse {key} value {value!r}") from None


def _require(cfg: ExperimentConfig, section: str, key: str):
    value = getattr(cfg, section).get(key)
    if value is None:
        raise ValidationError(f"{section}.{key}",
                              "required for this run kind")
    return value


def _validate(cfg: ExperimentConfig) -> None:
    kind = cfg.run.get("kind")
    if kind is None:
        raise ValidationError("run.kind", "required")
    if kind not in RUN_KINDS:
        raise ValidationError("run.kind", f"must be one of {RUN_KINDS}")

    for fmt in cfg.output.get("formats", []):
        if fmt not in ("csv", "json"):
            raise ValidationError("output.formats", "entries must be csv|json")

    if kind == "finite_dim":
        n_trials = cfg.run.get("n_trials", 1000)
        if n_trials < 1:
            raise ValidationError("run.n_trials", "must be >= 1")
        lo = cfg.run.get("dim_min", 2)
        hi = cfg.run.get("dim_max", 8)
        if not (2 <= lo <= hi):
            raise ValidationError("run.dim_min", "need 2 <= dim_min <= dim_max")
        return

    for key in ("x_min", "x_max", "n_points"):
        _require(cfg, "grid", key)
    if cfg.grid["n_points"] < 16:
        raise ValidationError("grid.n_points", "must be >= 16")
    if cfg.grid["x_max"] <= cfg.grid["x_min"]:
        raise ValidationError("grid.x_max", "must exceed x_min")

    pk = cfg.packet.get("kind", "gaussian")
    if pk not in ("gaussian", "truncated"):
        raise ValidationError("packet.kind", "must be gaussian|truncated")
    for key in ("x0", "sigma", "k0"):
        _require(cfg, "packet", key)
    if cfg.packet["sigma"] <= 0:
        raise ValidationError("packet.sigma", "must be > 0")

    vk = cfg.potential.get("kind", "free")
    if vk not in ("free", "harmonic", "tabulated"):
        raise ValidationError("potential.kind",
                              "must be free|harmonic|tabulated")
    mass = cfg.potential.get("mass", 1.0)
    if mass <= 0:
        raise ValidationError("potential.mass", "must be > 0")
    if vk == "tabulated" and "file" not in cfg.potential:
        raise ValidationError("potential.file", "required for tabulated")

    _require(cfg, "detector", "boundary")
    side = cfg.detector.get("side", "left_of")
    if side not in ("left_of", "right_of"):
        raise ValidationError("detector.side", "must be left_of|right_of")

    method = cfg.propagator.get("method", SPECTRAL)
    if method not in (SPECTRAL, CRANK_NICOLSON):
        raise ValidationError("propagator.method",
                              "must be spectral|crank_nicolson")
    if cfg.propagator.get("dt", 1e-2) <= 0:
        raise ValidationError("propagator.dt", "must be > 0")

    if kind in ("protocol", "gambler"):
        dt = _require(cfg, "protocol", "delta_t")
        if dt <= 0:
            raise ValidationError("protocol.delta_t", "must be > 0")
    if kind == "protocol":
        if _require(cfg, "protocol", "k_max") < 1:
            raise ValidationError("protocol.k_max", "must be >= 1")
    if kind in ("arrival", "gambler"):
        if _require(cfg, "run", "t_max") <= 0:
            raise ValidationError("run.t_max", "must be > 0")
    if kind == "arrival":
        if _require(cfg, "run", "sample_dt") <= 0:
            raise ValidationError("run.sample_dt", "must be > 0")
    if kind == "gambler":
        delta_t = cfg.protocol["delta_t"]
        t_max = cfg.run["t_max"]
        if abs(round(t_max / delta_t) * delta_t - t_max) > 1e-9 * t_max:
            raise ValidationError("protocol.delta_t", "must divide run.t_max")
    if kind == "zeno_scan":
        t_fixed = _require(cfg, "run", "t_fixed")
        if t_fixed <= 0:
            raise ValidationError("run.t_fixed", "must be > 0")
        lst = _require(cfg, "run", "delta_t_list")
        if not lst or any(v <= 0 for v in lst):
            raise ValidationError("run.delta_t_list",
                                  "must be a non-empty list of positive values")
        for v in lst:
            if abs(round(t_fixed / v) * v - t_fixed) > 1e-9 * t_fixed \
                    or round(t_fixed / v) < 1:
                raise ValidationError("run.delta_t_list",
                                      f"entry {v} does not divide t_fixed")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = zip(*columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """What a run produced: config echo, diagnostics, files and digests."""

    config: dict
    version: str
    diagnostics: dict
    wall_clock_s: float
    files: list[dict]
    breakdown: bool = False

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "diagnostics": self.diagnostics,
            "wall_clock_s": self.wall_clock_s,
            "files": self.files,
            "breakdown": self.breakdown,
        }


def _build_scene(cfg: ExperimentConfig):
    """Grid, Hamiltonian, region, projector and initial state per config."""
    grid = make_grid(cfg.grid["x_min"], cfg.grid["x_max"],
                     cfg.grid["n_points"])
    vk = cfg.potential.get("kind", "free")
    mass = cfg.potential.get("mass", 1.0)
    if vk == "free":
        pot = None
    elif vk == "harmonic":
        omega = cfg.potential.get("omega", 1.0)
        center = cfg.potential.get("center", 0.0)
        pot = lambda x: 0.5 * mass * omega ** 2 * (x - center) ** 2
    else:
        table = np.loadtxt(cfg.potential["file"], delimiter=",")
        pot = np.interp(grid.positions, table[:, 0], table[:, 1])
    H = build_hamiltonian(grid, mass, pot)

    side = "left" if cfg.detector.get("side", "left_of") == "left_of" else "right"
    margin = cfg.detector.get("margin_fraction", 0.05)
    region = half_line_region(grid, cfg.detector["boundary"], side, margin)

    packet = gaussian_packet(grid, cfg.packet["x0"], cfg.packet["sigma"],
                             cfg.packet["k0"])
    if cfg.packet.get("kind", "gaussian") == "truncated":
        psi0 = truncated_state(grid, region, packet)
    else:
        psi0 = packet

    if cfg.protocol.get("projector_kind", "spatial") == "rank_one":
        projector = rank_one_projector(psi0)
    else:
        projector = spatial_projector(region)
    return grid, H, region, projector, psi0


def _propagator_config(cfg: ExperimentConfig, region: Region,
                       delta_t: float | None = None,
                       guard: str | None = None) -> PropagatorConfig | None:
    if not cfg.propagator:
        return None
    method = cfg.propagator.get("method", SPECTRAL)
    dt = cfg.propagator.get("dt", delta_t if delta_t else 1e-2)
    if guard is None:
        guard = region.anchored or "both"
    return PropagatorConfig(method=method, dt=dt, leak_guard=guard)


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   seed: int | None = None,
                   threads: int | None = None) -> RunManifest:
    """Execute a validated config and emit its declared outputs."""
    t_start = time.perf_counter()
    kind = cfg.run["kind"]
    seed = seed if seed is not None else cfg.run.get("seed", 0)
    threads = threads or 1
    directory = Path(out_dir if out_dir is not None
                     else cfg.output.get("directory", "."))
    directory.mkdir(parents=True, exist_ok=True)
    formats = cfg.output.get("formats", ["csv", "json"])

    emit: list[Path] = []
    diagnostics: dict = {}
    breakdown = False

    if kind == "finite_dim":
        n_trials = cfg.run.get("n_trials", 1000)
        dims = (cfg.run.get("dim_min", 2), cfg.run.get("dim_max", 8))
        trials = _parallel_trials(n_trials, dims, seed, threads)
        if "json" in formats:
            path = directory / "finite_dim.json"
            _write_json(path, [{"dim": t.dim,
                                "commutator_norm": t.commutator_norm,
                                "magic_norm": t.magic_norm} for t in trials])
            emit.append(path)
        diagnostics["n_trials"] = n_trials
    else:
        grid, H, region, projector, psi0 = _build_scene(cfg)
        horizon = cfg.run.get("t_max") or cfg.run.get("t_fixed") or 1.0
        lo, hi = validity_window(H.mass, grid.dx, horizon)
        diagnostics["validity_window_default"] = [lo, hi]

        if kind == "arrival":
            series = arrival_series(psi0, H, region, cfg.run["t_max"],
                                    cfg.run["sample_dt"],
                                    _propagator_config(cfg, region))
            diagnostics["continuity_residual"] = series.continuity_residual
            if "csv" in formats:
                path = directory / "arrival.csv"
                _write_csv(path, ["t", "P_bar", "flux", "P_arr", "P_dep", "w"],
                           [series.times, series.region_prob, series.flux,
                            series.arrival_density, series.departure_density,
                            series.hazard])
                emit.append(path)

        elif kind == "protocol":
            delta_t = cfg.protocol["delta_t"]
            pcfg = ProtocolConfig(
                delta_t=delta_t, k_max=cfg.protocol["k_max"],
                projector=projector,
                propagator=_propagator_config(cfg, region, delta_t,
                                              guard="off"))
            record = run_protocol(psi0, H, pcfg)
            breakdown = record.has_breakdown
            diagnostics["halted_early"] = record.halted_early
            if "csv" in formats:
                path = directory / "protocol.csv"
                w = hazard_rate(record)
                _write_csv(path, ["t", "P_bar", "p_bar_cond", "p_cond", "w"],
                           [record.times[1:], record.survival[1:],
                            record.conditional_no_click,
                            record.conditional_click, w])
                emit.append(path)
            n_samples = cfg.run.get("n_samples", 0)
            if n_samples > 0 and "csv" in formats:
                samples = click_time_sampler(record, n_samples, seed)
                path = directory / "clicks.csv"
                det = np.array([1.0 if s.detected else 0.0 for s in samples])
                tms = np.array([s.time if s.detected else np.nan
                                for s in samples])
                _write_csv(path, ["sample", "detected", "time"],
                           [np.arange(len(samples), dtype=float), det, tms])
                emit.append(path)

        elif kind == "zeno_scan":
            result = zeno_scan(psi0, H, projector, cfg.run["t_fixed"],
                               cfg.run["delta_t_list"],
                               _propagator_config(cfg, region, guard="off"))
            if "csv" in formats:
                path = directory / "zeno_scan.csv"
                _write_csv(path, ["delta_t", "survival"],
                           [result.delta_t_values, result.survival_at_t])
                emit.append(path)
            plateau = {
                "fitted_small_dt_exponent": _json_float(
                    result.fitted_small_dt_exponent),
                "exponent_residual": _json_float(result.exponent_residual),
                "plateau_window": list(result.plateau_window)
                if result.plateau_window else None,
                "plateau_value": result.plateau_value,
            }
            diagnostics["plateau"] = plateau
            if "json" in formats:
                path = directory / "plateau.json"
                _write_json(path, plateau)
                emit.append(path)

        elif kind == "gambler":
            curve = gambler_curve(psi0, H, projector, cfg.protocol["delta_t"],
                                  cfg.run["t_max"],
                                  _propagator_config(
                                      cfg, region, cfg.protocol["delta_t"],
                                      guard="off"))
            if "csv" in formats:
                path = directory / "gambler.csv"
                _write_csv(path, ["t", "click_rate"],
                           [curve[:, 0], curve[:, 1]])
                emit.append(path)

        elif kind == "gamma_check":
            gammas = gamma_crosscheck(psi0, region, H.mass)
            diagnostics["gamma"] = gammas
            if "json" in formats:
                path = directory / "gamma_check.json"
                _write_json(path, gammas)
                emit.append(path)

    manifest = RunManifest(
        config={name: getattr(cfg, name) for name in _SCHEMA},
        version=__version__,
        diagnostics=diagnostics,
        wall_clock_s=time.perf_counter() - t_start,
        files=[{"path": p.name, "sha256": _digest(p)} for p in emit],
        breakdown=breakdown,
    )
    _write_json(directory / "manifest.json", manifest.to_json())
    return manifest


def _json_float(x: float):
    return None if not np.isfinite(x) else float(x)


def _parallel_trials(n_trials: int, dims, seed: int, threads: int):
    if threads <= 1:
        return random_impossibility_trials(n_trials, dims, seed)
    # deterministic split: per-chunk seeds derived from the base seed
    chunk = (n_trials + threads - 1) // threads
    sizes = [min(chunk, n_trials - i * chunk) for i in range(threads)]
    sizes = [s for s in sizes if s > 0]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda iv: random_impossibility_trials(
            iv[1], dims, seed + iv[0]), enumerate(sizes))
    out = []
    for part in parts:
        out.extend(part)
    return out


# ---------------------------------------------------------------------------
# self test

_FAULTS: set[str] = set()


def set_self_test_fault(name: str, active: bool = True) -> None:
    """Test hook: force a named self-test check to see corrupted data."""
    if active:
        _FAULTS.add(name)
    else:
        _FAULTS.discard(name)


def self_test(stream=None) -> bool:
    """Run the fast invariant suite; prints one status line per check."""
    stream = stream if stream is not None else sys.stdout
    checks = [
        ("grid arithmetic", _check_grid),
        ("packet normalization", _check_packet),
        ("projector idempotence", _check_idempotence),
        ("projector complementarity", _check_complementarity),
        ("polar reconstruction", _check_polar),
        ("evolve identity at t=0", _check_evolve_identity),
        ("propagator unitarity", _check_unitarity),
        ("plane-wave current", _check_current),
        ("boundary term of real states", _check_real_b2),
        ("protocol product rule", _check_product_rule),
        ("click sampler edge cases", _check_sampler),
        ("finite-dim 2x2 case", _check_finite_dim),
        ("config round trip", _check_config),
    ]
    all_ok = True
    for name, fn in checks:
        try:
            fn()
            print(f"[PASS] {name}", file=stream)
        except Exception as exc:  # report and continue
            print(f"[FAIL] {name}: {exc}", file=stream)
            all_ok = False
    return all_ok


def _small_scene():
    grid = make_grid(-40, 24, 1024)
    psi = gaussian_packet(grid, -15, 1.2, 1.5)
    H = build_hamiltonian(grid, 1.0)
    region = half_line_region(grid, 0.0, "left")
    return grid, psi, H, region


def _check_grid():
    grid = make_grid(-50, 50, 1024)
    assert abs(grid.dx - 100 / 1024) < 1e-15
    fine = make_grid(-50, 50, 2048)
    assert abs(fine.dx - grid.dx / 2) < 1e-15


def _check_packet():
    _, psi, _, _ = _small_scene()
    assert abs(psi.norm_sq - 1.0) < 1e-12


def _check_idempotence():
    grid, psi, _, region = _small_scene()
    p = spatial_projector(region)
    once = apply_projector(p, psi)
    twice = apply_projector(p, once)
    assert np.max(np.abs(twice.amplitudes - once.amplitudes)) < 1e-14


def _check_complementarity():
    grid, psi, _, region = _small_scene()
    masked = np.where(region.mask, psi.amplitudes, 0.0)
    rest = psi.amplitudes - masked
    total = (np.sum(np.abs(masked) ** 2) + np.sum(np.abs(rest) ** 2)) * grid.dx
    assert abs(total - psi.norm_sq) < 1e-12


def _check_polar():
    _, psi, _, _ = _small_scene()
    fields = polar_decompose(psi)
    rebuilt = fields.recombined()
    ok = fields.phase_defined
    assert np.max(np.abs(rebuilt[ok] - psi.amplitudes[ok])) < 1e-10


def _check_evolve_identity():
    _, psi, H, _ = _small_scene()
    out = evolve(psi, H, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def _check_unitarity():
    _, psi, H, _ = _small_scene()
    for method in (SPECTRAL, CRANK_NICOLSON):
        cfg = PropagatorConfig(method=method, dt=1e-2, leak_guard="off")
        out = evolve(psi, H, 5.0, cfg)
        drift = abs(out.norm_sq - 1.0)
        if "propagator_unitarity" in _FAULTS:
            drift += 1.0  # injected fault
        assert drift < 1e-10, f"{method} norm drift {drift:.2e}"


def _check_current():
    from .arrival import probability_current
    grid = make_grid(0.0, 2 * np.pi, 8192)
    k = 2.0
    amps = np.exp(1j * k * grid.positions) / np.sqrt(2 * np.pi)
    psi = WaveFunction(grid, amps)
    j = probability_current(psi, 1.0)
    assert np.max(np.abs(j - k / (2 * np.pi))) < 1e-6 / (2 * np.pi) * 10


def _check_real_b2():
    from .propagator import energy_decomposition
    grid = make_grid(-0.5, 1.5, 2048)
    region = spatial_region(grid, [(0.0, 1.0)])
    x = grid.positions
    amps = np.where(region.mask, np.sin(np.pi * x) ** 2, 0.0).astype(complex)
    psi = WaveFunction(grid, amps).normalized()
    dec = energy_decomposition(psi, region, 1.0)
    assert abs(dec.boundary_B2) < 1e-8


def _check_product_rule():
    grid, psi, H, region = _small_scene()
    cfg = ProtocolConfig(delta_t=0.25, k_max=12,
                         projector=spatial_projector(region))
    record = run_protocol(psi, H, cfg)
    rebuilt = record.survival[0] * np.cumprod(record.conditional_no_click)
    assert np.max(np.abs(rebuilt - record.survival[1:])) < 1e-10


def _check_sampler():
    grid, psi, H, region = _small_scene()
    cfg = ProtocolConfig(delta_t=0.25, k_max=8,
                         projector=spatial_projector(full_region(grid)))
    record = run_protocol(psi, H, cfg)
    samples = click_time_sampler(record, 256, seed=7)
    assert all(not s.detected for s in samples)


def _check_finite_dim():
    res = finite_dim_impossibility(np.array([[0, 1], [1, 0]], dtype=complex),
                                   [1, 0])
    assert abs(res.commutator_norm - np.sqrt(2)) < 1e-12
    assert abs(res.magic_norm - 1.0) < 1e-12


def _check_config():
    cfg = parse_config(MINIMAL_ARRIVAL_CONFIG)
    assert cfg.run["kind"] == "arrival"


MINIMAL_ARRIVAL_CONFIG = """\
[grid]
x_min = -60
x_max = 30
n_points = 4096

[packet]
kind = gaussian
x0 = -20
sigma = 2
k0 = 2

[potential]
kind = free
mass = 1.0

[detector]
boundary = 0.0
side = left_of

[run]
kind = arrival
t_max = 20
sample_dt = 0.02

[output]
directory = out
formats = csv, json
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zenoflux",
        description="repeated no-click measurement and arrival-time lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)

    sub.add_parser("self-test", help="run the fast invariant checks")

    p_val = sub.add_parser("validate", help="parse and validate a config")
    p_val.add_argument("config", type=Path)

    args = parser.parse_args(argv)

    if args.command == "self-test":
        return EXIT_OK if self_test() else 1

    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        cfg = parse_config(text)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print("ok")
        return EXIT_OK

    threads = args.threads
    if threads is None:
        env = os.environ.get("ZENOFLUX_THREADS")
        threads = int(env) if env else 1

    try:
        manifest = run_experiment(cfg, out_dir=args.out, seed=args.seed,
                                  threads=threads)
    except (ValidationError, ValueError) as exc:
        # physics preconditions violated by the configured scene
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BoundaryLeak, NonMonotoneWindow) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except ZenofluxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    if manifest.breakdown:
        print("run completed with breakdown flags", file=sys.stderr)
        return EXIT_BREAKDOWN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
