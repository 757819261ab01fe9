"""Shared numerical kernels: derivative stencils, local interpolation near
interval ends, and polynomial extrapolation of one-sided boundary limits."""

from __future__ import annotations

import numpy as np

from .errors import ExtrapolationDiverged

#: default geometric offsets for one-sided boundary limits
DEFAULT_EPSILON_SEQ = (1e-2, 1e-3, 1e-4, 1e-5)

#: numpy renamed trapz to trapezoid in 2.0
trapezoid = getattr(np, "trapezoid", np.trapz)


def derivative_on_run(values: np.ndarray, dx: float) -> np.ndarray:
    """First derivative of samples on one contiguous run.

    Fourth-order centred differences in the interior, second-order
    one-sided at the two points nearest each end.  Needs >= 5 samples.
    """
    v = np.asarray(values)
    if v.size < 5:
        raise ValueError("derivative stencil needs at least 5 samples")
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dx)
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    d[1] = (v[2] - v[0]) / (2.0 * dx)
    d[-2] = (v[-1] - v[-3]) / (2.0 * dx)
    d[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return d


def second_derivative_on_run(values: np.ndarray, dx: float) -> np.ndarray:
    """Second derivative on one contiguous run; same stencil policy."""
    v = np.asarray(values)
    if v.size < 5:
        raise ValueError("derivative stencil needs at least 5 samples")
    d2 = np.empty_like(v)
    d2[2:-2] = (-v[:-4] + 16.0 * v[1:-3] - 30.0 * v[2:-2]
                + 16.0 * v[3:-1] - v[4:]) / (12.0 * dx * dx)
    d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (dx * dx)
    d2[1] = (v[0] - 2.0 * v[1] + v[2]) / (dx * dx)
    d2[-2] = (v[-3] - 2.0 * v[-2] + v[-1]) / (dx * dx)
    d2[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (dx * dx)
    return d2


def cubic_eval(xs: np.ndarray, ys: np.ndarray, x: float):
    """Value and first derivative at ``x`` of the cubic through 4 samples.

    Coordinates are centred at ``x`` and scaled by the sample span for
    conditioning, so mild one-sided extrapolation is stable.
    """
    xs = np.asarray(xs, dtype=float)
    span = xs[-1] - xs[0]
    t = (xs - x) / span
    coeffs = np.polyfit(t, np.asarray(ys), xs.size - 1)
    value = coeffs[-1]
    deriv = coeffs[-2] / span
    return value, deriv


def stencil_start(target_x: float, x0: float, dx: float,
                  lo: int, hi: int, width: int = 4) -> int:
    """First index of the ``width`` grid points nearest ``target_x``,
    clamped into the index run ``[lo, hi)``."""
    if hi - lo < width:
        raise ValueError("interpolation run narrower than the stencil")
    i = int(np.floor((target_x - x0) / dx)) - (width // 2 - 1)
    return min(max(i, lo), hi - width)


def neville_to_zero(eps, vals):
    """Polynomial extrapolation of samples ``(eps_i, vals_i)`` to eps = 0.

    Returns ``(limit, step)`` where ``step`` is the size of the final
    tableau refinement, usable as a convergence estimate.
    """
    eps = np.asarray(eps, dtype=float)
    cur = np.array(vals, dtype=np.result_type(np.asarray(vals), float))
    n = eps.size
    if n < 2:
        return cur[0], np.inf
    prev_best = cur[-1]
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            cur[i] = (eps[i] * cur[i - 1] - eps[i - j] * cur[i]) \
                / (eps[i] - eps[i - j])
        if j == n - 1:
            step = abs(cur[-1] - prev_best)
        prev_best = cur[-1]
    return cur[-1], step


def check_extrapolation(limit, step, rel_tol: float = 1e-4) -> None:
    """Raise when the last refinement exceeds ``rel_tol`` of the result scale."""
    scale = max(abs(limit), 1.0)
    if step > rel_tol * scale:
        raise ExtrapolationDiverged(
            f"boundary-limit extrapolants still moving by {step:.3e} "
            f"(limit {limit:.6e})")


def filter_epsilons(eps_seq, half_width: float):
    """Keep offsets that stay well inside an interval of half-width given."""
    kept = tuple(e for e in eps_seq if 0.0 < e < 0.5 * half_width)
    if len(kept) < 3:
        raise ValueError(
            "epsilon sequence leaves fewer than 3 usable offsets for "
            f"an interval of half-width {half_width:.3e}")
    return kept


def one_sided_product_limit(x: np.ndarray, amps: np.ndarray,
                            lo: int, hi: int, boundary_x: float,
                            side: str, eps_seq, dx: float):
    """One-sided limit of conj(psi)*psi' at an interval end.

    ``side`` is "left" for the limit at a+eps (interior to the right of
    the boundary) or "right" for b-eps.  Uses a local cubic through the 4
    interior samples nearest each offset, then extrapolates the offsets
    to zero.  Returns ``(limit, step)`` with a complex limit.
    """
    sign = 1.0 if side == "left" else -1.0
    vals = []
    for eps in eps_seq:
        target = boundary_x + sign * eps
        i0 = stencil_start(target, x[0], dx, lo, hi)
        xs = x[i0:i0 + 4]
        ys = amps[i0:i0 + 4]
        value, deriv = cubic_eval(xs, ys, target)
        vals.append(np.conj(value) * deriv)
    return neville_to_zero(eps_seq, vals)
