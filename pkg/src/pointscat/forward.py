"""Time-domain forward solver for waves scattered by point scatterers.

The scatterers carry charges ``q_j(t)`` obeying the retarded system::

    dq_j/dt + 4 pi alpha_j q_j = 4 pi u0(t, y_j)
                                 + sum_{i != j} H(t - d_ij) q_i(t - d_ij) / d_ij

and the scattered field is the sum of retarded monopoles::

    u(t, x) - u0(t, x) = sum_j H(t - |x - y_j|) q_j(t - |x - y_j|) / (4 pi |x - y_j|)

With an ideal pulse ``sum_l f_l delta(t) delta(x - x_l)`` the free field at
``y_j`` is ``sum_l f_l delta(t - r_jl) / (4 pi r_jl)``, so each charge jumps by
``f_l / r_jl`` when the pulse from sensor ``l`` arrives.  The mollified mode
replaces each point source by a uniform ball of radius ``epsilon``.

Time grids are uniform with every breakpoint inserted as a node.  A jump is
stored as two nodes with the same time: the first holds the left limit, the
second the right limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import (BeyondHorizon, EvaluationAtScatterer, HorizonNonPositive,
                     NonPositiveEpsilon, ScatteringError, StepTooLarge)
from .scene import (PulseWeights, ScattererArray, SensorArray, pairwise_distances,
                    validate_scene)

__all__ = [
    "ArrivalEvent", "ChargeTrajectories", "SensorTraces", "arrival_events",
    "solve_charges", "scattered_field", "sensor_traces", "free_field_mollified",
    "sphere_ball_fraction", "default_step", "sample",
]

FOUR_PI = 4.0 * np.pi
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


class ArrivalEvent(NamedTuple):
    time: float
    scatterer: int
    jump: float
    sensor: int


@dataclass(frozen=True)
class ChargeTrajectories:
    """Sampled charges ``values[j, k] = q_j(times[k])``.

    Repeated entries in ``times`` mark jumps (left limit first).
    """

    times: np.ndarray
    values: np.ndarray
    jump_events: list
    horizon: float
    epsilon: float | None = None

    def sample(self, j, tau, side="right"):
        return sample(self.times, self.values[j], tau, side=side, tol=_snap_tol(self.horizon))


@dataclass(frozen=True)
class SensorTraces:
    """Scattered field ``values[k, :]`` recorded at sensor ``k`` on ``times``."""

    times: np.ndarray
    values: np.ndarray
    horizon: float
    meta: dict = field(default_factory=dict)


def _snap_tol(horizon):
    return 1e-10 * max(1.0, float(horizon))


# ---------------------------------------------------------------------------
# sampling of piecewise-linear trajectories with jumps

def _interp_coeffs(times, tau, side, tol):
    """Linear-interpolation stencils ``(i0, i1, w, valid)`` for query times ``tau``.

    Query points within ``tol`` of a node snap onto it; on a repeated node
    ``side`` picks the left or right copy.  Queries before ``times[0]`` are
    marked invalid (the trajectory is zero there).
    """
    tau = np.asarray(tau, dtype=float)
    K = times.shape[0]
    if side == "right":
        idx = np.searchsorted(times, tau + tol, side="right") - 1
        idx_c = np.clip(idx, 0, K - 1)
        hit = np.abs(times[idx_c] - tau) <= tol
        i0 = idx_c
        i1 = np.clip(idx_c + 1, 0, K - 1)
    elif side == "left":
        idx = np.searchsorted(times, tau - tol, side="left")
        idx_c = np.clip(idx, 0, K - 1)
        hit = np.abs(times[idx_c] - tau) <= tol
        i1 = idx_c
        i0 = np.clip(idx_c - 1, 0, K - 1)
    else:
        raise ValueError("side must be 'left' or 'right'")
    valid = tau >= times[0] - tol
    span = times[i1] - times[i0]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (tau - times[i0]) / span, 0.0)
    w = np.clip(w, 0.0, 1.0)
    i0 = np.where(hit, idx_c, i0)
    i1 = np.where(hit, idx_c, i1)
    w = np.where(hit, 0.0, w)
    return i0, i1, w, valid


def sample(times, values, tau, side="right", tol=0.0):
    """Evaluate a sampled trajectory at ``tau`` by linear interpolation.

    ``values`` has the time axis first; zero is returned before ``times[0]``.
    """
    tau = np.asarray(tau, dtype=float)
    i0, i1, w, valid = _interp_coeffs(times, tau.ravel(), side, tol)
    values = np.asarray(values)
    extra = (slice(None),) + (None,) * (values.ndim - 1)
    out = (1 - w)[extra] * values[i0] + w[extra] * values[i1]
    out = np.where(valid[extra], out, 0.0)
    return out.reshape(tau.shape + values.shape[1:])


def _merge_close(points, tol):
    """Sorted unique representatives of ``points`` with near-duplicates merged."""
    pts = np.sort(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts
    keep = np.concatenate([[True], np.diff(pts) > tol])
    return pts[keep]


def _snap(values, reps, tol):
    """Map each value onto the nearest representative."""
    values = np.asarray(values, dtype=float)
    idx = np.searchsorted(reps, values)
    lo = np.clip(idx - 1, 0, len(reps) - 1)
    hi = np.clip(idx, 0, len(reps) - 1)
    pick = np.where(np.abs(values - reps[lo]) <= np.abs(values - reps[hi]), lo, hi)
    return reps[pick]


def _time_grid(horizon, h, jump_times, break_times):
    """Uniform grid on [0, horizon] with breakpoints and doubled jump nodes."""
    tol = _snap_tol(horizon)
    jumps = np.asarray(jump_times, dtype=float)
    jumps = jumps[jumps <= horizon + tol]
    brk = np.asarray(break_times, dtype=float)
    brk = brk[(brk >= 0) & (brk <= horizon + tol)]
    reps = _merge_close(np.concatenate([[0.0, horizon], jumps, brk]), tol)
    reps = reps[reps <= horizon + tol]
    n_uni = int(np.ceil(horizon / h - 1e-9))
    uni = np.linspace(0.0, horizon, n_uni + 1)
    # drop uniform nodes that would create a sliver step next to a breakpoint
    pos = np.searchsorted(reps, uni)
    near = np.full(uni.shape, np.inf)
    near = np.minimum(near, np.abs(uni - reps[np.clip(pos, 0, len(reps) - 1)]))
    near = np.minimum(near, np.abs(uni - reps[np.clip(pos - 1, 0, len(reps) - 1)]))
    uni = uni[near > 1e-3 * h]
    jump_reps = np.unique(_snap(jumps, reps, tol)) if jumps.size else np.zeros(0)
    times = np.sort(np.concatenate([reps, uni, jump_reps]))
    return times, reps


# ---------------------------------------------------------------------------
# free field of a mollified pulse

def sphere_ball_fraction(t, r, epsilon):
    """Fraction of the sphere of radius ``t`` lying inside a ball.

    The sphere is centred at distance ``r`` from the centre of a ball of
    radius ``epsilon``.  Vectorised over all arguments.
    """
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    out = np.zeros(t.shape)
    inside = t + r <= epsilon
    overlap = ~inside & (np.abs(r - t) < epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = (epsilon ** 2 - (r - t) ** 2) / (4.0 * r * t)
    out = np.where(inside, 1.0, np.where(overlap & (r > 0) & (t > 0), cap, out))
    return out


def _ball_free_field(t, r, epsilon):
    """Free wave at distance ``r`` from a unit-mass uniform ball source."""
    t = np.asarray(t, dtype=float)
    return t * 3.0 / (4.0 * np.pi * epsilon ** 3) * sphere_ball_fraction(t, r, epsilon)


def free_field_mollified(sensors: SensorArray, weights: PulseWeights, epsilon, t, x):
    """Free wave ``u0(t, x)`` launched by uniform-ball pulses around the sensors.

    Kirchhoff's formula gives ``u0 = t * (spherical mean of the source)``; the
    mean over a sphere of the indicator of a ball is the cap-area fraction.
    """
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon}")
    weights.check_against(sensors)
    r = np.linalg.norm(sensors.points - np.asarray(x, dtype=float).reshape(1, 3), axis=1)
    t = np.asarray(t, dtype=float)
    vals = _ball_free_field(t[..., None], r, epsilon)
    return np.sum(weights.weights * vals, axis=-1)


# ---------------------------------------------------------------------------
# charges

def arrival_events(scatterers: ScattererArray, sensors: SensorArray,
                   weights: PulseWeights):
    """Ideal-pulse arrivals at the scatterers, sorted by time.

    One event per (scatterer, sensor) pair with a nonzero weight; the charge
    jump is ``f_l / |y_j - x_l|``.
    """
    weights.check_against(sensors)
    _, r = pairwise_distances(scatterers, sensors)
    events = [ArrivalEvent(float(r[l, j]), j, float(f / r[l, j]), l)
              for l, f in enumerate(weights.weights) if f != 0.0
              for j in range(len(scatterers))]
    events.sort(key=lambda e: (e.time, e.scatterer, e.sensor))
    return events


def default_step(scatterers, sensors, lam=None):
    """Default time step: 1/50 of the shortest relevant time scale.

    The scales are the smallest sensor-scatterer distance, the smallest
    scatterer separation and ``1 / (sqrt(lam) + 4 pi max|alpha|)``, the
    combined decay rate of the transformed charges.
    """
    d, r = pairwise_distances(scatterers, sensors)
    scales = [float(r.min())]
    if len(scatterers) > 1:
        scales.append(scatterers.min_separation)
    rate = FOUR_PI * float(np.abs(scatterers.alphas).max())
    if lam is not None:
        rate += np.sqrt(lam)
    if rate > 0:
        scales.append(1.0 / rate)
    return min(scales) / 50.0


def _max_step(scatterers, r):
    limit = float(r.min())
    if len(scatterers) > 1:
        limit = min(limit, scatterers.min_separation)
    return limit / 10.0


@njit(cache=True)
def _march(times, decay, src, has_src, pair_i, pair_j, inv_d,
           l0, l1, lw, lv, r0, r1, rw, rv, jump_node, jump_j, jump_col, jump_val, n, m):
    K = times.shape[0]
    P = pair_i.shape[0]
    q = np.zeros((K, n, m))
    cminus = np.zeros((n, m))
    cplus = np.zeros((n, m))
    jp = 0
    n_jumps = jump_node.shape[0]
    for k in range(K - 1):
        h = times[k + 1] - times[k]
        if h == 0.0:
            for j in range(n):
                for c in range(m):
                    q[k + 1, j, c] = q[k, j, c]
        else:
            for j in range(n):
                for c in range(m):
                    cplus[j, c] = 0.0
                    cminus[j, c] = 0.0
            for p in range(P):
                i = pair_i[p]
                j = pair_j[p]
                if rv[p, k]:
                    a0 = (1.0 - rw[p, k]) * inv_d[p]
                    a1 = rw[p, k] * inv_d[p]
                    for c in range(m):
                        cplus[j, c] += a0 * q[r0[p, k], i, c] + a1 * q[r1[p, k], i, c]
                if lv[p, k + 1]:
                    b0 = (1.0 - lw[p, k + 1]) * inv_d[p]
                    b1 = lw[p, k + 1] * inv_d[p]
                    for c in range(m):
                        cminus[j, c] += b0 * q[l0[p, k + 1], i, c] + b1 * q[l1[p, k + 1], i, c]
            for j in range(n):
                e = decay[k, j]
                for c in range(m):
                    val = e * q[k, j, c] + 0.5 * h * (e * cplus[j, c] + cminus[j, c])
                    if has_src:
                        val += src[k, j, c]
                    q[k + 1, j, c] = val
        while jp < n_jumps and jump_node[jp] == k + 1:
            q[k + 1, jump_j[jp], jump_col[jp]] += jump_val[jp]
            jp += 1
    return q


def _source_integrals(times, a, r_cols, w_cols, epsilon):
    """Per-step integrals of ``exp(-a (t_{k+1} - s)) * 4 pi u0(s, y_j)``.

    ``r_cols[l, j]`` are sensor-scatterer distances, ``w_cols[l, c]`` the
    weight of sensor ``l`` in column ``c``.  Three-point Gauss-Legendre per
    step; the forcing is smooth between consecutive nodes.
    """
    t0 = times[:-1]
    h = np.diff(times)
    s = t0[:, None] + 0.5 * h[:, None] * (_GAUSS_X[None, :] + 1.0)        # (K-1, 3)
    u = _ball_free_field(s[:, :, None, None], r_cols[None, None, :, :], epsilon)  # (K-1,3,L,n)
    forcing = FOUR_PI * np.einsum("kgln,lc->kgnc", u, w_cols)             # (K-1,3,n,m)
    damp = np.exp(-a[None, None, :] * (times[1:, None, None] - s[:, :, None]))  # (K-1,3,n)
    return 0.5 * h[:, None, None] * np.einsum("g,kgn,kgnc->knc", _GAUSS_W, damp, forcing)


def _integrate(scatterers, sensors, weight_cols, horizon, h, epsilon=None):
    """Integrate the charge system for several weight vectors at once.

    Returns ``(times, q, events, jump_times, break_times)`` with ``q`` of
    shape ``(K, n, m)``.
    """
    if not horizon > 0:
        raise HorizonNonPositive(f"horizon must be > 0, got {horizon}")
    if not h > 0:
        raise StepTooLarge(f"time step must be > 0, got {h}")
    validate_scene(scatterers, sensors)
    d, r = pairwise_distances(scatterers, sensors)
    limit = _max_step(scatterers, r)
    if h > limit * (1 + 1e-12):
        raise StepTooLarge(f"time step {h} exceeds the admissible {limit}")
    if epsilon is not None:
        if not epsilon > 0:
            raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon}")
    W = np.asarray(weight_cols, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    n, m = len(scatterers), W.shape[1]
    tol = _snap_tol(horizon)
    active = np.any(W != 0.0, axis=1)

    # breakpoints: arrivals (jumps or bump edges) plus first and second echoes;
    # later echoes only carry C^1 singularities, harmless at second order
    if epsilon is None:
        src_times = r[active].ravel()
        jump_times = src_times
        per_scatterer = [r[active, i] for i in range(n)]
    else:
        ra = r[active]
        src_times = np.concatenate([(ra - epsilon).ravel(), ra.ravel(), (ra + epsilon).ravel(),
                                    (epsilon - ra).ravel()])
        src_times = src_times[src_times > 0]
        jump_times = np.zeros(0)
        per_scatterer = [np.concatenate([ra[:, i] - epsilon, ra[:, i], ra[:, i] + epsilon])
                         for i in range(n)]
    echo = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            first = per_scatterer[i] + d[i, j]
            echo.append(first)
            echo.extend(first + d[j, k] for k in range(n) if k != j)
    break_times = np.concatenate([src_times] + echo) if echo else src_times
    times, reps = _time_grid(horizon, h, jump_times, break_times)
    K = times.shape[0]

    a = FOUR_PI * scatterers.alphas
    decay = np.exp(-np.outer(np.diff(times), a))

    # jumps: ideal pulses only
    events = []
    jn, jj, jc, jv = [], [], [], []
    if epsilon is None:
        for c in range(m):
            ev = arrival_events(scatterers, sensors, PulseWeights(W[:, c]))
            events.append(ev)
            for e in ev:
                if e.time > horizon + tol:
                    continue
                rep = _snap(np.array([e.time]), reps, tol)[0]
                node = int(np.searchsorted(times, rep, side="right") - 1)
                jn.append(node)
                jj.append(e.scatterer)
                jc.append(c)
                jv.append(e.jump)
    order = np.argsort(jn, kind="stable")
    jump_node = np.asarray(jn, dtype=np.int64)[order]
    jump_j = np.asarray(jj, dtype=np.int64)[order]
    jump_col = np.asarray(jc, dtype=np.int64)[order]
    jump_val = np.asarray(jv, dtype=float)[order]

    if epsilon is None:
        src = np.zeros((1, n, m))
        has_src = False
    else:
        src = _source_integrals(times, a, r, W, epsilon)
        has_src = True

    pairs = [(i, j) for j in range(n) for i in range(n) if i != j]
    P = len(pairs)
    pair_i = np.array([p[0] for p in pairs], dtype=np.int64)
    pair_j = np.array([p[1] for p in pairs], dtype=np.int64)
    inv_d = np.array([1.0 / d[i, j] for i, j in pairs])
    shape = (max(P, 1), K)
    l0, l1, r0, r1 = (np.zeros(shape, np.int64) for _ in range(4))
    lw, rw = np.zeros(shape), np.zeros(shape)
    lv, rv = np.zeros(shape, np.bool_), np.zeros(shape, np.bool_)
    for p, (i, j) in enumerate(pairs):
        l0[p], l1[p], lw[p], lv[p] = _interp_coeffs(times, times - d[i, j], "left", tol)
        r0[p], r1[p], rw[p], rv[p] = _interp_coeffs(times, times - d[i, j], "right", tol)
    q = _march(times, decay, src, has_src, pair_i, pair_j, inv_d,
               l0, l1, lw, lv, r0, r1, rw, rv, jump_node, jump_j, jump_col, jump_val, n, m)
    return times, q, events, break_times, reps


def solve_charges(scatterers: ScattererArray, sensors: SensorArray, weights: PulseWeights,
                  T: float, h: float | None = None, epsilon: float | None = None
                  ) -> ChargeTrajectories:
    """Integrate the retarded charge system on ``[0, T]``.

    Between nodes the local decay is applied exactly (factor
    ``exp(-4 pi alpha_j dt)``) and the retarded coupling by the trapezoidal
    rule with linearly interpolated history.  Pulse arrivals and their first
    two echo generations are grid nodes, so jumps are applied exactly and the
    scheme stays second order.

    Parameters
    ----------
    T : float
        Horizon.
    h : float, optional
        Nominal step; must not exceed a tenth of the smallest scatterer
        separation and of the smallest sensor-scatterer distance.  Defaults to
        :func:`default_step`.
    epsilon : float, optional
        Radius of a uniform-ball spatial mollifier; ``None`` for the ideal pulse.
    """
    weights.check_against(sensors)
    if h is None:
        h = default_step(scatterers, sensors)
    times, q, events, _, _ = _integrate(scatterers, sensors, weights.weights, T, h, epsilon)
    values = np.ascontiguousarray(q[:, :, 0].T)
    evs = [e for e in (events[0] if events else []) if e.time <= T + _snap_tol(T)]
    return ChargeTrajectories(times, values, evs, float(T), epsilon)


def scattered_field(charges: ChargeTrajectories, scatterers: ScattererArray, t, x):
    """Scattered wave ``u - u0`` at point ``x`` and time(s) ``t``."""
    x = np.asarray(x, dtype=float).reshape(3)
    R = np.linalg.norm(scatterers.points - x, axis=1)
    if np.any(R == 0.0):
        raise EvaluationAtScatterer(f"field requested on a scatterer at {x.tolist()}")
    t = np.asarray(t, dtype=float)
    tol = _snap_tol(charges.horizon)
    out = np.zeros(t.shape)
    for j, Rj in enumerate(R):
        tau = t - Rj
        live = tau > 0
        if np.any(tau[live] > charges.horizon + tol):
            raise BeyondHorizon(
                f"needs q_{j} at {tau.max():.6g} beyond horizon {charges.horizon:.6g}")
        vals = sample(charges.times, charges.values[j], np.where(live, tau, -1.0), tol=tol)
        out = out + np.where(live, vals, 0.0) / (FOUR_PI * Rj)
    return out if out.ndim else float(out)


def _trace_grid(horizon, h, R, charge_jumps, charge_breaks):
    """Trace grid: uniform plus every retarded charge breakpoint, jumps doubled."""
    jt = (R.ravel()[:, None] + np.asarray(charge_jumps)[None, :]).ravel()
    bt = (R.ravel()[:, None] + np.asarray(charge_breaks)[None, :]).ravel()
    times, _ = _time_grid(horizon, h, jt, bt)
    return times


def _traces(times_q, q, R, horizon, h, jump_times, break_times):
    """Sample ``sum_j q_j(t - R_kj) / (4 pi R_kj)`` for every sensor and column.

    Returns ``(times, values)`` with ``values`` of shape ``(N, K, m)``.
    """
    tol = _snap_tol(horizon)
    times = _trace_grid(horizon, h, R, jump_times, break_times)
    # on a doubled node the first copy takes left limits
    left = np.zeros(times.shape, bool)
    left[:-1] = times[1:] == times[:-1]
    N, n = R.shape
    m = q.shape[2]
    out = np.zeros((N, times.shape[0], m))
    for k in range(N):
        for j in range(n):
            tau = times - R[k, j]
            vals = np.where(left[:, None],
                            sample(times_q, q[:, j, :], tau, "left", tol),
                            sample(times_q, q[:, j, :], tau, "right", tol))
            out[k] += vals / (FOUR_PI * R[k, j])
    return times, out


def sensor_traces(scatterers: ScattererArray, sensors: SensorArray, weights: PulseWeights,
                  T: float, h: float | None = None, epsilon: float | None = None
                  ) -> SensorTraces:
    """Scattered wave recorded at every sensor on ``[0, T]``."""
    weights.check_against(sensors)
    if h is None:
        h = default_step(scatterers, sensors)
    times_q, q, events, breaks, _ = _integrate(scatterers, sensors, weights.weights, T, h, epsilon)
    _, R = pairwise_distances(scatterers, sensors)
    jumps = np.array([e.time for e in events[0]]) if events else np.zeros(0)
    times, vals = _traces(times_q, q, R, T, h, jumps, breaks)
    return SensorTraces(times, vals[:, :, 0], float(T),
                        {"h": float(h), "epsilon": epsilon})
