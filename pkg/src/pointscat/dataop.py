"""The N x N scattering data operator.

Entry ``(k, l)`` is the Laplace transform at ``s = sqrt(lam)`` of the
scattered wave recorded at sensor ``k`` after a unit pulse at sensor ``l``.
Two independent routes are provided:

* :func:`closed_form_operator` uses the factorisation
  ``F = (4 pi)^-2 Phi Lambda Phi^T`` with ``Phi[k, j] = exp(-s r_kj) / r_kj``
  and ``Lambda`` the inverse interaction matrix;
* :func:`simulated_operator` runs the time-domain solver once per unit pulse
  and integrates the recorded traces numerically.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (EmptyTrace, LambdaBelowSpectrum, NonPositiveLambda, ScatteringError,
                     TruncationTooShort)
from .forward import _integrate, _traces, default_step
from .interaction import build_m, invert_m, is_positive_definite, lambda_upper_bound
from .scene import ScattererArray, SensorArray, pairwise_distances, validate_scene

__all__ = [
    "DataOperator", "green_matrix", "closed_form_operator", "laplace_transform",
    "simulated_operator", "perturb_operator", "default_lambda",
]

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class DataOperator:
    lam: float
    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)
    above_spectrum: bool | None = None

    @property
    def n_sensors(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {"lambda": self.lam, "provenance": self.provenance,
                "above_spectrum": self.above_spectrum,
                "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            matrix = np.array(data["matrix"], dtype=float)
            lam = float(data["lambda"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScatteringError(f"malformed operator: {exc!r}") from exc
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ScatteringError("operator matrix must be square")
        return cls(lam, matrix, dict(data.get("provenance") or {}), data.get("above_spectrum"))


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise NonPositiveLambda(f"spectral parameter must be > 0, got {lam}")


def green_matrix(targets, sources, lam):
    """``exp(-s |x - y|) / |x - y|`` for every target/source pair, ``s = sqrt(lam)``."""
    _check_lambda(lam)
    r = cdist(np.asarray(targets, dtype=float).reshape(-1, 3),
              np.asarray(sources, dtype=float).reshape(-1, 3))
    return np.exp(-np.sqrt(lam) * r) / r


def default_lambda(scatterers: ScattererArray, sensors: SensorArray | None = None) -> float:
    """``bound + max(1, bound)`` where ``bound`` caps the spectrum.

    Warns when ``sqrt(lam)`` times the scene extent exceeds 30, where the
    steering entries underflow and the operator loses rank numerically.
    """
    bound = lambda_upper_bound(scatterers)
    lam = bound + max(1.0, bound)
    if sensors is not None:
        d, r = pairwise_distances(scatterers, sensors)
        extent = float(d.max()) + float(r.max())
        if np.sqrt(lam) * extent > 30:
            warnings.warn(f"sqrt(lambda) * extent = {np.sqrt(lam) * extent:.1f} > 30; "
                          "the data operator will be numerically rank deficient",
                          RuntimeWarning, stacklevel=2)
    return lam


def _require_above_spectrum(scatterers, lam):
    if not is_positive_definite(build_m(scatterers, lam)):
        raise LambdaBelowSpectrum(
            f"lambda={lam} does not exceed the top of the spectrum "
            "(interaction matrix is not positive definite)")


def closed_form_operator(scatterers: ScattererArray, sensors: SensorArray,
                         lam: float) -> DataOperator:
    validate_scene(scatterers, sensors)
    _check_lambda(lam)
    im = build_m(scatterers, lam)
    if not is_positive_definite(im):
        raise LambdaBelowSpectrum(
            f"lambda={lam} does not exceed the top of the spectrum "
            "(interaction matrix is not positive definite)")
    inv = invert_m(im).inverse
    phi = green_matrix(sensors.points, scatterers.points, lam)
    F = phi @ inv @ phi.T / FOUR_PI ** 2
    F = 0.5 * (F + F.T)
    return DataOperator(float(lam), F, {"kind": "closed-form"}, True)


def laplace_transform(times, values, s, T=None):
    """Trapezoidal ``int_0^T exp(-s t) w(t) dt`` on a (possibly non-uniform) grid.

    ``values`` has the time axis last; repeated nodes (jumps) contribute
    nothing by themselves.  ``T`` truncates the integral, interpolating the
    endpoint linearly when it falls between nodes.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0 or values.shape[-1] == 0:
        raise EmptyTrace("cannot transform an empty trace")
    if values.shape[-1] != times.shape[0]:
        raise ScatteringError("trace length does not match its time grid")
    if times.size == 1:
        return np.zeros(values.shape[:-1]) if values.ndim > 1 else 0.0
    if T is not None and T < times[-1]:
        k = int(np.searchsorted(times, T, side="right"))
        if k < 1:
            raise EmptyTrace("truncation horizon precedes the first sample")
        tail_t = times[k - 1]
        if T > tail_t:
            w = (T - tail_t) / (times[k] - tail_t)
            end = (1 - w) * values[..., k - 1] + w * values[..., k]
            times = np.append(times[:k], T)
            values = np.concatenate([values[..., :k], end[..., None]], axis=-1)
        else:
            times, values = times[:k], values[..., :k]
    g = np.exp(-s * times) * values
    out = 0.5 * np.sum(np.diff(times) * (g[..., 1:] + g[..., :-1]), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _simulate(scatterers, sensors, s, T, h, epsilon):
    W = np.eye(len(sensors))
    times_q, q, events, breaks, _ = _integrate(scatterers, sensors, W, T, h, epsilon)
    _, R = pairwise_distances(scatterers, sensors)
    jumps = np.array([e.time for ev in events for e in ev]) if events else np.zeros(0)
    times, traces = _traces(times_q, q, R, T, h, jumps, breaks)
    # traces[k, :, l]: sensor k, pulse from sensor l
    F = laplace_transform(times, np.moveaxis(traces, 1, -1), s)
    F_short = laplace_transform(times, np.moveaxis(traces, 1, -1), s, T=T / 1.5)
    return F, F_short


def _relative_change(F, F_short):
    floor = 1e-12 * np.abs(F).max() if np.any(F) else 1.0
    return float(np.max(np.abs(F - F_short) / np.maximum(np.abs(F), floor)))


def simulated_operator(scatterers: ScattererArray, sensors: SensorArray, lam: float,
                       T: float | None = None, h: float | None = None,
                       epsilon: float | None = None, trunc_tol: float = 1e-6,
                       max_extensions: int = 15) -> DataOperator:
    """Data operator from time-domain simulation, one unit pulse per column.

    Parameters
    ----------
    T : float, optional
        Fixed horizon.  When omitted the horizon starts ten decay lengths
        past the last direct arrival and grows by 50% until extending it
        changes no entry by more than ``trunc_tol`` (relative).
    h : float, optional
        Time step, default :func:`pointscat.forward.default_step` at ``lam``.
    epsilon : float, optional
        Uniform-ball mollifier radius for the emitted pulses.

    Raises
    ------
    LambdaBelowSpectrum
    TruncationTooShort
        If the tail test fails at a fixed ``T`` or after ``max_extensions``.
    """
    validate_scene(scatterers, sensors)
    _check_lambda(lam)
    _require_above_spectrum(scatterers, lam)
    s = float(np.sqrt(lam))
    if h is None:
        h = default_step(scatterers, sensors, lam)
    if T is not None:
        F, F_short = _simulate(scatterers, sensors, s, T, h, epsilon)
        change = _relative_change(F, F_short)
        if change > trunc_tol:
            raise TruncationTooShort(
                f"horizon T={T} leaves a relative tail change of {change:.2e} > {trunc_tol:.0e}")
    else:
        _, r = pairwise_distances(scatterers, sensors)
        t_last = float((r[:, None, :] + r[None, :, :]).max()) + (epsilon or 0.0)
        T = t_last + 10.0 / s
        for _ in range(max_extensions + 1):
            F, F_short = _simulate(scatterers, sensors, s, T, h, epsilon)
            change = _relative_change(F, F_short)
            if change < trunc_tol:
                break
            T *= 1.5
        else:
            raise TruncationTooShort(
                f"tail did not settle below {trunc_tol:.0e} by T={T / 1.5:.4g}")
    prov = {"kind": "simulated", "T": float(T), "h": float(h), "tail_change": change}
    if epsilon is not None:
        prov["epsilon"] = float(epsilon)
    return DataOperator(float(lam), F, prov, True)


def perturb_operator(op: DataOperator, level: float, seed=None) -> DataOperator:
    """Add symmetric Gaussian noise with ``||E||_F = level * ||F||_F``."""
    if level < 0:
        raise ScatteringError("noise level must be nonnegative")
    prov = {"kind": "perturbed", "level": float(level), "seed": seed, "base": op.provenance}
    if level == 0:
        return replace(op, matrix=op.matrix.copy(), provenance=prov)
    rng = np.random.default_rng(seed)
    N = op.n_sensors
    E = rng.standard_normal((N, N))
    E = 0.5 * (E + E.T)
    E *= level * np.linalg.norm(op.matrix) / np.linalg.norm(E)
    return replace(op, matrix=op.matrix + E, provenance=prov)
