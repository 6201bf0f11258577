"""Scene geometry: scatterers, sensors, pulse weights and search grids.

Positions are plain 3-vectors in a single, unit-free length scale.  All
containers are frozen dataclasses wrapping read-only numpy arrays, so they
can be shared freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import (DuplicatePoint, EmptyScene, ScatteringError,
                     SensorOnScatterer, ZeroAlpha)

__all__ = [
    "ScattererArray", "SensorArray", "PulseWeights", "GridSpec", "SceneReport",
    "validate_scene", "pairwise_distances", "scattering_length",
    "load_scene", "scene_to_dict",
]


def _points(values, name):
    pts = np.array(values, dtype=float).reshape(-1, 3) if np.size(values) else np.zeros((0, 3))
    if not np.all(np.isfinite(pts)):
        raise ScatteringError(f"{name} contain non-finite coordinates")
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class ScattererArray:
    """Point scatterers: positions ``points`` (n, 3) and couplings ``alphas`` (n,)."""

    points: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        pts = _points(self.points, "scatterers")
        alphas = np.array(self.alphas, dtype=float).reshape(-1)
        if alphas.shape[0] != pts.shape[0]:
            raise ScatteringError(
                f"{pts.shape[0]} scatterer positions but {alphas.shape[0]} alphas")
        if not np.all(np.isfinite(alphas)):
            raise ScatteringError("alphas must be finite")
        alphas.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "alphas", alphas)

    def __len__(self):
        return self.points.shape[0]

    @property
    def min_separation(self) -> float:
        """Smallest distance between two scatterers (``inf`` for a singleton)."""
        if len(self) < 2:
            return np.inf
        return float(pdist(self.points).min())

    @property
    def min_alpha(self) -> float:
        return float(self.alphas.min())


@dataclass(frozen=True)
class SensorArray:
    """Co-located emitter/detector positions, shape (N, 3)."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _points(self.points, "sensors"))

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class PulseWeights:
    """Pulse amplitudes ``f_k``, one per sensor (positional pairing)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ScatteringError("pulse weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    @classmethod
    def ones(cls, n_sensors):
        return cls(np.ones(n_sensors))

    @classmethod
    def unit(cls, n_sensors, index):
        w = np.zeros(n_sensors)
        w[index] = 1.0
        return cls(w)

    def check_against(self, sensors: SensorArray):
        if len(self) != len(sensors):
            raise ScatteringError(
                f"{len(self)} pulse weights for {len(sensors)} sensors")


@dataclass(frozen=True)
class GridSpec:
    """Uniform axis-aligned search grid ``lower + spacing * index``."""

    lower: np.ndarray
    upper: np.ndarray
    spacing: float

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(3)
        hi = np.array(self.upper, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ScatteringError("grid corners must be finite")
        if not np.all(hi > lo):
            raise ScatteringError("grid upper corner must exceed lower corner on every axis")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ScatteringError("grid spacing must be positive")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self):
        # tolerance absorbs rounding when the extent is an exact multiple of spacing
        counts = np.floor((self.upper - self.lower) / self.spacing + 1e-9).astype(int) + 1
        return tuple(int(c) for c in counts)

    def axes(self):
        return [self.lower[a] + self.spacing * np.arange(self.shape[a]) for a in range(3)]

    def nodes(self):
        """All grid nodes as an (M, 3) array in C (x-major) order."""
        gx, gy, gz = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    @property
    def size(self):
        return int(np.prod(self.shape))

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "spacing": self.spacing}


@dataclass(frozen=True)
class SceneReport:
    n_scatterers: int
    n_sensors: int
    min_separation: float
    min_alpha: float
    min_sensor_distance: float

    def to_dict(self):
        return {"n_scatterers": self.n_scatterers, "n_sensors": self.n_sensors,
                "min_separation": self.min_separation, "min_alpha": self.min_alpha,
                "min_sensor_distance": self.min_sensor_distance}


def _check_distinct(points, what):
    if points.shape[0] < 2:
        return
    d = pdist(points)
    if np.any(d == 0.0):
        k = int(np.flatnonzero(d == 0.0)[0])
        i, j = list(combinations(range(points.shape[0]), 2))[k]
        raise DuplicatePoint(f"{what} {i} and {j} coincide at {points[i].tolist()}")


def check_scatterers(scatterers: ScattererArray):
    if len(scatterers) == 0:
        raise EmptyScene("no scatterers")
    _check_distinct(scatterers.points, "scatterers")


def check_sensors(sensors: SensorArray):
    if len(sensors) == 0:
        raise EmptyScene("no sensors")
    _check_distinct(sensors.points, "sensors")


def validate_scene(scatterers: ScattererArray, sensors: SensorArray) -> SceneReport:
    """Check a scene and summarise its geometry.

    Raises
    ------
    EmptyScene, DuplicatePoint, SensorOnScatterer
    """
    check_scatterers(scatterers)
    check_sensors(sensors)
    r = cdist(sensors.points, scatterers.points)
    if np.any(r == 0.0):
        k, j = np.argwhere(r == 0.0)[0]
        raise SensorOnScatterer(f"sensor {k} sits on scatterer {j}")
    return SceneReport(
        n_scatterers=len(scatterers),
        n_sensors=len(sensors),
        min_separation=scatterers.min_separation,
        min_alpha=scatterers.min_alpha,
        min_sensor_distance=float(r.min()),
    )


def pairwise_distances(scatterers: ScattererArray, sensors: SensorArray | None = None):
    """Distance tables used throughout the toolkit.

    Returns
    -------
    d : ndarray, shape (n, n)
        Scatterer-scatterer distances, symmetric with zero diagonal.
    r : ndarray, shape (N, n) or None
        Sensor-scatterer distances ``r[k, j] = |x_k - y_j|``.
    """
    y = scatterers.points
    d = cdist(y, y)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    r = None if sensors is None else cdist(sensors.points, y)
    return d, r


def scattering_length(scatterers: ScattererArray) -> float:
    """Total scattering length ``-(4 pi)^-1 sum_i 1/alpha_i``."""
    a = scatterers.alphas
    if np.any(a == 0.0):
        raise ZeroAlpha("scattering length undefined for a zero coupling")
    return float(-np.sum(1.0 / a) / (4 * np.pi))


def load_scene(source, require_scatterers=True):
    """Read a scene JSON file (or an already-parsed dict).

    The format is ``{"scatterers": [{"pos": [x, y, z], "alpha": a}, ...],
    "sensors": [[x, y, z], ...], "weights": [f1, ...]}``; ``weights``
    defaults to all ones.  With ``require_scatterers=False`` a sensors-only
    file is accepted and the scatterer slot is ``None``.
    """
    if isinstance(source, dict):
        data = source
    else:
        data = json.loads(Path(source).read_text())
    if not isinstance(data, dict):
        raise ScatteringError("scene JSON must be an object")
    try:
        sensors = SensorArray(data["sensors"])
        raw = data.get("scatterers")
        if raw:
            scatterers = ScattererArray([s["pos"] for s in raw], [s["alpha"] for s in raw])
        elif require_scatterers:
            raise EmptyScene("scene has no scatterers")
        else:
            scatterers = None
        weights = data.get("weights")
        weights = PulseWeights.ones(len(sensors)) if weights is None else PulseWeights(weights)
    except (KeyError, TypeError) as exc:
        raise ScatteringError(f"malformed scene: {exc!r}") from exc
    weights.check_against(sensors)
    return scatterers, sensors, weights


def scene_to_dict(scatterers, sensors, weights=None):
    out = {}
    if scatterers is not None:
        out["scatterers"] = [{"pos": p.tolist(), "alpha": float(a)}
                             for p, a in zip(scatterers.points, scatterers.alphas)]
    out["sensors"] = sensors.points.tolist()
    if weights is not None:
        out["weights"] = weights.weights.tolist()
    return out
