"""Locating point scatterers from the data operator (MUSIC-type test).

For exact data ``ker(F)^perp`` is spanned by the steering vectors of the
scatterers, so a trial point ``z`` is a scatterer exactly when its steering
vector has no component in ``ker(F)``.  The imaging functional used here is
the normalised ``|phi(z)| / |P phi(z)|`` (``P`` the orthogonal projector onto
the kernel), capped at ``1 / DELTA``.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter
from scipy.spatial.distance import cdist

from .dataop import DataOperator, green_matrix
from .errors import (EmptyKernel, NoPeaks, NonPositiveLambda, ScatteringError,
                     SteeringAtSensor, ZeroOperator)
from .scene import GridSpec, SensorArray

__all__ = [
    "KernelProjector", "ImagingField", "Peak", "Reconstruction", "steering_vector",
    "kernel_projector", "imaging_value", "scan_grid", "extract_peaks", "reconstruct",
    "DELTA", "DEFAULT_RANK_TOL",
]

DELTA = 1e-12
DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class KernelProjector:
    """Orthonormal basis of ``ker(F)`` plus the singular spectrum of ``F``."""

    basis: np.ndarray
    rank: int
    singular_values: np.ndarray

    @property
    def gap(self):
        """``sigma_r / sigma_{r+1}``: how clearly the rank is separated."""
        sv = self.singular_values
        r = self.rank
        if r == 0 or r >= sv.size:
            return np.inf
        return float(sv[r - 1] / sv[r]) if sv[r] > 0 else np.inf

    def apply(self, v):
        """``P v`` for a vector or a stack of row vectors."""
        return (np.asarray(v) @ self.basis) @ self.basis.T


@dataclass(frozen=True)
class ImagingField:
    grid: GridSpec
    values: np.ndarray
    lam: float

    def as_array(self):
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True)
class Peak:
    pos: np.ndarray
    score: float

    def to_dict(self):
        return {"pos": [float(c) for c in self.pos], "score": float(self.score)}


@dataclass(frozen=True)
class Reconstruction:
    peaks: list
    rank: int
    singular_values: np.ndarray
    residuals: list
    gap: float
    field: ImagingField = field(repr=False)

    def to_dict(self):
        return {"peaks": [p.to_dict() for p in self.peaks],
                "rank": self.rank,
                "singular_values": self.singular_values.tolist(),
                "residuals": list(self.residuals),
                "gap": None if not np.isfinite(self.gap) else self.gap}


def steering_vector(sensors: SensorArray, lam: float, z) -> np.ndarray:
    """``phi(z)_k = exp(-sqrt(lam) |x_k - z|) / |x_k - z|``."""
    if not (np.isfinite(lam) and lam > 0):
        raise NonPositiveLambda(f"spectral parameter must be > 0, got {lam}")
    z = np.asarray(z, dtype=float).reshape(1, 3)
    if np.any(cdist(sensors.points, z) == 0.0):
        raise SteeringAtSensor(f"trial point {z[0].tolist()} coincides with a sensor")
    return green_matrix(sensors.points, z, lam)[:, 0]


def kernel_projector(op: DataOperator, rank_tol: float = DEFAULT_RANK_TOL) -> KernelProjector:
    """Numerical kernel of ``F`` from its SVD.

    The rank counts singular values above ``rank_tol * sigma_1``.  ``F`` is
    first rescaled by a power of two, which is exact, so the result does not
    depend on the overall scale of the data.
    """
    if not 0 < rank_tol < 1:
        raise ScatteringError("rank_tol must lie in (0, 1)")
    F = np.asarray(op.matrix, dtype=float)
    peak = np.abs(F).max() if F.size else 0.0
    if not peak > 0:
        raise ZeroOperator("data operator vanishes identically")
    _, exp = np.frexp(peak)
    Fn = np.ldexp(F, -int(exp))
    _, sv, vt = np.linalg.svd(Fn)
    rank = int(np.count_nonzero(sv > rank_tol * sv[0]))
    basis = np.ascontiguousarray(vt[rank:].T)
    return KernelProjector(basis, rank, np.ldexp(sv, int(exp)))


def _imaging(basis, phis):
    norm = np.linalg.norm(phis, axis=-1)
    proj = np.linalg.norm(phis @ basis, axis=-1)
    return np.maximum(norm / np.maximum(proj, DELTA * norm), 1.0)


def imaging_value(proj: KernelProjector, phi) -> float:
    if proj.basis.shape[1] == 0:
        raise EmptyKernel("data operator has full rank; the kernel test is undefined")
    phi = np.asarray(phi, dtype=float)
    if not np.any(phi):
        raise ScatteringError("steering vector is zero")
    return float(_imaging(proj.basis, phi))


def relative_residual(proj: KernelProjector, phi) -> float:
    """``|P phi| / |phi|``; zero exactly when ``phi`` lies in ``ker(F)^perp``."""
    phi = np.asarray(phi, dtype=float)
    return float(np.linalg.norm(phi @ proj.basis) / np.linalg.norm(phi))


def scan_grid(proj: KernelProjector, sensors: SensorArray, lam: float, grid: GridSpec,
              workers: int | None = None, chunk: int = 16384) -> ImagingField:
    """Evaluate the imaging functional on every grid node.

    Nodes closer than ``spacing / 10`` to a sensor are masked with the
    neutral value 1.
    """
    if proj.basis.shape[1] == 0:
        raise EmptyKernel("data operator has full rank; the kernel test is undefined")
    if not (np.isfinite(lam) and lam > 0):
        raise NonPositiveLambda(f"spectral parameter must be > 0, got {lam}")
    nodes = grid.nodes()
    s = np.sqrt(lam)

    def block(lo):
        z = nodes[lo:lo + chunk]
        r = cdist(z, sensors.points)
        masked = r.min(axis=1) < grid.spacing / 10
        r = np.where(masked[:, None], 1.0, r)
        vals = _imaging(proj.basis, np.exp(-s * r) / r)
        return np.where(masked, 1.0, vals)

    starts = range(0, nodes.shape[0], chunk)
    workers = workers or int(os.environ.get("POINTSCAT_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(lo) for lo in starts]
    return ImagingField(grid, np.concatenate(parts), float(lam))


def extract_peaks(field: ImagingField, count: int | None = None,
                  min_separation: float | None = None) -> list:
    """Local maxima (26-neighbourhood) with greedy non-maximum suppression.

    A node is a local maximum when no neighbour exceeds it and at least one
    is lower, so flat plateaus do not count.  Peaks closer than
    ``min_separation`` (default three grid spacings) to a better one are
    dropped.  With ``count`` the best ``count`` peaks are returned;
    otherwise every surviving maximum scoring at least a tenth of the
    global maximum.
    """
    vals = field.as_array()
    if not np.all(np.isfinite(vals)):
        raise ScatteringError("imaging field contains non-finite values")
    if min_separation is None:
        min_separation = 3.0 * field.grid.spacing
    local = ((vals == maximum_filter(vals, size=3, mode="constant", cval=-np.inf))
             & (vals > minimum_filter(vals, size=3, mode="nearest")))
    idx = np.argwhere(local)
    scores = vals[local]
    order = np.argsort(-scores, kind="stable")
    idx, scores = idx[order], scores[order]
    if count is None and scores.size:
        keep = scores >= 0.1 * scores[0]
        idx, scores = idx[keep], scores[keep]
    pos = field.grid.lower + field.grid.spacing * idx
    chosen = []
    for p, sc in zip(pos, scores):
        if count is not None and len(chosen) >= count:
            break
        if all(np.linalg.norm(p - c.pos) >= min_separation for c in chosen):
            chosen.append(Peak(p, float(sc)))
    if not chosen:
        raise NoPeaks("imaging field has no admissible peak")
    return chosen


def reconstruct(op: DataOperator, sensors: SensorArray, grid: GridSpec, lam: float | None = None,
                rank_tol: float = DEFAULT_RANK_TOL, count="rank",
                min_separation: float | None = None, workers: int | None = None
                ) -> Reconstruction:
    """Kernel projector, grid scan and peak extraction in one call.

    ``count="rank"`` (default) asks for as many peaks as the estimated
    number of scatterers; ``None`` uses the relative score threshold.
    """
    lam = op.lam if lam is None else float(lam)
    if op.above_spectrum is not True:
        warnings.warn("data operator carries no check that lambda exceeds the spectrum; "
                      "the kernel test assumes it does", RuntimeWarning, stacklevel=2)
    if op.n_sensors != len(sensors):
        raise ScatteringError(f"operator is {op.n_sensors}x{op.n_sensors} "
                              f"but {len(sensors)} sensors were given")
    proj = kernel_projector(op, rank_tol)
    field_ = scan_grid(proj, sensors, lam, grid, workers=workers)
    k = proj.rank if count == "rank" else count
    peaks = extract_peaks(field_, k, min_separation)
    residuals = [relative_residual(proj, steering_vector(sensors, lam, p.pos)) for p in peaks]
    return Reconstruction(peaks, proj.rank, proj.singular_values, residuals, proj.gap, field_)
