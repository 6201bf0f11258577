"""Interaction matrix of a point-scatterer array and its spectral threshold.

For a real spectral parameter ``lam > 0`` with ``s = sqrt(lam)``::

    M[i, i] = alpha_i + s / (4 pi)
    M[i, j] = -exp(-s d_ij) / (4 pi d_ij),   i != j

The discrete spectrum of the point-scatterer Laplacian is the set of
``lam > 0`` where ``M`` is singular, and ``M`` is positive definite exactly
above the largest such ``lam`` (or above 0 when there is none).

``dM/ds = (I + E) / (4 pi)`` with ``E[i, j] = exp(-s d_ij)`` off the
diagonal; ``I + E`` is the Gram matrix of the positive-definite kernel
``exp(-s |x - y|)``, so every eigenvalue of ``M`` increases strictly with
``lam``.  Each eigenvalue branch therefore crosses zero at most once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import NonPositiveLambda, SingularMatrix
from .scene import ScattererArray, check_scatterers, pairwise_distances

__all__ = [
    "InteractionMatrix", "SpectralReport", "build_m", "invert_m",
    "is_positive_definite", "lambda_upper_bound", "sup_spectrum_estimate",
    "smallest_eigenvalue",
]

FOUR_PI = 4.0 * np.pi
SINGULAR_RTOL = 1e-14
INVERSE_RTOL = 1e-12


@dataclass(frozen=True)
class InteractionMatrix:
    lam: float
    m: np.ndarray
    inverse: np.ndarray | None = field(default=None)

    @property
    def n(self):
        return self.m.shape[0]


@dataclass(frozen=True)
class SpectralReport:
    lambda_bound: float
    sup_estimate: float
    discrete_eigs: list

    def to_dict(self):
        return {"lambda_bound": self.lambda_bound,
                "sup_estimate": self.sup_estimate,
                "discrete_eigs": list(self.discrete_eigs)}


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise NonPositiveLambda(f"spectral parameter must be > 0, got {lam}")


def _m_from_distances(alphas, d, lam):
    s = np.sqrt(lam)
    n = alphas.shape[0]
    off = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    off[mask] = np.exp(-s * d[mask]) / (FOUR_PI * d[mask])
    return np.diag(alphas + s / FOUR_PI) - off


def build_m(scatterers: ScattererArray, lam: float) -> InteractionMatrix:
    """Assemble the n x n interaction matrix at spectral parameter ``lam``."""
    _check_lambda(lam)
    check_scatterers(scatterers)
    d, _ = pairwise_distances(scatterers)
    m = _m_from_distances(scatterers.alphas, d, lam)
    m.setflags(write=False)
    return InteractionMatrix(float(lam), m)


def invert_m(im: InteractionMatrix) -> InteractionMatrix:
    """Return a copy of ``im`` with the symmetric inverse filled in.

    Raises
    ------
    SingularMatrix
        If the smallest singular value is below ``1e-14`` times the largest,
        i.e. ``lam`` is (numerically) a discrete eigenvalue.
    """
    sv = np.linalg.svd(im.m, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < SINGULAR_RTOL * sv[0]:
        raise SingularMatrix(
            f"interaction matrix is singular at lam={im.lam} "
            f"(singular values {sv[0]:.3e} .. {sv[-1]:.3e})")
    inv = np.linalg.solve(im.m, np.eye(im.n))
    # one step of iterative refinement, then restore exact symmetry
    inv = inv + np.linalg.solve(im.m, np.eye(im.n) - im.m @ inv)
    inv = 0.5 * (inv + inv.T)
    inv.setflags(write=False)
    return InteractionMatrix(im.lam, im.m, inv)


def smallest_eigenvalue(im: InteractionMatrix) -> float:
    return float(np.linalg.eigvalsh(im.m)[0])


def is_positive_definite(im: InteractionMatrix) -> bool:
    return smallest_eigenvalue(im) > 0.0


def lambda_upper_bound(scatterers: ScattererArray) -> float:
    """Upper bound on the top of the spectrum.

    A singleton has the exact threshold ``(4 pi alpha)^2`` for negative
    ``alpha`` and 0 otherwise.  For ``n >= 2`` the bound is 0 when
    ``4 pi alpha_min d >= n - 1``; otherwise it is ``s^2`` where ``s`` is the
    unique root of ``4 pi alpha_min d + s d = (n - 1) exp(-s d)``.
    """
    check_scatterers(scatterers)
    n = len(scatterers)
    a0 = scatterers.min_alpha
    if n == 1:
        return 0.0 if a0 >= 0 else float((FOUR_PI * a0) ** 2)
    d = scatterers.min_separation
    if FOUR_PI * a0 * d >= n - 1:
        return 0.0

    def gap(s):
        return FOUR_PI * a0 * d + s * d - (n - 1) * np.exp(-s * d)

    hi = 1.0 / d
    while gap(hi) <= 0:
        hi *= 2.0
    s = bisect(gap, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(s * s)


def sup_spectrum_estimate(scatterers: ScattererArray, tol: float = 1e-10,
                          n_scan: int = 1000) -> SpectralReport:
    """Locate the discrete eigenvalues and the top of the spectrum.

    The interval ``(0, bound]`` is scanned in ``n_scan`` steps, tracking every
    sorted eigenvalue of ``M``; each branch that changes sign inside a scan
    cell is refined by bisection to absolute tolerance ``tol`` in ``lam``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    bound = lambda_upper_bound(scatterers)
    if bound == 0.0:
        return SpectralReport(0.0, 0.0, [])
    d, _ = pairwise_distances(scatterers)
    alphas = scatterers.alphas

    def eigs(lam):
        return np.linalg.eigvalsh(_m_from_distances(alphas, d, lam))

    # the top end is nudged past the bound so a root sitting exactly on it
    # still shows up as a sign change
    top = bound * (1 + 1e-9) + tol
    lams = np.concatenate([[bound * 1e-12], np.linspace(bound / n_scan, top, n_scan)])
    mu = np.array([eigs(lam) for lam in lams])
    roots = []
    for k in range(mu.shape[1]):
        crossing = np.flatnonzero((mu[:-1, k] <= 0) & (mu[1:, k] > 0))
        for c in crossing:
            root = bisect(lambda lam: eigs(lam)[k], lams[c], lams[c + 1],
                          xtol=tol, maxiter=500)
            roots.append(float(root))
    roots.sort()
    return SpectralReport(bound, roots[-1] if roots else 0.0, roots)
