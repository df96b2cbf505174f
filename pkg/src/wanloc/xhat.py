"""The basis-diagonal position surrogate, its filter smoothing, and the
resolvent square-root machinery that certifies uniform spectral gaps.

Given a complete lattice-indexed basis of range(P), the surrogate replaces
the occupied-space part of X by the integer centre coordinates, so its
projected spectrum is a subset of the integers.  Filtering the matrix
entries with a compactly supported Fourier profile then makes the operator
banded while moving its projected spectrum only slightly off the integers,
which is certified per mid-gap value lambda.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dichotomy import GeneralizedWannierBasis, projected_spectrum
from .errors import (IncompleteBasisError, OutsideGapSetError,
                     UnsupportedGeometryError)
from .spectral import Projector, TiltSpec, diag_of, operator_norm, tilt_operator

XTILDE_HERMITICITY_TOL = 1e-12
INTEGER_SPECTRUM_TOL = 1e-8
SQRT_SIGN_TOL = 1e-8
COMMUTE_TOL = 1e-9
COMPLETENESS_TOL = 1e-8


def filter_fourier(xi):
    """Even, C^2 filter profile (1 - xi^2)^3 supported on [-1, 1]."""
    xi = np.asarray(xi, dtype=float)
    out = np.where(np.abs(xi) < 1.0, (1.0 - xi * xi) ** 3, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FilterSpec:
    """Smoothing width in lattice units."""

    delta: float = 8.0

    def __post_init__(self):
        if self.delta < 2.0:
            raise ValueError(f"delta must be >= 2, got {self.delta}")


@dataclass
class XtildeOperator:
    matrix: np.ndarray = field(repr=False)
    basis: GeneralizedWannierBasis

    @property
    def grid(self):
        return self.basis.grid


def build_xtilde(basis: GeneralizedWannierBasis, P: Projector, X=None) -> XtildeOperator:
    """Sum of m1-weighted basis projectors plus the complement part Q X Q."""
    defect = basis.completeness_defect(P.P)
    if defect > COMPLETENESS_TOL:
        raise IncompleteBasisError(
            f"basis does not span range(P): defect {defect:.3e}")
    grid = basis.grid
    x = grid.x.astype(float) if X is None else np.real(diag_of(X))
    W = basis.psi
    m1 = basis.m1
    Q = P.Q
    M = (W * m1[None, :]) @ W.conj().T + Q @ (x[:, None] * Q)
    M = 0.5 * (M + M.conj().T)
    herm = np.linalg.norm(M - M.conj().T)
    if herm > XTILDE_HERMITICITY_TOL * max(1.0, np.linalg.norm(M)):
        raise ValueError(f"surrogate not Hermitian: {herm:.3e}")
    evals, _ = projected_spectrum(P, M)
    off = float(np.max(np.abs(evals - np.round(evals)))) if evals.size else 0.0
    if off > INTEGER_SPECTRUM_TOL:
        raise ValueError(f"projected spectrum off the integers by {off:.3e}")
    return XtildeOperator(matrix=M, basis=basis)


@dataclass
class XhatOperator:
    matrix: np.ndarray = field(repr=False)
    delta: float
    bandwidth: tuple            # (max |dx|, max |dy|) carrying a nonzero entry


def build_xhat(xtilde: XtildeOperator, spec: FilterSpec, grid=None) -> XhatOperator:
    """Entrywise filter smoothing of the surrogate.

    On the integer lattice this is exact: entry (i, j) is multiplied by
    fhat(dx / delta) * fhat(dy / delta), so everything beyond distance delta
    in either coordinate is exactly zero and Hermiticity is preserved
    (the profile is real and even).
    """
    grid = grid or xtilde.grid
    if not (np.all(grid.x == np.round(grid.x)) and np.all(grid.y == np.round(grid.y))):
        raise UnsupportedGeometryError("filter smoothing needs integer coordinates")
    x = grid.x.astype(float)
    y = grid.y.astype(float)
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    F = filter_fourier(dx / spec.delta) * filter_fourier(dy / spec.delta)
    M = xtilde.matrix * F
    nz = M != 0
    bw = (float(np.abs(dx)[nz].max(initial=0.0)),
          float(np.abs(dy)[nz].max(initial=0.0)))
    return XhatOperator(matrix=M, delta=spec.delta, bandwidth=bw)


def closeness_norm(xhat: XhatOperator, X):
    """Spectral norm distance between the smoothed surrogate and X."""
    x = np.diagonal(np.atleast_2d(X)) if np.asarray(X).ndim == 2 else np.asarray(X)
    D = xhat.matrix.copy()
    D[np.diag_indices_from(D)] -= x
    return operator_norm(D)


def tilt_lipschitz(xhat: XhatOperator, gammas, anchors, grid):
    """Tilted-minus-plain norms per (gamma, anchor) and the sup of norm/gamma."""
    rows = []
    sup_ratio = 0.0
    for gamma in gammas:
        for anchor in anchors:
            tilted = tilt_operator(xhat.matrix, TiltSpec(gamma, tuple(anchor)), grid)
            norm = operator_norm(tilted - xhat.matrix)
            ratio = norm / gamma if gamma > 0 else 0.0
            sup_ratio = max(sup_ratio, ratio)
            rows.append((float(gamma), float(anchor[0]), float(anchor[1]),
                         norm, ratio))
    return sup_ratio, rows


def in_gap_set(lam):
    """True when lam lies in some open interval (m + 1/4, m + 3/4)."""
    frac = lam - math.floor(lam)
    return 0.25 < frac < 0.75


def gap_midpoints(x_min, x_max):
    """Midpoints m + 1/2 of every gap interval intersecting [x_min, x_max]."""
    lo = math.floor(x_min - 0.75) + 1
    hi = math.ceil(x_max - 0.25)
    return [m + 0.5 for m in range(lo, hi)]


@dataclass
class SqrtResolvent:
    lam: float
    matrix: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)


def sqrt_resolvent(lam, basis: GeneralizedWannierBasis, P: Projector) -> SqrtResolvent:
    """Square root of the mid-gap resolvent, diagonal in the basis.

    S = |lam|^{-1/2} Q + sum |lam - m1|^{-1/2} |psi><psi|.  By construction
    it commutes with P, and conjugating (lam - P Xtilde P) by S yields an
    operator with spectrum {-1, +1}, which is verified here.
    """
    if not in_gap_set(lam):
        raise OutsideGapSetError(f"lambda={lam} outside the mid-integer gap set")
    W = basis.psi
    m1 = basis.m1
    Q = P.Q
    wts = np.abs(lam - m1)
    S = abs(lam) ** -0.5 * Q + (W * wts ** -0.5) @ W.conj().T
    S_inv = abs(lam) ** 0.5 * Q + (W * wts ** 0.5) @ W.conj().T
    S = 0.5 * (S + S.conj().T)
    S_inv = 0.5 * (S_inv + S_inv.conj().T)
    comm = np.linalg.norm(S @ P.P - P.P @ S)
    if comm > COMMUTE_TOL:
        raise ValueError(f"[S, P] = {comm:.3e} exceeds {COMMUTE_TOL}")
    pxtp = (W * m1[None, :]) @ W.conj().T
    core = lam * np.eye(W.shape[0]) - pxtp
    signs = np.linalg.eigvalsh(S @ core @ S)
    if float(np.max(np.abs(np.abs(signs) - 1.0))) > SQRT_SIGN_TOL:
        raise ValueError("conjugated mid-gap operator is not a sign operator")
    return SqrtResolvent(lam=float(lam), matrix=S, inverse=S_inv)


@dataclass
class GapCertificate:
    lam: float
    delta: float
    snorm: float
    min_gap_distance: float
    passed: bool

    def as_csv_row(self):
        return (self.lam, self.delta, self.snorm, self.min_gap_distance,
                self.passed)


def gap_certificate(P: Projector, xtilde: XtildeOperator, xhat: XhatOperator,
                    lam, spec: FilterSpec, spectrum=None) -> GapCertificate:
    """Certify that lam stays in the resolvent set of the projected operator.

    Reports the direct distance from the projected spectrum to lam together
    with the symmetrized difference norm ||S (PXhatP - PXtildeP) S||; the
    certificate passes when that norm is below 1/2, the contraction threshold
    of the mid-gap Neumann series.
    """
    if not in_gap_set(lam):
        raise OutsideGapSetError(f"lambda={lam} outside the mid-integer gap set")
    S = sqrt_resolvent(lam, xtilde.basis, P)
    Pm = P.P
    D = Pm @ (xhat.matrix - xtilde.matrix) @ Pm
    snorm = operator_norm(S.matrix @ D @ S.matrix)
    if spectrum is None:
        spectrum, _ = projected_spectrum(P, xhat.matrix)
    dist = float(np.min(np.abs(np.asarray(spectrum) - lam))) if len(spectrum) else math.inf
    return GapCertificate(lam=float(lam), delta=spec.delta, snorm=snorm,
                          min_gap_distance=dist, passed=bool(snorm < 0.5))
