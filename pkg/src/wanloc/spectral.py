"""Fermi projectors, exponential tilts, and kernel-decay fits."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import svdvals

from .errors import InsufficientRangeError, NoGapError, TiltTooLargeError
from .lattice import SiteGrid, TightBindingModel

IDEMPOTENCY_TOL = 1e-10
HERMITICITY_TOL = 1e-12
DECAY_FLOOR = 1e-14
MIN_DECAY_BINS = 10
TILT_MAX_WEIGHT = 1e12
NO_DECAY_RATE = 1e-2


def bracket(dx, dy=0.0):
    """Japanese bracket sqrt(1 + |v|^2), elementwise."""
    return np.sqrt(1.0 + np.square(dx) + np.square(dy))


def diag_of(A):
    """Accept a diagonal operator as a full matrix or a 1-D array."""
    A = np.asarray(A)
    return np.diagonal(A) if A.ndim == 2 else A


def commutator(A, B):
    A, B = np.asarray(A), np.asarray(B)
    if A.shape != B.shape or A.ndim != 2:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return A @ B - B @ A


def operator_norm(A):
    """Spectral norm (largest singular value)."""
    A = np.atleast_2d(np.asarray(A))
    if not np.any(A):
        return 0.0
    return float(svdvals(A)[0])


@dataclass(frozen=True)
class Projector:
    """Fermi projection P with its rank, gap and grid metadata."""

    P: np.ndarray = field(repr=False)
    rank: int
    fermi_energy: float
    gap: float
    grid: SiteGrid

    def __post_init__(self):
        P = self.P
        if np.linalg.norm(P - P.conj().T) > HERMITICITY_TOL * max(1.0, np.linalg.norm(P)):
            raise ValueError("projector not Hermitian")
        if np.linalg.norm(P @ P - P) > IDEMPOTENCY_TOL:
            raise ValueError("projector not idempotent")
        if abs(np.trace(P).real - self.rank) > 1e-8:
            raise ValueError("trace does not match rank")

    @property
    def Q(self):
        return np.eye(self.P.shape[0]) - self.P


def fermi_projector(model: TightBindingModel, fermi_energy: float) -> Projector:
    """Spectral projector onto eigenstates below the Fermi energy."""
    evals, evecs = np.linalg.eigh(model.H)
    dist = np.abs(evals - fermi_energy)
    nearest = int(np.argmin(dist))
    if dist[nearest] < 1e-6:
        below = evals[evals < fermi_energy]
        above = evals[evals >= fermi_energy]
        lo = below[-1] if below.size else -math.inf
        hi = above[0] if above.size else math.inf
        raise NoGapError(
            f"E_F={fermi_energy} within 1e-6 of spectrum "
            f"(bracketing eigenvalues {lo}, {hi})")
    occ = evals < fermi_energy
    V = evecs[:, occ]
    P = V @ V.conj().T
    P = 0.5 * (P + P.conj().T)
    return Projector(P=P, rank=int(occ.sum()), fermi_energy=fermi_energy,
                     gap=2.0 * float(dist[nearest]), grid=model.grid)


def range_basis(P, rank=None):
    """Orthonormal basis of range(P) as columns, from the eigenvectors of P."""
    P = np.asarray(P)
    evals, evecs = np.linalg.eigh(P)
    keep = evals > 0.5
    W = evecs[:, keep]
    if rank is not None and W.shape[1] != rank:
        raise ValueError(f"range basis rank {W.shape[1]} != expected {rank}")
    return W


@dataclass(frozen=True)
class TiltSpec:
    """Exponential tilt with rate gamma about an anchor point.

    Estimates use gamma >= 0; a negative rate inverts the conjugation.
    """

    gamma: float
    anchor: tuple = (0.0, 0.0)


def tilt_weights(grid: SiteGrid, spec: TiltSpec):
    """Diagonal of log B: gamma * bracket(r - anchor), with overflow guard."""
    a1, a2 = spec.anchor
    w = bracket(grid.x - a1, grid.y - a2)
    max_exp = abs(spec.gamma) * float(np.max(w))
    if max_exp > 700.0 or math.exp(max_exp) > TILT_MAX_WEIGHT:
        raise TiltTooLargeError(
            f"tilt weight exp({max_exp:.3f}) exceeds {TILT_MAX_WEIGHT:.0e}")
    return spec.gamma * w


def tilt_operator(A, spec: TiltSpec, grid: SiteGrid):
    """Conjugation B A B^{-1} with the diagonal weight B = exp(gamma<r-a>).

    Computed entrywise as exp(w_i - w_j) * A_ij, which is exact and avoids
    forming large/small diagonal factors separately.
    """
    if spec.gamma == 0.0:
        return np.asarray(A).copy()
    w = tilt_weights(grid, spec)
    return np.asarray(A) * np.exp(w[:, None] - w[None, :])


@dataclass(frozen=True)
class DecayProfile:
    """Exponential kernel envelope |A(x,x')| <= C exp(-gamma |x-x'|)."""

    C: float
    gamma: float
    r_squared: float
    samples: int
    flag: str | None = None

    def as_csv_row(self, model_id):
        return (model_id, self.C, self.gamma, self.r_squared, self.samples)


def _log_linear_fit(dist, vals):
    """Least squares of log(vals) against dist; returns (C, gamma, r2)."""
    logs = np.log(vals)
    slope, intercept = np.polyfit(dist, logs, 1)
    pred = slope * dist + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(np.exp(intercept)), float(-slope), r2


def kernel_envelope(matrix, grid: SiteGrid):
    """Per site-pair distance bin, the max kernel magnitude.

    Orbitals are collapsed: the bin value is the max of |A_ij| over all
    orbital pairs of every site pair at that distance.  Bins are the exact
    distances realised on the integer lattice.  Returns (dist, mags) sorted
    by distance.
    """
    n_orb = grid.orbitals_per_site
    ns = grid.n_sites
    mags = np.abs(np.asarray(matrix)).reshape(ns, n_orb, ns, n_orb).max(axis=(1, 3))
    sx, sy = grid.site_coords()
    d2 = ((sx[:, None] - sx[None, :]) ** 2
          + (sy[:, None] - sy[None, :]) ** 2).astype(np.int64)
    order = np.argsort(d2.ravel(), kind="stable")
    d2_sorted = d2.ravel()[order]
    m_sorted = mags.ravel()[order]
    uniq, starts = np.unique(d2_sorted, return_index=True)
    bin_max = np.maximum.reduceat(m_sorted, starts)
    return np.sqrt(uniq.astype(float)), bin_max


def kernel_decay_fit(P: Projector) -> DecayProfile:
    """Fit the exponential envelope of a projector kernel."""
    return matrix_decay_fit(P.P, P.grid)


def matrix_decay_fit(matrix, grid: SiteGrid) -> DecayProfile:
    dist, mags = kernel_envelope(matrix, grid)
    off = dist > 0
    if off.any() and not np.any(mags[off]):
        # off-diagonal kernel identically zero: compactly supported
        return DecayProfile(C=float(mags[~off].max(initial=1.0)), gamma=math.inf,
                            r_squared=1.0, samples=int(off.sum()),
                            flag="compact-support")
    usable = mags > DECAY_FLOOR
    if int(usable.sum()) < MIN_DECAY_BINS:
        raise InsufficientRangeError(
            f"only {int(usable.sum())} usable distance bins, need {MIN_DECAY_BINS}")
    C, gamma, r2 = _log_linear_fit(dist[usable], mags[usable])
    flag = "no-decay" if gamma < NO_DECAY_RATE else None
    return DecayProfile(C=C, gamma=gamma, r_squared=r2,
                        samples=int(usable.sum()), flag=flag)
