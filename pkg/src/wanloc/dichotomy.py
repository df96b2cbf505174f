"""Projected position spectra, uniform-gap detection, band projectors and
per-band wannierization.

The pipeline here turns an algebraically localized orthonormal basis of
range(P) into per-band position eigenfunctions: cluster the spectrum of a
projected position operator, build one band projector per cluster, then
diagonalize the transverse position inside each band.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import qr, svdvals

from .errors import (IllConditionedSelectionError, IncompleteBasisError,
                     NumericalDegeneracyError)
from .lattice import SiteGrid
from .spectral import (InsufficientRangeError, Projector, TiltSpec, bracket,
                       diag_of, matrix_decay_fit, operator_norm, range_basis,
                       tilt_operator)

BAND_TOL = 1e-8
SELECTION_COND_MAX = 1e8


def fix_phases(W):
    """Make the largest-magnitude coefficient of each column real positive."""
    W = np.array(W)
    for k in range(W.shape[1]):
        col = W[:, k]
        lead = col[int(np.argmax(np.abs(col)))]
        if abs(lead) > 0:
            W[:, k] = col * (np.conj(lead) / abs(lead))
    return W


@dataclass
class GeneralizedWannierBasis:
    """Orthonormal functions spanning range(P), with center points.

    psi holds the functions as columns; centers is (n, 2).  lattice_index,
    when present, lists ((m1, m2), j) per function after relabeling onto the
    integer lattice.  moments maps s -> per-function 2s-th moment about the
    centers.
    """

    psi: np.ndarray = field(repr=False)
    centers: np.ndarray
    grid: SiteGrid
    lattice_index: list | None = None
    moments: dict | None = None

    @property
    def n_functions(self):
        return self.psi.shape[1]

    @property
    def m1(self):
        if self.lattice_index is None:
            raise IncompleteBasisError("basis has no lattice index yet")
        return np.array([m[0] for m, _ in self.lattice_index], dtype=float)

    @property
    def max_degeneracy(self):
        if self.lattice_index is None:
            raise IncompleteBasisError("basis has no lattice index yet")
        return max(j for _, j in self.lattice_index)

    def orthonormality_defect(self):
        G = self.psi.conj().T @ self.psi
        return float(np.linalg.norm(G - np.eye(self.n_functions)))

    def completeness_defect(self, P):
        return float(np.linalg.norm(self.psi @ self.psi.conj().T - np.asarray(P)))


def density_centroids(W, grid: SiteGrid):
    """Coefficient-density centroid of each column."""
    dens = np.abs(W) ** 2
    cx = dens.T @ grid.x
    cy = dens.T @ grid.y
    norm = dens.sum(axis=0)
    return np.stack([cx / norm, cy / norm], axis=1)


def projected_spectrum(P: Projector, A):
    """Eigenvalues and lifted eigenvectors of P A P restricted to range(P).

    The eigenvalues are independent of the orthonormal basis chosen for
    range(P); returned eigenvectors live in range(P) and are phase fixed.
    """
    if P.rank == 0:
        return np.zeros(0), np.zeros((P.P.shape[0], 0), dtype=complex)
    W = range_basis(P.P, P.rank)
    M = W.conj().T @ np.asarray(A) @ W
    M = 0.5 * (M + M.conj().T)
    evals, U = np.linalg.eigh(M)
    return evals, fix_phases(W @ U)


@dataclass
class GapStructure:
    """Spectrum clustered into well separated sets sigma_j."""

    intervals: list              # (lo, hi) per cluster
    members: list                # eigenvalue index arrays per cluster
    d: float                     # min inter-cluster distance
    D: float                     # max cluster diameter
    xi: np.ndarray               # cluster centroids

    @property
    def n_clusters(self):
        return len(self.intervals)


@dataclass
class GapDetectionFailure:
    reason: str
    n_clusters: int
    d: float
    D: float


def detect_uniform_gaps(eigenvalues, d_min, d_max=None):
    """Greedy 1-D clustering: split wherever consecutive gaps reach d_min.

    Returns a GapStructure, or a GapDetectionFailure when the clusters do
    not qualify as uniform gaps (one cluster swallowing more than half the
    spectral range, or a diameter above d_max).
    """
    evals = np.sort(np.asarray(eigenvalues, dtype=float))
    if evals.size == 0:
        raise ValueError("need at least one eigenvalue")
    splits = np.nonzero(np.diff(evals) >= d_min)[0]
    bounds = np.concatenate([[0], splits + 1, [evals.size]])
    members = [np.arange(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]
    intervals = [(float(evals[idx[0]]), float(evals[idx[-1]])) for idx in members]
    diameters = [hi - lo for lo, hi in intervals]
    D = float(max(diameters))
    if len(intervals) > 1:
        d = float(min(intervals[i + 1][0] - intervals[i][1]
                      for i in range(len(intervals) - 1)))
    else:
        d = math.inf
    span = float(evals[-1] - evals[0])
    if len(intervals) == 1 and D > 0.5 * span:
        return GapDetectionFailure(reason="no uniform gaps",
                                   n_clusters=1, d=d, D=D)
    if d_max is not None and D > d_max:
        return GapDetectionFailure(
            reason=f"cluster diameter {D:.6g} exceeds ceiling {d_max:.6g}",
            n_clusters=len(intervals), d=d, D=D)
    xi = np.array([evals[idx].mean() for idx in members])
    return GapStructure(intervals=intervals, members=members, d=d, D=D, xi=xi)


@dataclass
class BandDecomposition:
    """Band projectors P_j with strip centres and per-band decay profiles."""

    projectors: list = field(repr=False)
    xi: np.ndarray
    ranks: list
    decay_profiles: list


def band_projectors(P: Projector, A, gaps: GapStructure) -> BandDecomposition:
    """Spectral projectors of P A P onto each cluster, lifted to N x N."""
    _, vecs = projected_spectrum(P, A)
    projs, ranks, profiles = [], [], []
    for idx in gaps.members:
        V = vecs[:, idx]
        Pj = V @ V.conj().T
        Pj = 0.5 * (Pj + Pj.conj().T)
        projs.append(Pj)
        ranks.append(len(idx))
        try:
            profiles.append(matrix_decay_fit(Pj, P.grid))
        except InsufficientRangeError:
            profiles.append(None)
    total = sum(projs)
    if np.linalg.norm(total - P.P) > BAND_TOL:
        raise NumericalDegeneracyError(
            f"band projectors do not sum to P (defect "
            f"{np.linalg.norm(total - P.P):.3e})")
    for j in range(len(projs)):
        for k in range(j + 1, len(projs)):
            cross = np.linalg.norm(projs[j] @ projs[k])
            if cross > BAND_TOL:
                raise NumericalDegeneracyError(
                    f"bands ({j},{k}) not orthogonal: {cross:.3e}")
    return BandDecomposition(projectors=projs, xi=gaps.xi.copy(),
                             ranks=ranks, decay_profiles=profiles)


def strip_localization_check(P_j, xi_j, grid: SiteGrid, gamma, anchors):
    """max over anchors of ||(X - xi_j) P_tilted|| and ||P_tilted (X - xi_j)||."""
    xshift = grid.x.astype(float) - xi_j
    n_left = n_right = 0.0
    for anchor in anchors:
        Pg = tilt_operator(P_j, TiltSpec(gamma, tuple(anchor)), grid)
        n_left = max(n_left, operator_norm(xshift[:, None] * Pg))
        n_right = max(n_right, operator_norm(Pg * xshift[None, :]))
    return n_left, n_right


def wannierize_band(P_j, Y, xi_j, rank=None):
    """Eigenfunctions of P_j Y P_j on range(P_j), centred at (xi_j, eta)."""
    Wj = range_basis(P_j, rank)
    y = diag_of(Y)
    M = Wj.conj().T @ (y[:, None] * Wj)
    M = 0.5 * (M + M.conj().T)
    eta, U = np.linalg.eigh(M)
    vecs = fix_phases(Wj @ U)
    centers = np.stack([np.full(eta.size, float(xi_j)), eta], axis=1)
    return vecs, centers


def check_bounded_density(centers, grid: SiteGrid | None = None, radius=1.0):
    """Largest number of centres within distance `radius` of any query point.

    Queries every centre and every integer grid point; the count function's
    maxima occur within `radius` of some centre, so this grid suffices.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        raise ValueError("need at least one centre")
    queries = [centers]
    if grid is not None:
        sx, sy = grid.site_coords()
        queries.append(np.stack([sx, sy], axis=1))
    q = np.concatenate(queries, axis=0)
    d2 = ((q[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    counts = (d2 <= radius * radius + 1e-12).sum(axis=1)
    return int(counts.max())


def relabel_to_lattice(basis: GeneralizedWannierBasis) -> GeneralizedWannierBasis:
    """Snap centres onto the integer lattice and assign degeneracy indices.

    Each function is assigned the integer point m whose half-open unit square
    [m1-1/2, m1+1/2) x [m2-1/2, m2+1/2) contains its centre; ties inside one
    square are numbered j = 1..M in original order.  Centres are replaced by
    m; empty degeneracy slots are not materialized.
    """
    m = np.floor(basis.centers + 0.5).astype(int)
    occupancy = {}
    index = []
    for row in m:
        key = (int(row[0]), int(row[1]))
        occupancy[key] = occupancy.get(key, 0) + 1
        index.append((key, occupancy[key]))
    return replace(basis, centers=m.astype(float), lattice_index=index)


def attach_moments(basis: GeneralizedWannierBasis, s_grid):
    """Per-function 2s-th localization moments about the centres."""
    moments = {}
    dens = np.abs(basis.psi) ** 2
    for s in s_grid:
        vals = np.empty(basis.n_functions)
        for k in range(basis.n_functions):
            br = bracket(basis.grid.x - basis.centers[k, 0],
                         basis.grid.y - basis.centers[k, 1])
            vals[k] = float(np.sum(br ** (2.0 * s) * dens[:, k]))
        moments[float(s)] = vals
    return replace(basis, moments=moments)


def _lowdin(A):
    """Symmetric orthonormalization of the columns of A."""
    W = np.array(A, dtype=complex)
    for _ in range(3):
        S = W.conj().T @ W
        evals, U = np.linalg.eigh(0.5 * (S + S.conj().T))
        W = W @ (U * (1.0 / np.sqrt(evals))) @ U.conj().T
        if np.linalg.norm(W.conj().T @ W - np.eye(W.shape[1])) < 1e-13:
            break
    return W


def initial_basis(P: Projector, mode="columns",
                  s_grid=(1.0, 2.0, 2.5, 3.0)) -> GeneralizedWannierBasis:
    """Construct an orthonormal basis of range(P) with centre points.

    mode "columns": pivoted-QR selection of rank(P) well conditioned columns
    of P, then symmetric orthonormalization.  mode "pxp-eigen": eigenfunctions
    of P X P (the 1-D construction; in 2-D it is kept as the deliberately
    failure-prone route).
    """
    if P.rank < 1:
        raise ValueError("projector has empty range")
    grid = P.grid
    if mode == "columns":
        V = range_basis(P.P, P.rank)
        _, _, pivots = qr(V.conj().T, mode="economic", pivoting=True)
        cols = np.sort(pivots[:P.rank])
        A = P.P[:, cols]
        sv = svdvals(A)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        if cond > SELECTION_COND_MAX:
            raise IllConditionedSelectionError(
                f"selected columns have condition number {cond:.3e}; "
                "re-run with more pivots or a different selection")
        W = fix_phases(_lowdin(A))
    elif mode == "pxp-eigen":
        X = np.diag(grid.x.astype(float))
        _, W = projected_spectrum(P, X)
    else:
        raise ValueError(f"unknown basis mode {mode!r}")
    basis = GeneralizedWannierBasis(psi=W, centers=density_centroids(W, grid),
                                    grid=grid)
    return attach_moments(basis, s_grid)
