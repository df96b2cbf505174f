"""Localization metrics, the real-space Chern marker with its k-space
oracle, and direct checks of the kernel-bound inequalities."""

import math
from dataclasses import dataclass

import numpy as np

from .dichotomy import GeneralizedWannierBasis
from .errors import (GaplessModelError, InsufficientRangeError,
                     UnsupportedGeometryError, WindowTooLargeError)
from .lattice import SiteGrid
from .spectral import (DECAY_FLOOR, DecayProfile, Projector, _log_linear_fit,
                       bracket, diag_of, operator_norm)
from .xhat import XtildeOperator, in_gap_set, sqrt_resolvent

MIN_SHELLS = 10
SHELL_WIDTH = 0.5
CHERN_IMAG_TOL = 1e-8


def s_moment(psi, mu, grid: SiteGrid, s):
    """Discrete 2s-th moment of |psi|^2 about mu, in Japanese brackets."""
    psi = np.asarray(psi)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("psi must be normalized")
    br = bracket(grid.x - mu[0], grid.y - mu[1])
    return float(np.sum(br ** (2.0 * s) * np.abs(psi) ** 2))


def exp_moment(psi, mu, grid: SiteGrid, gamma):
    """Finite-sum exponential moment sum exp(2 gamma <r - mu>) |psi|^2."""
    br = bracket(grid.x - mu[0], grid.y - mu[1])
    return float(np.sum(np.exp(2.0 * gamma * br) * np.abs(np.asarray(psi)) ** 2))


def fit_exponential(psi, mu, grid: SiteGrid, shell_width=SHELL_WIDTH) -> DecayProfile:
    """Tail fit of the shell-RMS magnitude of psi against <r - mu>.

    Shells of the given width partition the bracket distance; each nonempty
    shell contributes the RMS of |psi| over its sites, placed at the shell's
    mean distance.  Shells beyond the axis reach of the sample are excluded
    (past that radius only the fast, diagonally truncated directions remain
    and the envelope artificially collapses), but the cutoff never starves
    the fit below MIN_SHELLS + 1 shells' worth of radius.  A function that
    vanishes identically outside its support shells is reported as compactly
    supported (infinite rate sentinel).
    """
    psi = np.abs(np.asarray(psi))
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("psi must be normalized")
    r = bracket(grid.x - mu[0], grid.y - mu[1])
    reach = max(mu[0], (grid.width - 1) - mu[0])
    if grid.ndim == 2:
        reach = max(reach, mu[1], (grid.width - 1) - mu[1])
    r_cap = max(math.sqrt(1.0 + reach * reach),
                1.0 + (MIN_SHELLS + 1) * shell_width) + 1e-9
    shell = np.floor((r - 1.0) / shell_width).astype(int)
    dist, vals = [], []
    n_usable = n_points = 0
    has_zero_shell = subfloor_noise = False
    for k in range(shell.max() + 1):
        mask = shell == k
        if not mask.any():
            continue
        val = float(np.sqrt(np.mean(psi[mask] ** 2)))
        rep = float(np.mean(r[mask]))
        if val > DECAY_FLOOR:
            n_usable += 1
            if rep <= r_cap:
                n_points += 1
                dist.append(rep)
                vals.append(val)
        elif val == 0.0:
            has_zero_shell = True
        else:
            subfloor_noise = True
    if n_points < MIN_SHELLS:
        compact = (has_zero_shell and not subfloor_noise
                   and n_usable == n_points and n_points > 0)
        if compact:
            return DecayProfile(C=float(max(vals)), gamma=math.inf,
                                r_squared=1.0, samples=n_points,
                                flag="compact-support")
        raise InsufficientRangeError(
            f"only {n_points} usable shells, need {MIN_SHELLS}")
    C, gamma, r2 = _log_linear_fit(np.array(dist), np.array(vals))
    return DecayProfile(C=C, gamma=gamma, r_squared=r2, samples=n_points)


def pointwise_bound_fit(psi, mu, grid: SiteGrid, s, ceiling=10.0):
    """Smallest C with |psi| <= C <r - mu>^{-s} pointwise, and a pass flag."""
    br = bracket(grid.x - mu[0], grid.y - mu[1])
    c_pt = float(np.max(np.abs(np.asarray(psi)) * br ** s))
    return c_pt, bool(c_pt <= ceiling)


@dataclass
class ChernReport:
    window: int
    value: float
    imag_residual: float
    trace_terms: int

    def as_csv_row(self):
        return (self.window, self.value, self.imag_residual, self.trace_terms)


def chern_marker(P: Projector, L_w) -> ChernReport:
    """Window-traced real-space Chern marker.

    value = Re[ 2 pi i / (2 L_w)^2 * tr(chi P [[X,P],[Y,P]] P chi) ] with chi
    the indicator of the centred half-open window (c - L_w, c + L_w]^2, which
    always contains exactly (2 L_w)^2 sites.  The imaginary residual of the
    trace is reported and must vanish for Hermitian P.
    """
    grid = P.grid
    if grid.ndim != 2:
        raise UnsupportedGeometryError("Chern marker needs a 2-D sample")
    L = grid.width
    if L_w > L / 4.0:
        raise WindowTooLargeError(
            f"window half-width {L_w} leaves margin < L/4 on an L={L} sample")
    c = (L - 1) / 2.0
    x = grid.x.astype(float)
    y = grid.y.astype(float)
    win = ((x > c - L_w) & (x <= c + L_w)
           & (y > c - L_w) & (y <= c + L_w))
    Pm = P.P
    CX = x[:, None] * Pm - Pm * x[None, :]
    CY = y[:, None] * Pm - Pm * y[None, :]
    K = CX @ CY - CY @ CX
    T = Pm @ K @ Pm
    tr = complex(np.sum(np.diagonal(T)[win]))
    val = 2.0 * math.pi * 1j * tr / (2.0 * L_w) ** 2
    residual = abs(float(val.imag))
    if residual > CHERN_IMAG_TOL:
        raise ValueError(f"marker trace has imaginary residual {residual:.3e}")
    return ChernReport(window=int(L_w), value=float(val.real),
                       imag_residual=residual, trace_terms=int(win.sum()))


def _haldane_bloch(k1, k2, t1, t2, phi, m):
    f = t1 * (1.0 + np.exp(-1j * k1) + np.exp(-1j * k2))
    nnn = ((1, 0), (-1, 1), (0, -1))
    ga = 2.0 * t2 * sum(math.cos(k1 * v1 + k2 * v2 + phi) for v1, v2 in nnn)
    gb = 2.0 * t2 * sum(math.cos(k1 * v1 + k2 * v2 - phi) for v1, v2 in nnn)
    return np.array([[m + ga, f], [np.conj(f), -m + gb]])


def chern_number_kspace(t1, t2, phi, m, n_k=24):
    """Plaquette (field-strength) Chern number of the occupied Bloch band.

    Berry curvature is accumulated from link variables of the lowest-band
    eigenvector on an n_k x n_k grid of the periodic bulk model; the result
    rounds to an exact integer.  Orientation convention: plaquettes are
    traversed counter-clockwise in (k1, k2), matching the coordinate
    orientation of the real-space embedding.
    """
    ks = 2.0 * math.pi * np.arange(n_k) / n_k
    u = np.empty((n_k, n_k, 2), dtype=complex)
    gap = math.inf
    for i, k1 in enumerate(ks):
        for j, k2 in enumerate(ks):
            evals, evecs = np.linalg.eigh(_haldane_bloch(k1, k2, t1, t2, phi, m))
            gap = min(gap, float(evals[1] - evals[0]))
            u[i, j] = evecs[:, 0]
    if gap < 1e-6:
        raise GaplessModelError(f"bulk gap {gap:.3e} too small for an invariant")

    def link(a, b):
        ov = np.sum(np.conj(a) * b)
        return ov / abs(ov)

    total = 0.0
    for i in range(n_k):
        for j in range(n_k):
            ip, jp = (i + 1) % n_k, (j + 1) % n_k
            w = (link(u[i, j], u[ip, j]) * link(u[ip, j], u[ip, jp])
                 * link(u[ip, jp], u[i, jp]) * link(u[i, jp], u[i, j]))
            total += math.atan2(w.imag, w.real)
    c = total / (2.0 * math.pi)
    n = round(c)
    if abs(c - n) > 0.01:
        raise GaplessModelError(f"plaquette sum {c:.6f} does not round cleanly")
    return int(n)


def lemma_decay_check(v, m, k, s1, s2, grid: SiteGrid):
    """Unit-box norm against the bracket-weighted bound; returns (lhs, rhs, pass)."""
    v = np.asarray(v)
    mask = (grid.x == k[0]) & (grid.y == k[1])
    lhs = float(np.linalg.norm(v[mask]))
    wx = (np.abs(grid.x[mask] - m[0]) + 1.0) ** s1
    wy = (np.abs(grid.y[mask] - m[1]) + 1.0) ** s2
    num = float(np.linalg.norm(wx * wy * v[mask]))
    den = bracket(m[0] - k[0]) ** s1 * bracket(m[1] - k[1]) ** s2
    rhs = 2.0 ** (s1 + s2) * num / den
    return lhs, rhs, bool(lhs <= rhs + 1e-12)


def lemma_prod_sum_check(v, m, s1, s2, grid: SiteGrid):
    """Product weight against the sum of single-axis weights (Young)."""
    v = np.asarray(v)
    ax = np.abs(grid.x - m[0]) + 1.0
    ay = np.abs(grid.y - m[1]) + 1.0
    lhs = float(np.linalg.norm(ax ** s1 * ay ** s2 * v))
    rhs = (float(np.linalg.norm(ax ** (s1 + s2) * v))
           + float(np.linalg.norm(ay ** (s1 + s2) * v)))
    return lhs, rhs, bool(lhs <= rhs + 1e-12)


@dataclass
class SchurReport:
    sup_row: float
    sup_col: float
    bound: float
    direct_norm: float


def schur_row_sums(basis: GeneralizedWannierBasis, X=None) -> SchurReport:
    """Schur sums of the centred position kernel in the basis coordinates.

    The kernel is K[a,b] = <psi_a, X psi_b> - m1(a) delta_ab, i.e. the
    coefficient matrix of P X P minus the m1-weighted basis projectors; the
    implied bound sqrt(sup_row * sup_col) always dominates the direct
    spectral norm.
    """
    grid = basis.grid
    x = grid.x.astype(float) if X is None else np.real(diag_of(X))
    W = basis.psi
    K = W.conj().T @ (x[:, None] * W) - np.diag(basis.m1)
    absK = np.abs(K)
    sup_row = float(absK.sum(axis=1).max())
    sup_col = float(absK.sum(axis=0).max())
    return SchurReport(sup_row=sup_row, sup_col=sup_col,
                       bound=math.sqrt(sup_row * sup_col),
                       direct_norm=operator_norm(K))


def sqrt_bound_survey(P: Projector, basis: GeneralizedWannierBasis, lambdas):
    """Per mid-gap lambda, the four square-root resolvent norms plus the
    sandwiched square-root difference norm.  Rows:
    (lambda, s_p_bplus, bplus_p_s, sinv_p_bminus, bminus_p_sinv, sqrt_diff)."""
    grid = basis.grid
    x = grid.x.astype(float)
    Pm = P.P
    rows = []
    for lam in lambdas:
        S = sqrt_resolvent(lam, basis, P)
        bplus = bracket(x - lam) ** 0.5
        bminus = 1.0 / bplus
        n1 = operator_norm((S.matrix @ Pm) * bplus[None, :])
        n2 = operator_norm(bplus[:, None] * (Pm @ S.matrix))
        n3 = operator_norm((S.inverse @ Pm) * bminus[None, :])
        n4 = operator_norm(bminus[:, None] * (Pm @ S.inverse))
        diff = Pm @ S.inverse @ Pm - Pm @ (bplus[:, None] * Pm)
        rows.append((float(lam), n1, n2, n3, n4, operator_norm(diff)))
    return rows


def tilted_comm_survey(P: Projector, xtilde: XtildeOperator, lambdas):
    """Bracket-sandwiched commutators of the surrogate with X and Y, plus the
    discrete-kernel Schur sum of the gap-weighted position coefficients.
    Rows: (lambda, comm_x, comm_y, weighted_sum_sup)."""
    basis = xtilde.basis
    grid = basis.grid
    x = grid.x.astype(float)
    y = grid.y.astype(float)
    Xt = xtilde.matrix
    CX = x[:, None] * Xt - Xt * x[None, :]
    CY = y[:, None] * Xt - Xt * y[None, :]
    W = basis.psi
    m1 = basis.m1
    jidx = np.array([j for _, j in basis.lattice_index])
    coeff = np.abs(W.conj().T @ (x[:, None] * W))
    rows = []
    for lam in lambdas:
        if not in_gap_set(lam):
            raise ValueError(f"lambda={lam} outside the mid-integer gap set")
        bminus = 1.0 / bracket(x - lam) ** 0.5
        comm_x = operator_norm(bminus[:, None] * CX * bminus[None, :])
        comm_y = operator_norm(bminus[:, None] * CY * bminus[None, :])
        wts = np.abs(m1[:, None] - m1[None, :]) / np.abs(lam - m1)[None, :]
        weighted = coeff * wts
        sup = 0.0
        for j in np.unique(jidx):
            sup = max(sup, float(weighted[:, jidx == j].sum(axis=1).max()))
        rows.append((float(lam), comm_x, comm_y, sup))
    return rows
