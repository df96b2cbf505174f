import numpy as np
import pytest

import wanloc as wl
from wanloc.dichotomy import attach_moments
from wanloc.errors import (IncompleteBasisError, OutsideGapSetError,
                           UnsupportedGeometryError)
from wanloc.lattice import SiteGrid, make_grid
from wanloc.spectral import Projector
from wanloc.xhat import FilterSpec, build_xhat, build_xtilde, gap_certificate


def atomic_setup(L=6):
    """Diagonal projector with a delta basis on an L x L two-orbital grid."""
    model = wl.build_haldane(L, 0.0, 0.0, 0.0, 1.0)
    P = wl.fermi_projector(model, 0.0)
    basis = wl.relabel_to_lattice(wl.initial_basis(P, s_grid=(1.0,)))
    return model, P, basis


@pytest.fixture(scope="module")
def dis8_stack():
    model = wl.build_disordered_insulator(8, 2.0, 0.5, 7)
    P = wl.fermi_projector(model, 0.0)
    basis = attach_moments(wl.relabel_to_lattice(
        wl.initial_basis(P, s_grid=(1.0,))), (1.0,))
    xt = build_xtilde(basis, P)
    return model, P, basis, xt


# --- filter profile ----------------------------------------------------------

def test_filter_normalization_and_support():
    assert wl.filter_fourier(0.0) == 1.0
    assert wl.filter_fourier(1.0) == 0.0
    assert wl.filter_fourier(-1.0) == 0.0
    assert wl.filter_fourier(2.0) == 0.0
    assert wl.filter_fourier(0.5) == pytest.approx(0.421875, abs=1e-15)
    xs = np.linspace(-2, 2, 41)
    assert np.allclose(wl.filter_fourier(xs), wl.filter_fourier(-xs))


def test_filter_spec_minimum_width():
    with pytest.raises(ValueError):
        FilterSpec(1.5)


# --- surrogate construction --------------------------------------------------

def test_xtilde_atomic_equals_position():
    model, P, basis = atomic_setup()
    xt = build_xtilde(basis, P)
    X, _ = wl.position_operators(model)
    assert np.linalg.norm(xt.matrix - X) <= 1e-10


def test_xtilde_single_function_origin_center():
    grid = SiteGrid(width=1, orbitals_per_site=1, ndim=2,
                    x=np.array([0]), y=np.array([0]))
    P = Projector(P=np.eye(1, dtype=complex), rank=1, fermi_energy=0.0,
                  gap=1.0, grid=grid)
    basis = wl.GeneralizedWannierBasis(psi=np.eye(1, dtype=complex),
                                       centers=np.zeros((1, 2)), grid=grid,
                                       lattice_index=[((0, 0), 1)])
    xt = build_xtilde(basis, P)
    assert np.all(xt.matrix == 0.0)


def test_xtilde_integer_projected_spectrum(dis8_stack):
    _, P, _, xt = dis8_stack
    evals, _ = wl.projected_spectrum(P, xt.matrix)
    assert np.max(np.abs(evals - np.round(evals))) <= 1e-8


def test_xtilde_distance_to_position_respects_schur_bound(dis8_stack):
    model, P, basis, xt = dis8_stack
    X, _ = wl.position_operators(model)
    rep = wl.schur_row_sums(basis)
    comm = wl.operator_norm(wl.commutator(X, P.P))
    direct = wl.operator_norm(xt.matrix - X)
    assert direct <= rep.bound + 2.0 * comm + 1e-9


def test_xtilde_rejects_incomplete_basis(dis8_stack):
    _, P, basis, _ = dis8_stack
    truncated = wl.GeneralizedWannierBasis(
        psi=basis.psi[:, :-2], centers=basis.centers[:-2], grid=basis.grid,
        lattice_index=basis.lattice_index[:-2])
    with pytest.raises(IncompleteBasisError):
        build_xtilde(truncated, P)


# --- filter smoothing --------------------------------------------------------

def test_xhat_of_diagonal_surrogate_is_identity_map():
    model, P, basis = atomic_setup()
    xt = build_xtilde(basis, P)
    xh = build_xhat(xt, FilterSpec(4.0))
    assert np.array_equal(xh.matrix, xt.matrix)


def test_xhat_entry_scaling_and_bandwidth(dis8_stack):
    _, _, _, xt = dis8_stack
    xh = build_xhat(xt, FilterSpec(2.0))
    grid = xt.grid
    dx = np.abs(grid.x[:, None] - grid.x[None, :])
    dy = np.abs(grid.y[:, None] - grid.y[None, :])
    # entries with (dx, dy) = (1, 0) are scaled by fhat(1/2) = 0.421875
    sel = (dx == 1) & (dy == 0)
    assert np.allclose(xh.matrix[sel], xt.matrix[sel] * 0.421875, atol=1e-15)
    # exact zeros at or beyond the bandwidth in either coordinate
    assert np.all(xh.matrix[(dx >= 2.0) | (dy >= 2.0)] == 0.0)
    assert xh.bandwidth[0] < 2.0 and xh.bandwidth[1] < 2.0


def test_xhat_hermitian(dis8_stack):
    _, _, _, xt = dis8_stack
    xh = build_xhat(xt, FilterSpec(8.0))
    assert np.linalg.norm(xh.matrix - xh.matrix.conj().T) <= 1e-12 * max(
        1.0, np.linalg.norm(xh.matrix))


def test_xhat_requires_integer_coordinates(dis8_stack):
    _, _, _, xt = dis8_stack
    g = xt.grid
    crooked = SiteGrid(width=g.width, orbitals_per_site=g.orbitals_per_site,
                       ndim=g.ndim, x=g.x + 0.25, y=g.y)
    with pytest.raises(UnsupportedGeometryError):
        build_xhat(xt, FilterSpec(4.0), grid=crooked)


# --- closeness ---------------------------------------------------------------

def test_closeness_zero_in_atomic_limit():
    model, P, basis = atomic_setup()
    xt = build_xtilde(basis, P)
    xh = build_xhat(xt, FilterSpec(4.0))
    X, _ = wl.position_operators(model)
    assert wl.closeness_norm(xh, X) <= 1e-10


def test_closeness_bounded_across_sizes(dis_projectors):
    norms = []
    for L in (8, 12, 16):
        model, P = dis_projectors[L]
        basis = wl.relabel_to_lattice(wl.initial_basis(P, s_grid=(1.0,)))
        xt = build_xtilde(basis, P)
        xh = build_xhat(xt, FilterSpec(8.0))
        X, _ = wl.position_operators(model)
        norms.append(wl.closeness_norm(xh, X))
    assert max(norms) / min(norms) < 1.2


def test_closeness_approaches_unfiltered_distance_for_wide_filters(dis8_stack):
    model, _, _, xt = dis8_stack
    X, _ = wl.position_operators(model)
    wide = build_xhat(xt, FilterSpec(1e5))
    assert abs(wl.closeness_norm(wide, X)
               - wl.operator_norm(xt.matrix - X)) <= 1e-6


# --- tilt response -----------------------------------------------------------

def test_tilt_lipschitz_diagonal_operator_is_tilt_free():
    model, P, basis = atomic_setup()
    xt = build_xtilde(basis, P)
    xh = build_xhat(xt, FilterSpec(4.0))
    sup, rows = wl.tilt_lipschitz(xh, (0.05, 0.1), [(2.0, 2.0)], model.grid)
    assert sup <= 1e-12


def test_tilt_lipschitz_near_linear_scaling(dis8_stack):
    model, _, _, xt = dis8_stack
    xh = build_xhat(xt, FilterSpec(8.0))
    anchors = [(3.5, 3.5)]
    _, rows = wl.tilt_lipschitz(xh, (0.05, 0.1), anchors, model.grid)
    norm_at = {g: n for (g, _, _, n, _) in rows}
    assert 1.6 <= norm_at[0.1] / norm_at[0.05] <= 2.4


def test_tilt_lipschitz_uniform_in_anchor(dis8_stack):
    model, _, _, xt = dis8_stack
    xh = build_xhat(xt, FilterSpec(8.0))
    sup_center, _ = wl.tilt_lipschitz(xh, (0.1,), [(3.5, 3.5)], model.grid)
    sup_shift, _ = wl.tilt_lipschitz(xh, (0.1,), [(8.5, 8.5)], model.grid)
    assert sup_shift / sup_center < 2.0
    assert sup_center / sup_shift < 2.0


# --- mid-gap machinery -------------------------------------------------------

def test_gap_set_membership_and_midpoints():
    assert wl.in_gap_set(0.5)
    assert wl.in_gap_set(-0.6)
    assert not wl.in_gap_set(0.0)
    assert not wl.in_gap_set(0.25)
    assert not wl.in_gap_set(0.8)
    assert wl.gap_midpoints(0.0, 7.0) == [m + 0.5 for m in range(7)]


def test_sqrt_resolvent_single_function():
    grid = SiteGrid(width=1, orbitals_per_site=1, ndim=2,
                    x=np.array([0]), y=np.array([0]))
    P = Projector(P=np.eye(1, dtype=complex), rank=1, fermi_energy=0.0,
                  gap=1.0, grid=grid)
    basis = wl.GeneralizedWannierBasis(psi=np.eye(1, dtype=complex),
                                       centers=np.zeros((1, 2)), grid=grid,
                                       lattice_index=[((0, 0), 1)])
    S = wl.sqrt_resolvent(0.5, basis, P)
    assert S.matrix[0, 0] == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_sqrt_resolvent_empty_projector_is_scaled_identity():
    grid = make_grid(4, 1, ndim=2)
    N = grid.dimension
    P = Projector(P=np.zeros((N, N), dtype=complex), rank=0, fermi_energy=-10.0,
                  gap=1.0, grid=grid)
    basis = wl.GeneralizedWannierBasis(psi=np.zeros((N, 0), dtype=complex),
                                       centers=np.zeros((0, 2)), grid=grid,
                                       lattice_index=[])
    S = wl.sqrt_resolvent(0.5, basis, P)
    assert np.allclose(S.matrix, np.sqrt(2.0) * np.eye(N), atol=1e-12)


def test_sqrt_resolvent_commutes_with_projector(dis8_stack):
    _, P, basis, _ = dis8_stack
    S = wl.sqrt_resolvent(0.5, basis, P)
    assert np.linalg.norm(S.matrix @ P.P - P.P @ S.matrix) <= 1e-9
    assert np.linalg.norm(S.matrix @ S.inverse - np.eye(P.P.shape[0])) <= 1e-9


def test_sqrt_resolvent_rejects_values_outside_gap_set(dis8_stack):
    _, P, basis, _ = dis8_stack
    with pytest.raises(OutsideGapSetError):
        wl.sqrt_resolvent(1.0, basis, P)


def test_gap_certificate_unfiltered_surrogate_is_exact(dis8_stack):
    _, P, _, xt = dis8_stack
    ident = wl.XhatOperator(matrix=xt.matrix.copy(), delta=8.0,
                            bandwidth=(7.0, 7.0))
    cert = gap_certificate(P, xt, ident, 0.5, FilterSpec(8.0))
    assert cert.snorm <= 1e-9
    assert cert.min_gap_distance >= 0.25
    assert cert.passed


def test_gap_certificate_norm_decreases_with_filter_width(dis8_stack):
    _, P, _, xt = dis8_stack
    lambdas = wl.gap_midpoints(0.0, 7.0)
    norms = []
    for delta in (4.0, 8.0, 16.0):
        xh = build_xhat(xt, FilterSpec(delta))
        spectrum, _ = wl.projected_spectrum(P, xh.matrix)
        certs = [gap_certificate(P, xt, xh, lam, FilterSpec(delta),
                                 spectrum=spectrum) for lam in lambdas]
        assert all(c.passed for c in certs)
        norms.append(max(c.snorm for c in certs))
    assert norms[0] > norms[1] > norms[2]
