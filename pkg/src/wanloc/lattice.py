"""Finite gapped tight-binding models on integer lattices.

All builders use open boundary conditions and lattice spacing 1, so the
standard position operators X, Y are diagonal with integer entries.  The
Haldane honeycomb is embedded on the square cell lattice (both sublattice
orbitals share one integer coordinate), which keeps X, Y integer valued.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GapClosureRiskError, GaplessModelError, ModelTooSmallError

HERMITICITY_RTOL = 1e-12


@dataclass(frozen=True)
class SiteGrid:
    """Maps matrix indices to integer lattice coordinates.

    Index layout: site s = x * width + y (1-D: s = x), matrix index
    i = s * orbitals_per_site + orbital.
    """

    width: int
    orbitals_per_site: int
    ndim: int
    x: np.ndarray = field(repr=False)   # per matrix index
    y: np.ndarray = field(repr=False)

    @property
    def dimension(self):
        return self.x.size

    @property
    def n_sites(self):
        return self.dimension // self.orbitals_per_site

    def site_coords(self):
        """Coordinates per site (one row per site, orbitals collapsed)."""
        step = self.orbitals_per_site
        return self.x[::step].astype(float), self.y[::step].astype(float)


def make_grid(width, orbitals_per_site, ndim=2):
    if ndim == 2:
        sx, sy = np.meshgrid(np.arange(width), np.arange(width), indexing="ij")
        sx, sy = sx.ravel(), sy.ravel()
    elif ndim == 1:
        sx = np.arange(width)
        sy = np.zeros(width, dtype=int)
    else:
        raise ValueError(f"ndim must be 1 or 2, got {ndim}")
    x = np.repeat(sx, orbitals_per_site)
    y = np.repeat(sy, orbitals_per_site)
    return SiteGrid(width=width, orbitals_per_site=orbitals_per_site,
                    ndim=ndim, x=x, y=y)


@dataclass(frozen=True)
class TightBindingModel:
    grid: SiteGrid
    H: np.ndarray = field(repr=False)
    params: dict
    spectral_gap_estimate: float
    boundary: str = "open"

    def __post_init__(self):
        scale = max(np.linalg.norm(self.H), 1.0)
        defect = np.linalg.norm(self.H - self.H.conj().T)
        if defect > HERMITICITY_RTOL * scale:
            raise ValueError(f"Hamiltonian not Hermitian: defect {defect:.3e}")


def _index(grid, x, y, orb):
    if grid.ndim == 1:
        return x * grid.orbitals_per_site + orb
    return (x * grid.width + y) * grid.orbitals_per_site + orb


def build_haldane(L, t1, t2, phi, m_stagger):
    """Haldane model on an L x L cell grid, A/B orbitals on each cell.

    Cell-index hopping structure (equivalent to the honeycomb under an
    orientation-preserving shear): nearest-neighbour t1 couples A(c) to
    B(c), B(c - e_x), B(c - e_y); next-nearest t2*exp(i*phi) runs along
    +e_x, -e_x+e_y, -e_y on the A sublattice and the reversed directions
    on B.  Staggered on-site +m on A, -m on B.  The gap closes at
    |m| = 3*sqrt(3)*|t2 sin phi|; smaller |m| is the topological regime.
    """
    if L < 4:
        raise ModelTooSmallError(f"Haldane grid needs L >= 4, got {L}")
    grid = make_grid(L, orbitals_per_site=2, ndim=2)
    N = grid.dimension
    H = np.zeros((N, N), dtype=complex)

    def add(i, j, amp):
        H[i, j] += amp
        H[j, i] += np.conj(amp)

    nn_cells = [(0, 0), (-1, 0), (0, -1)]     # A(c) -> B(c + v)
    nnn_a = [(1, 0), (-1, 1), (0, -1)]        # A(c) -> A(c + v)
    t2c = t2 * np.exp(1j * phi)
    for cx in range(L):
        for cy in range(L):
            a = _index(grid, cx, cy, 0)
            b = _index(grid, cx, cy, 1)
            H[a, a] += m_stagger
            H[b, b] += -m_stagger
            for vx, vy in nn_cells:
                px, py = cx + vx, cy + vy
                if 0 <= px < L and 0 <= py < L:
                    add(a, _index(grid, px, py, 1), t1)
            for vx, vy in nnn_a:
                px, py = cx + vx, cy + vy
                if 0 <= px < L and 0 <= py < L:
                    add(a, _index(grid, px, py, 0), t2c)
                qx, qy = cx - vx, cy - vy
                if 0 <= qx < L and 0 <= qy < L:
                    add(b, _index(grid, qx, qy, 1), t2c)

    boundary = 3.0 * np.sqrt(3.0) * abs(t2 * np.sin(phi))
    topological = abs(m_stagger) < boundary
    params = {"type": "haldane", "L": L, "t1": t1, "t2": t2, "phi": phi,
              "m": m_stagger, "regime": "topological" if topological else "trivial"}
    gap_est = 2.0 * abs(abs(m_stagger) - boundary)
    if t2 == 0.0:
        gap_est = 2.0 * abs(m_stagger)
    return TightBindingModel(grid=grid, H=H, params=params,
                             spectral_gap_estimate=gap_est)


def build_disordered_insulator(L, gap, w, seed):
    """Two-level lattice with on-site disorder and weak band-mixing hopping.

    Orbital 0 sits at -gap/2, orbital 1 at +gap/2; independent uniform noise
    in [-w/2, w/2] is added per matrix index.  Nearest-neighbour hopping of
    amplitude gap/32 couples opposite orbitals, so the full hopping block has
    norm at most gap/8 and the spectral gap survives whenever w < gap.
    """
    if L < 4:
        raise ModelTooSmallError(f"disordered grid needs L >= 4, got {L}")
    if w >= gap:
        raise GapClosureRiskError(
            f"disorder w={w} >= gap={gap} risks closing the spectral gap")
    grid = make_grid(L, orbitals_per_site=2, ndim=2)
    N = grid.dimension
    rng = np.random.default_rng(seed)
    onsite = np.where(np.arange(N) % 2 == 0, -gap / 2.0, +gap / 2.0)
    onsite = onsite + rng.uniform(-w / 2.0, w / 2.0, size=N)
    H = np.diag(onsite.astype(complex))

    t_hop = gap / 32.0
    for cx in range(L):
        for cy in range(L):
            for vx, vy in ((1, 0), (0, 1)):
                px, py = cx + vx, cy + vy
                if not (0 <= px < L and 0 <= py < L):
                    continue
                for orb in (0, 1):
                    i = _index(grid, cx, cy, orb)
                    j = _index(grid, px, py, 1 - orb)
                    H[i, j] += t_hop
                    H[j, i] += t_hop

    params = {"type": "disordered", "L": L, "gap": gap, "w": w, "seed": seed}
    gap_est = max(gap - w - 2.0 * 4.0 * t_hop, 0.0)
    return TightBindingModel(grid=grid, H=H, params=params,
                             spectral_gap_estimate=gap_est)


def build_ssh_chain(L, t1, t2):
    """Dimerized chain of L cells (2L sites), both dimer orbitals at one x."""
    if abs(t1) == abs(t2):
        raise GaplessModelError(f"|t1| == |t2| == {abs(t1)} is gapless")
    grid = make_grid(L, orbitals_per_site=2, ndim=1)
    N = grid.dimension
    H = np.zeros((N, N), dtype=complex)
    for cx in range(L):
        a = _index(grid, cx, 0, 0)
        b = _index(grid, cx, 0, 1)
        H[a, b] += t1
        H[b, a] += t1
        if cx + 1 < L:
            a_next = _index(grid, cx + 1, 0, 0)
            H[b, a_next] += t2
            H[a_next, b] += t2
    params = {"type": "ssh", "L": L, "t1": t1, "t2": t2}
    return TightBindingModel(grid=grid, H=H, params=params,
                             spectral_gap_estimate=2.0 * abs(abs(t1) - abs(t2)))


def build_atomic(L, m=1.0):
    """Hopping-free two-level lattice; every projector is diagonal."""
    return build_haldane(L, t1=0.0, t2=0.0, phi=0.0, m_stagger=m)


def position_operators(model):
    """Diagonal X and Y as full matrices (Y is zero for 1-D chains)."""
    grid = model.grid
    X = np.diag(grid.x.astype(float))
    Y = np.diag(grid.y.astype(float))
    return X, Y
