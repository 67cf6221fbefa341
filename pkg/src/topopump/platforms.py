"""Exchange and decay rate models for three emitter-chain platforms.

Covers dimerized two-sublattice chains of two-level emitters in the
single-excitation sector, for three physical realizations:

* ``rydberg`` -- static dipole-dipole exchange ``c3 (3 cos^2 theta - 1)/r^3``
  between Rydberg atoms arranged in two parallel lines, with the dipole
  orientation tilted at the magic angle so same-line couplings vanish.
* ``free_space`` -- resonant dipole-dipole exchange and collective decay of
  atoms in a single line coupled through the free-space photon field.
* ``waveguide`` -- emitters helically wrapped around a single-mode waveguide,
  with infinite-range sinusoidal exchange and decay set by the guided mode.

All energies are rates (hbar = 1).  Lengths and rates are caller-chosen
units; the defaults put the unit cell at ``a = 1``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

__all__ = [
    "MAGIC_ANGLE",
    "RydbergParams",
    "FreeSpaceParams",
    "WaveguideParams",
    "ChainGeometry",
    "CouplingMatrices",
    "NearestNeighborRates",
    "rydberg_coupling",
    "free_space_coupling",
    "free_space_decay",
    "waveguide_coupling",
    "waveguide_decay",
    "build_chain",
    "build_coupling_matrices",
    "rydberg_nn_rates",
    "hopping_families",
    "helix_bloch_coefficients",
    "dipole_angle_for_dark_sublattice",
    "spacing_for_dark_sublattice",
    "with_control",
    "control_field",
    "fold_to_zone",
    "light_line_momenta",
]

# Dipole tilt at which 3 cos^2(theta) - 1 = 0; kills couplings along the tilt
# reference axis (same-sublattice pairs in the Rydberg geometry).
MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))


# ---------------------------------------------------------------------------
# platform parameter sets


@dataclass(frozen=True)
class RydbergParams:
    """Two parallel lines of Rydberg atoms with a tilted dipole orientation.

    Sublattice A sits at ``(q a, 0, 0)``, sublattice B at ``(q a + b, -h, 0)``.
    The dipole unit vector is ``(cos theta_m, sin theta_m, 0)``; at the default
    magic-angle tilt every same-sublattice exchange rate vanishes exactly.

    Attributes
    ----------
    c3 : float
        Dipole-dipole coefficient, in units of (rate) * (length)^3.
    a : float
        Unit-cell length along the chain.
    b : float
        Longitudinal offset of sublattice B within the cell (control knob).
    h : float
        Transverse separation between the two lines.
    theta_m : float
        Dipole tilt angle from the chain axis, in radians.
    gamma : float
        Uniform single-atom decay rate (independent emission; no collective
        component at these sub-wavelength-free scales).
    """

    c3: float = 1.0
    a: float = 1.0
    b: float = 0.16
    h: float = 7.4 / 12.0
    theta_m: float = MAGIC_ANGLE
    gamma: float = 0.0


@dataclass(frozen=True)
class FreeSpaceParams:
    """Single line of atoms coupled through the free-space photon field.

    All atoms sit on the x axis (A at ``q a``, B at ``q a + b``) with dipoles
    tilted by ``theta_d`` from the axis, so every pair shares the same
    ``cos^2`` projection factor.

    Attributes
    ----------
    gamma : float
        Single-atom spontaneous decay rate.
    lambda0 : float
        Transition wavelength (sets the photon momentum ``k0 = 2 pi/lambda0``).
    a : float
        Unit-cell length (same-sublattice spacing).
    b : float
        Longitudinal offset of sublattice B within the cell (control knob).
    theta_d : float
        Dipole angle from the chain axis, in radians.
    """

    gamma: float = 1.0
    lambda0: float = 1.0 / 0.7
    a: float = 1.0
    b: float = 0.25
    theta_d: float = np.pi / 2.0

    @property
    def k0(self) -> float:
        return 2.0 * np.pi / self.lambda0


@dataclass(frozen=True)
class WaveguideParams:
    """Emitters helically wrapped around a single-mode waveguide.

    Emitter ``i`` sits at angle ``phi_i`` and axial position ``z_i`` on a
    cylinder of radius ``rho``.  Sublattice A: ``phi = q phi1, z = q a``;
    sublattice B: ``phi = q phi1 + phi1p, z = q a + b``.  Exchange and decay
    depend only on the angle and axial differences; ``rho`` only matters for
    positional-disorder studies (it converts transverse displacement into
    angle noise).

    The default configuration ``a = pi/beta``, ``b = a/2``, ``phi1 = pi/2``
    makes every same-sublattice exchange rate vanish; ``phi1p`` is the pump
    control knob.

    Attributes
    ----------
    gamma : float
        Emission rate into the guided mode.
    beta : float
        Guided-mode propagation constant.
    a : float
        Unit-cell length along the waveguide axis.
    b : float
        Axial offset of sublattice B within the cell.
    phi1 : float
        Cell-to-cell azimuthal advance, radians.
    phi1p : float
        Azimuthal offset of sublattice B within the cell (control knob).
    rho : float
        Radial distance of the trapped emitters from the waveguide axis.
    """

    gamma: float = 1.0
    beta: float = np.pi
    a: float = 1.0
    b: float = 0.5
    phi1: float = np.pi / 2.0
    phi1p: float = np.pi / 4.0
    rho: float = 1.0


PlatformParams = RydbergParams | FreeSpaceParams | WaveguideParams

# Name of the dataclass field a pump cycle modulates, per platform.
_CONTROL_FIELDS = {
    RydbergParams: "b",
    FreeSpaceParams: "b",
    WaveguideParams: "phi1p",
}


def control_field(params: PlatformParams) -> str:
    """Name of the geometric control knob for this platform ('b' or 'phi1p')."""
    return _CONTROL_FIELDS[type(params)]


def with_control(params: PlatformParams, value: float) -> PlatformParams:
    """Copy of ``params`` with the control knob set to ``value``."""
    return dataclasses.replace(params, **{control_field(params): float(value)})


# ---------------------------------------------------------------------------
# pair rate formulas (scalar or ndarray arguments)


def rydberg_coupling(r, cos_theta, c3):
    """Static dipole-dipole exchange rate ``c3 (3 cos^2 theta - 1) / r^3``."""
    r = np.asarray(r, dtype=float)
    return c3 * (3.0 * np.square(cos_theta) - 1.0) / r**3


def free_space_coupling(r, cos_theta, gamma, k0):
    """Resonant free-space exchange rate between two dipoles.

    ``(3 gamma / 4) [ (3 c^2 - 1)(cos x / x^3 + sin x / x^2)
    + (1 - c^2) cos x / x ]`` with ``x = k0 r`` and ``c`` the cosine of the
    angle between the separation and the dipole orientation.
    """
    x = np.asarray(k0 * np.asarray(r, dtype=float))
    c2 = np.square(cos_theta)
    near = (3.0 * c2 - 1.0) * (np.cos(x) / x**3 + np.sin(x) / x**2)
    far = (1.0 - c2) * np.cos(x) / x
    return 0.75 * gamma * (near + far)


def free_space_decay(r, cos_theta, gamma, k0):
    """Collective free-space decay rate; equals ``gamma`` at zero separation.

    ``(3 gamma / 2) [ (3 c^2 - 1)(sin x / x^3 - cos x / x^2)
    + (1 - c^2) sin x / x ]`` with ``x = k0 r``.
    """
    x = np.asarray(k0 * np.asarray(r, dtype=float))
    c2 = np.square(cos_theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        near = (3.0 * c2 - 1.0) * (np.sin(x) / x**3 - np.cos(x) / x**2)
        far = (1.0 - c2) * np.sin(x) / x
        out = 1.5 * gamma * (near + far)
    return np.where(x == 0.0, gamma, out)


def waveguide_coupling(phi_ij, z_ij, gamma, beta):
    """Guided-mode exchange rate ``(gamma/2) cos(phi_ij) sin(beta z_ij)``.

    The formula is written for ``z_ij`` taken as the (positive) axial
    separation; matrix assembly uses ``|z_i - z_j|``, which keeps the
    assembled exchange matrix symmetric.
    """
    return 0.5 * gamma * np.cos(phi_ij) * np.sin(beta * np.asarray(z_ij))


def waveguide_decay(phi_ij, z_ij, gamma, beta):
    """Guided-mode collective decay rate ``gamma cos(phi_ij) cos(beta z_ij)``."""
    return gamma * np.cos(phi_ij) * np.cos(beta * np.asarray(z_ij))


# ---------------------------------------------------------------------------
# chain geometries


@dataclass
class ChainGeometry:
    """Emitter positions of a dimerized chain, sites ordered A0 B0 A1 B1 ...

    Attributes
    ----------
    positions : ndarray, shape (n_sites, 3)
        Cartesian emitter positions.
    sublattice : ndarray, shape (n_sites,)
        0 for sublattice A, 1 for sublattice B.
    cell_length : float
        Longitudinal unit-cell length ``a``.
    n_cells : int
    """

    positions: np.ndarray
    sublattice: np.ndarray
    cell_length: float
    n_cells: int

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        n = self.n_sites
        if n != 2 * self.n_cells:
            raise GeometryError(
                f"expected {2 * self.n_cells} sites for {self.n_cells} cells, got {n}"
            )
        if not np.array_equal(self.sublattice, np.arange(n) % 2):
            raise GeometryError("sites must be ordered A0 B0 A1 B1 ...")
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[i, j] < 1e-12 * self.cell_length:
            raise GeometryError(f"coincident emitters: sites {i} and {j}")


def _check_even(n_sites: int) -> int:
    if n_sites < 4 or n_sites % 2:
        raise GeometryError(f"n_sites must be even and >= 4, got {n_sites}")
    return n_sites // 2


def build_chain(params: PlatformParams, n_sites: int) -> ChainGeometry:
    """Emitter geometry for ``n_sites`` sites (= ``n_sites/2`` unit cells)."""
    n_cells = _check_even(n_sites)
    q = np.arange(n_cells, dtype=float)
    pos = np.zeros((n_sites, 3))
    if isinstance(params, RydbergParams):
        pos[0::2, 0] = q * params.a
        pos[1::2, 0] = q * params.a + params.b
        pos[1::2, 1] = -params.h
    elif isinstance(params, FreeSpaceParams):
        pos[0::2, 0] = q * params.a
        pos[1::2, 0] = q * params.a + params.b
    elif isinstance(params, WaveguideParams):
        phi = np.empty(n_sites)
        z = np.empty(n_sites)
        phi[0::2] = q * params.phi1
        phi[1::2] = q * params.phi1 + params.phi1p
        z[0::2] = q * params.a
        z[1::2] = q * params.a + params.b
        pos[:, 0] = params.rho * np.cos(phi)
        pos[:, 1] = params.rho * np.sin(phi)
        pos[:, 2] = z
    else:
        raise TypeError(f"unknown platform params: {type(params).__name__}")
    geom = ChainGeometry(
        positions=pos,
        sublattice=np.arange(n_sites) % 2,
        cell_length=params.a,
        n_cells=n_cells,
    )
    return geom


def waveguide_cylinder_coords(
    params: WaveguideParams, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Recover (phi, z) cylinder coordinates from 3-D emitter positions."""
    phi = np.arctan2(positions[:, 1], positions[:, 0])
    return phi, positions[:, 2].copy()


# ---------------------------------------------------------------------------
# coupling matrix assembly


@dataclass
class CouplingMatrices:
    """Assembled exchange matrix ``v`` and decay matrix ``gamma`` (n x n)."""

    v: np.ndarray
    gamma: np.ndarray


def _pair_geometry(positions: np.ndarray):
    diff = positions[None, :, :] - positions[:, None, :]
    dist = np.linalg.norm(diff, axis=-1)
    return diff, dist


def build_coupling_matrices(
    params: PlatformParams,
    geometry: ChainGeometry,
    validate: bool = True,
) -> CouplingMatrices:
    """Assemble the full exchange and decay matrices for a chain.

    Parameters
    ----------
    params : platform parameter set
    geometry : ChainGeometry
        Emitter positions; need not be the ideal lattice (positional disorder
        enters through displaced positions).
    validate : bool
        When True, check geometry sanity, matrix symmetry and positive
        semi-definiteness of the decay matrix (tolerance 1e-10 of the largest
        entry).  Disable in hot loops that rebuild matrices every time step.
    """
    if validate:
        geometry.validate()
    n = geometry.n_sites
    v = np.zeros((n, n))
    if isinstance(params, RydbergParams):
        diff, dist = _pair_geometry(geometry.positions)
        np.fill_diagonal(dist, 1.0)
        dipole = np.array([np.cos(params.theta_m), np.sin(params.theta_m), 0.0])
        cos_t = (diff @ dipole) / dist
        v = rydberg_coupling(dist, cos_t, params.c3)
        np.fill_diagonal(v, 0.0)
        g = params.gamma * np.eye(n)
    elif isinstance(params, FreeSpaceParams):
        diff, dist = _pair_geometry(geometry.positions)
        np.fill_diagonal(dist, 1.0)
        dipole = np.array([np.cos(params.theta_d), np.sin(params.theta_d), 0.0])
        cos_t = (diff @ dipole) / dist
        v = free_space_coupling(dist, cos_t, params.gamma, params.k0)
        np.fill_diagonal(v, 0.0)
        dist_g = dist.copy()
        np.fill_diagonal(dist_g, 0.0)
        g = free_space_decay(dist_g, cos_t, params.gamma, params.k0)
    elif isinstance(params, WaveguideParams):
        phi, z = waveguide_cylinder_coords(params, geometry.positions)
        dphi = phi[:, None] - phi[None, :]
        dz = np.abs(z[:, None] - z[None, :])
        v = waveguide_coupling(dphi, dz, params.gamma, params.beta)
        np.fill_diagonal(v, 0.0)
        g = waveguide_decay(dphi, dz, params.gamma, params.beta)
    else:
        raise TypeError(f"unknown platform params: {type(params).__name__}")
    if validate:
        scale = np.max(np.abs(v)) or 1.0
        asym = np.max(np.abs(v - v.T))
        if asym > 1e-12 * scale:
            raise GeometryError(f"exchange matrix asymmetry {asym:.3e} exceeds tolerance")
        gscale = np.max(np.abs(g))
        if gscale > 0.0:
            w = np.linalg.eigvalsh(0.5 * (g + g.T))
            if w[0] < -1e-10 * gscale:
                raise GeometryError(
                    f"decay matrix not positive semidefinite (min eig {w[0]:.3e})"
                )
    return CouplingMatrices(v=v, gamma=g)


# ---------------------------------------------------------------------------
# closed-form rate families (central-cell reduction)


@dataclass(frozen=True)
class NearestNeighborRates:
    """Closed-form nearest-neighbour rates of the Rydberg chain.

    ``intra`` quantities describe the in-cell pair A_q -> B_q, ``inter`` the
    between-cell pair B_q -> A_{q+1}.
    """

    j_intra: float
    j_inter: float
    r_intra: float
    r_inter: float
    cos_intra: float
    cos_inter: float


def rydberg_nn_rates(params: RydbergParams) -> NearestNeighborRates:
    """Nearest-neighbour exchange rates of the Rydberg chain in closed form."""
    a, b, h = params.a, params.b, params.h
    ct, st = np.cos(params.theta_m), np.sin(params.theta_m)
    r_intra = np.hypot(b, h)
    r_inter = np.hypot(a - b, h)
    cos_intra = (b * ct - h * st) / r_intra
    cos_inter = ((a - b) * ct + h * st) / r_inter
    return NearestNeighborRates(
        j_intra=float(rydberg_coupling(r_intra, cos_intra, params.c3)),
        j_inter=float(rydberg_coupling(r_inter, cos_inter, params.c3)),
        r_intra=float(r_intra),
        r_inter=float(r_inter),
        cos_intra=float(cos_intra),
        cos_inter=float(cos_inter),
    )


def pair_separation(params: PlatformParams, family: str, p: int) -> np.ndarray:
    """Ideal-lattice separation vector for a hopping family member.

    ``family`` is one of ``"intra"`` (A_q -> B_{q+p-1}), ``"inter"``
    (B_q -> A_{q+p}) or ``"same"`` (A_q -> A_{q+p}); ``p >= 1``.
    For the waveguide the returned vector is ``(rho*dphi, 0, dz)``: an
    arc-length/axial pair rather than a chord, matching how the rates depend
    on geometry.
    """
    a = params.a
    if isinstance(params, RydbergParams):
        if family == "intra":
            return np.array([(p - 1) * a + params.b, -params.h, 0.0])
        if family == "inter":
            return np.array([p * a - params.b, params.h, 0.0])
        return np.array([p * a, 0.0, 0.0])
    if isinstance(params, FreeSpaceParams):
        if family == "intra":
            return np.array([(p - 1) * a + params.b, 0.0, 0.0])
        if family == "inter":
            return np.array([p * a - params.b, 0.0, 0.0])
        return np.array([p * a, 0.0, 0.0])
    if isinstance(params, WaveguideParams):
        if family == "intra":
            return np.array([params.rho * ((p - 1) * params.phi1 + params.phi1p), 0.0, (p - 1) * a + params.b])
        if family == "inter":
            return np.array([params.rho * (p * params.phi1 - params.phi1p), 0.0, p * a - params.b])
        return np.array([params.rho * p * params.phi1, 0.0, p * a])
    raise TypeError(f"unknown platform params: {type(params).__name__}")


def hopping_families(
    params: PlatformParams, p_max: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form hopping-rate families ``(j_intra, j_inter, j_same)``.

    Entry ``p`` (1-based; index ``p-1``) of each array is the rate between
    emitters ``p`` cells apart in the respective family: in-cell/odd
    (A_q -> B_{q+p-1}), between-cell/odd (B_q -> A_{q+p}) and
    same-sublattice/even (A_q -> A_{q+p}).  Computed from the pair formulas
    on the ideal lattice; agrees with classifying an assembled matrix.
    """
    p = np.arange(1, p_max + 1, dtype=float)
    a = params.a
    if isinstance(params, (RydbergParams, FreeSpaceParams)):
        d_intra = (p - 1.0) * a + params.b
        d_inter = p * a - params.b
        d_same = p * a
        if isinstance(params, RydbergParams):
            ct, st = np.cos(params.theta_m), np.sin(params.theta_m)
            r_intra = np.hypot(d_intra, params.h)
            r_inter = np.hypot(d_inter, params.h)
            c_intra = (d_intra * ct - params.h * st) / r_intra
            c_inter = (d_inter * ct + params.h * st) / r_inter
            j_intra = rydberg_coupling(r_intra, c_intra, params.c3)
            j_inter = rydberg_coupling(r_inter, c_inter, params.c3)
            j_same = rydberg_coupling(d_same, ct, params.c3)
        else:
            c = np.cos(params.theta_d)
            j_intra = free_space_coupling(d_intra, c, params.gamma, params.k0)
            j_inter = free_space_coupling(d_inter, c, params.gamma, params.k0)
            j_same = free_space_coupling(d_same, c, params.gamma, params.k0)
        return j_intra, j_inter, j_same
    if isinstance(params, WaveguideParams):
        phi_intra = (p - 1.0) * params.phi1 + params.phi1p
        phi_inter = p * params.phi1 - params.phi1p
        phi_same = p * params.phi1
        z_intra = (p - 1.0) * a + params.b
        z_inter = p * a - params.b
        z_same = p * a
        j_intra = waveguide_coupling(phi_intra, z_intra, params.gamma, params.beta)
        j_inter = waveguide_coupling(phi_inter, z_inter, params.gamma, params.beta)
        j_same = waveguide_coupling(phi_same, z_same, params.gamma, params.beta)
        return j_intra, j_inter, j_same
    raise TypeError(f"unknown platform params: {type(params).__name__}")


def helix_bloch_coefficients(params: PlatformParams) -> tuple[float, float] | None:
    """Resummation coefficients ``(c, s)`` of the half-wavelength helix.

    On the commensurate waveguide helix (``beta a = pi``, ``b = a/2``,
    ``phi1 = pi/2``) the guided-mode couplings do not decay with distance, so
    the one-sided Bloch sums are non-convergent: sharp range truncation
    leaves O(gamma) oscillatory remainders at generic momenta.  Both odd
    families are then 4-periodic in the range index and resum geometrically
    to the closed form

        n(k) = (c e^{i k a} + s) / cos(k a),
        c = (gamma/2) cos(phi1p),  s = (gamma/2) sin(phi1p),

    which the sharp partial sums reproduce exactly at k = 0 and k = pi/a
    whenever the range cutoff is ``1 (mod 4)``, and which diverges at the
    light lines ``k a = +/- pi/2``.  Same-sublattice rates vanish
    identically there, so ``n0 = 0``.

    Returns None for any other platform or waveguide geometry (those Bloch
    sums converge by truncation or are not resummable in closed form).
    """
    if not isinstance(params, WaveguideParams):
        return None
    tol = 1e-12
    on_helix = (
        abs(params.beta * params.a - np.pi) <= tol * np.pi
        and abs(params.b - 0.5 * params.a) <= tol * params.a
        and abs(params.phi1 - 0.5 * np.pi) <= tol * np.pi
    )
    if not on_helix:
        return None
    return (
        0.5 * params.gamma * float(np.cos(params.phi1p)),
        0.5 * params.gamma * float(np.sin(params.phi1p)),
    )


# ---------------------------------------------------------------------------
# helpers for dark same-sublattice configurations and light lines


def dipole_angle_for_dark_sublattice(a: float, k0: float) -> float:
    """Dipole angle that makes the same-sublattice NN exchange vanish.

    For a collinear free-space chain with spacing ``a``, solves
    ``free_space_coupling(a, cos(theta), ...) = 0`` in closed form; raises
    GeometryError when no real angle exists at this spacing.
    """
    x = k0 * a
    near = np.cos(x) / x**3 + np.sin(x) / x**2
    far = np.cos(x) / x
    denom = 3.0 * near - far
    if denom == 0.0:
        raise GeometryError("same-sublattice coupling cannot be zeroed at this spacing")
    c2 = (near - far) / denom
    if not 0.0 <= c2 <= 1.0:
        raise GeometryError(
            f"no real dipole angle zeroes the same-sublattice coupling (cos^2 = {c2:.4f})"
        )
    return float(np.arccos(np.sqrt(c2)))


def spacing_for_dark_sublattice(
    theta_d: float, k0: float, bracket: tuple[float, float]
) -> float:
    """Spacing ``a`` in ``bracket`` that zeroes the same-sublattice NN exchange."""
    from scipy.optimize import brentq

    c = np.cos(theta_d)

    def f(a):
        return float(free_space_coupling(a, c, 1.0, k0))

    lo, hi = bracket
    if f(lo) * f(hi) > 0:
        raise GeometryError("bracket does not straddle a zero of the coupling")
    return float(brentq(f, lo, hi, xtol=1e-14))


def fold_to_zone(k: float, a: float) -> float:
    """Fold a momentum into the first Brillouin zone [-pi/a, pi/a)."""
    g = 2.0 * np.pi / a
    return float((k + g / 2.0) % g - g / 2.0)


def light_line_momenta(params: PlatformParams) -> tuple[float, ...]:
    """|k| positions (in 1/length) of light-line singularities in the zone.

    Free space: the photon momentum ``k0`` folded into the zone.  Waveguide:
    the guided-mode momentum combined with the helix twist, ``beta -/+
    phi1/a``, folded.  Rydberg chains have no retardation and no light lines.
    """
    if isinstance(params, RydbergParams):
        return ()
    if isinstance(params, FreeSpaceParams):
        return (abs(fold_to_zone(params.k0, params.a)),)
    if isinstance(params, WaveguideParams):
        ks = {
            abs(fold_to_zone(params.beta - params.phi1 / params.a, params.a)),
            abs(fold_to_zone(params.beta + params.phi1 / params.a, params.a)),
        }
        return tuple(sorted(ks))
    raise TypeError(f"unknown platform params: {type(params).__name__}")
