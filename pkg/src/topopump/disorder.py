"""Positional disorder: noise propagation into rates and pumping robustness.

Quenched Gaussian offsets of the emitter positions turn every hopping rate
into a random variable.  This module propagates the offsets three ways:

1. Linearized, pair by pair: ``sigma_distance`` projects the per-axis noise
   onto a separation, ``sigma_hopping`` differentiates one rate along its
   scalar pair coordinate, and ``pair_sigma`` keeps every Cartesian
   derivative (distance and orientation changes alike), which matters
   whenever a rate sits at a stationary point of the scalar route, as the
   half-pitch helix does for axial noise.
2. Into the path imbalance: ``sigma_delta_jbar`` combines component noise
   stds into the std of the alternating hopping sum with half-weighted
   cross terms; ``mc_delta_jbar_std`` Monte-Carlo samples the same sum with
   the exact shared-endpoint correlations and is the reference the
   half-weight shorthand is judged against.
3. Into dynamics: ``monte_carlo_fidelity`` evolves wave packets on chains
   with frozen per-realization offsets and reports the fidelity of the
   realization-averaged final state against the clean run.

All random numbers come from counter-based Philox streams keyed by the
spec seed plus a stream tag, so reports are bit-identical for a given
(seed, n_samples, config) no matter how samples are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cycles import PlatformCycle
from .dynamics import StateVector, WavePacketSpec, build_wavepacket, evolve
from .errors import GeometryError
from .platforms import (
    ChainGeometry,
    FreeSpaceParams,
    PlatformParams,
    RydbergParams,
    WaveguideParams,
    build_chain,
    build_coupling_matrices,
    free_space_coupling,
    hopping_families,
    pair_separation,
    rydberg_coupling,
    waveguide_coupling,
)
from .ricemele import build_hamiltonian

_MASK64 = (1 << 64) - 1
# key[1] tags: samples use (sample << 16) | retry, well below 2^63; the
# high bit marks auxiliary streams so they can never collide with samples.
_STREAM_ORACLE = (1 << 63) | 1
_STREAM_BOOTSTRAP = (1 << 63) | 2


def _keyed_rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# disorder specification and report


@dataclass(frozen=True)
class DisorderSpec:
    """Quenched positional-noise model: per-axis stds, sample count, seed.

    Offsets are independent Gaussians per emitter and Cartesian axis with
    standard deviations ``sigma_r`` (length units), frozen for a whole
    cycle within each realization.
    """

    sigma_r: np.ndarray
    n_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma_r, dtype=float))
        if sigma.shape == (1,):
            sigma = np.repeat(sigma, 3)
        if sigma.shape != (3,):
            raise ValueError(f"sigma_r must be a 3-vector, got shape {sigma.shape}")
        if np.any(sigma < 0.0):
            raise ValueError("sigma_r components must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        object.__setattr__(self, "sigma_r", sigma)
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    def scaled(self, factor: float) -> "DisorderSpec":
        return replace(self, sigma_r=self.sigma_r * float(factor))


@dataclass(frozen=True)
class DisorderReport:
    """Noise profile, cycle integrals and Monte-Carlo fidelity of one run.

    ``sigma_delta_jbar`` is the linearized (half-weighted cross term)
    profile, ``sigma_delta_jbar_mc`` its Monte-Carlo reference on the same
    component truncation.  ``fidelity_mean`` overlaps the
    realization-averaged final state with the clean one; the mean of the
    per-realization fidelities is reported alongside, and both carry
    bootstrap standard errors.
    """

    times: np.ndarray
    delta_jbar: np.ndarray
    sigma_delta_jbar: np.ndarray
    sigma_delta_jbar_mc: np.ndarray
    delta_j_int: float
    sigma_int: float
    sigma_int_mc: float
    fidelity_mean: float
    fidelity_stderr: float
    fidelity_perreal_mean: float
    fidelity_perreal_stderr: float
    overlaps: np.ndarray
    resample_count: int
    spec: DisorderSpec

    @property
    def sigma_ratio(self) -> float:
        """Integrated path-disorder ratio, Monte-Carlo route."""
        return self.sigma_int_mc / abs(self.delta_j_int)

    @property
    def sigma_ratio_analytic(self) -> float:
        return self.sigma_int / abs(self.delta_j_int)


# ---------------------------------------------------------------------------
# linearized noise propagation, pair level


def sigma_distance(r_ij, sigma_r) -> float:
    """Linearized std of a pair distance under endpoint position noise.

    Both endpoints fluctuate independently, so the variances of the
    longitudinal projections add:
    ``sigma(r_ij)^2 = 2 sum_a (rhat_a sigma_a)^2``.  Isotropic noise gives
    ``sqrt(2) sigma`` for any separation direction; the Monte-Carlo std of
    ``|r_j + xi_j - r_i - xi_i|`` converges to this as the noise shrinks.
    """
    d = np.asarray(r_ij, dtype=float).reshape(3)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise GeometryError("zero separation has no distance-noise linearization")
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    return float(np.sqrt(2.0 * np.sum(np.square(d / r) * np.square(sigma))))


def _richardson(f, x0: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Central difference of ``f`` at ``x0``, Richardson-extrapolated (h, h/2)."""
    d1 = (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    d2 = (f(x0 + 0.5 * h) - f(x0 - 0.5 * h)) / h
    return (4.0 * d2 - d1) / 3.0


def _dipole(params: PlatformParams) -> np.ndarray:
    angle = params.theta_m if isinstance(params, RydbergParams) else params.theta_d
    return np.array([np.cos(angle), np.sin(angle), 0.0])


def _rate_from_separation(params: PlatformParams, d: np.ndarray) -> np.ndarray:
    """Exchange rate of a lattice-platform pair from its separation vector."""
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    cos_t = (d @ _dipole(params)) / r
    if isinstance(params, RydbergParams):
        return rydberg_coupling(r, cos_t, params.c3)
    return free_space_coupling(r, cos_t, params.gamma, params.k0)


def _family_separations(params: PlatformParams, family: str, p_arr) -> np.ndarray:
    return np.array([pair_separation(params, family, int(p)) for p in p_arr])


def _family_cylinder(params: WaveguideParams, family: str, p_arr):
    """Ideal (phi, z) cylinder coordinates of a family's two emitters."""
    p = np.asarray(p_arr, dtype=float)
    zeros = np.zeros_like(p)
    if family == "intra":
        return (zeros, zeros,
                (p - 1.0) * params.phi1 + params.phi1p, (p - 1.0) * params.a + params.b)
    if family == "inter":
        return (np.full_like(p, params.phi1p), np.full_like(p, params.b),
                p * params.phi1, p * params.a)
    if family == "same":
        return (zeros, zeros, p * params.phi1, p * params.a)
    raise ValueError(f"unknown hopping family: {family!r}")


def sigma_hopping(params: PlatformParams, family: str, p: int, sigma_rij: float) -> float:
    """Rate noise from distance noise alone: ``|dJ/dr| sigma_rij``.

    The derivative is along the scalar pair coordinate the rate varies
    with, by Richardson-extrapolated central differences with step
    ``1e-6 r``: the radial separation at fixed orientation for the lattice
    platforms, the axial separation at fixed winding angle for the
    waveguide.  A power-law rate gives ``3|J|/r sigma`` exactly; the
    half-pitch helix gives 0 for every odd hop, since ``sin(beta z)`` is
    stationary at ``beta z = (p - 1/2) pi`` (transverse noise still acts
    through the angle; see ``pair_sigma``).
    """
    if isinstance(params, WaveguideParams):
        (phi_i, z_i, phi_j, z_j) = _family_cylinder(params, family, [p])
        dphi = float(phi_j[0] - phi_i[0])
        dz = float(z_j[0] - z_i[0])
        h = np.array([1e-6 * max(abs(dz), params.a)])
        g = _richardson(
            lambda z: waveguide_coupling(dphi, np.abs(z), params.gamma, params.beta),
            np.array([dz]), h,
        )[0]
        return abs(float(g)) * float(sigma_rij)
    d0 = pair_separation(params, family, p)
    r0 = float(np.linalg.norm(d0))
    u = d0 / r0
    g = _richardson(
        lambda s: _rate_from_separation(params, u * s[..., None]),
        np.array([r0]), np.array([1e-6 * r0]),
    )[0]
    return abs(float(g)) * float(sigma_rij)


def _lattice_family_sigma(params, family, p_arr, sigma_r) -> np.ndarray:
    d0 = _family_separations(params, family, p_arr)
    r0 = np.linalg.norm(d0, axis=-1)
    h = 1e-6 * r0
    var = np.zeros_like(r0)
    for axis in range(3):
        s = sigma_r[axis]
        if s == 0.0:
            continue
        e = np.zeros(3)
        e[axis] = 1.0
        g = _richardson(
            lambda step: _rate_from_separation(params, d0 + step[:, None] * e),
            np.zeros_like(r0), h,
        )
        var += 2.0 * np.square(g) * s**2
    return np.sqrt(var)


def _waveguide_family_sigma(params, family, p_arr, sigma_r) -> np.ndarray:
    phi_i, z_i, phi_j, z_j = _family_cylinder(params, family, p_arr)
    dphi0 = phi_j - phi_i
    dz0 = z_j - z_i
    g_z = _richardson(
        lambda z: waveguide_coupling(dphi0, np.abs(z), params.gamma, params.beta),
        dz0, 1e-6 * np.maximum(np.abs(dz0), params.a),
    )
    g_phi = _richardson(
        lambda phi: waveguide_coupling(phi, dz0, params.gamma, params.beta),
        dphi0, 1e-6 * np.maximum(np.abs(dphi0), 1.0),
    )
    # A transverse offset xi rotates an emitter by (cos(phi) xi_y
    # - sin(phi) xi_x) / rho; radial offsets leave (phi, z) rates unchanged.
    sx2, sy2, sz2 = np.square(sigma_r)
    var_phi = (
        np.square(np.sin(phi_i)) * sx2 + np.square(np.cos(phi_i)) * sy2
        + np.square(np.sin(phi_j)) * sx2 + np.square(np.cos(phi_j)) * sy2
    ) / params.rho**2
    return np.sqrt(np.square(g_phi) * var_phi + np.square(g_z) * 2.0 * sz2)


def pair_sigma(params: PlatformParams, family: str, p: int, sigma_r) -> float:
    """Full linearized std of one hopping rate under per-emitter noise.

    Every Cartesian noise axis is propagated through the pair rate formula
    by central differences, so orientation changes count along with
    distance changes and both endpoints contribute independently.  For the
    waveguide the propagation runs through the cylinder coordinates: axial
    noise differentiates ``sin(beta z)``, transverse noise rotates each
    emitter by ``delta_t / rho``, and radial noise is inert.
    """
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    if isinstance(params, WaveguideParams):
        return float(_waveguide_family_sigma(params, family, [p], sigma)[0])
    return float(_lattice_family_sigma(params, family, [p], sigma)[0])


# ---------------------------------------------------------------------------
# path-imbalance noise


def extended_hopping_vector(params: PlatformParams, p_max: int) -> np.ndarray:
    """Signed alternating odd-hop components; their plain sum is delta J bar.

    Entry ``2p-2`` holds ``(-1)^(p+1) J'_{2p-1}`` (in-cell), entry ``2p-1``
    holds ``(-1)^p J_{2p-1}`` (between-cell), ``p = 1 .. p_max``.
    """
    j_intra, j_inter, _ = hopping_families(params, p_max)
    sign = (-1.0) ** np.arange(p_max)  # +,-,+,... for p = 1,2,3,...
    out = np.empty(2 * p_max)
    out[0::2] = sign * j_intra
    out[1::2] = -sign * j_inter
    return out


def hopping_noise_components(params: PlatformParams, sigma_r, p_max: int) -> np.ndarray:
    """Linearized stds of the extended-hopping components (length 2 p_max).

    Same layout as ``extended_hopping_vector``; the alternating signs have
    unit magnitude, so component stds are unaffected by them.
    """
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    p_arr = np.arange(1, p_max + 1)
    if isinstance(params, WaveguideParams):
        s_intra = _waveguide_family_sigma(params, "intra", p_arr, sigma)
        s_inter = _waveguide_family_sigma(params, "inter", p_arr, sigma)
    else:
        s_intra = _lattice_family_sigma(params, "intra", p_arr, sigma)
        s_inter = _lattice_family_sigma(params, "inter", p_arr, sigma)
    out = np.empty(2 * p_max)
    out[0::2] = s_intra
    out[1::2] = s_inter
    return out


def sigma_delta_jbar(sigma_components) -> float:
    """Std of the path imbalance from component stds, half-weighted crosses.

    ``sqrt(s.s + (1/2) sum_{p != q} s_p s_q)``: every distinct component
    pair contributes half the product of its stds, a shorthand for hops
    sharing one of their two endpoints.  Exact for two nearest-neighbour
    components whose rate derivatives share a sign; longer chains pick up
    signed correlations it cannot represent, so ``mc_delta_jbar_std`` is
    the reference wherever the two disagree.
    """
    s = np.asarray(sigma_components, dtype=float)
    if s.ndim != 1:
        raise ValueError("sigma_components must be one-dimensional")
    if np.any(s < 0.0):
        raise ValueError("component stds must be >= 0")
    total = float(np.sum(s))
    return float(np.sqrt(0.5 * float(s @ s) + 0.5 * total * total))


def linearized_delta_jbar_std(params: PlatformParams, sigma_r, p_max: int) -> float:
    """Exact linearized std of the path imbalance, signed covariances kept.

    Propagates per-emitter noise through every component of the alternating
    sum at once: the weight of emitter ``e`` along axis ``alpha`` is the
    signed sum of the rate gradients of all hops it enters, so correlations
    between hops sharing an endpoint carry their true signs.  This is the
    value the half-weighted shorthand of ``sigma_delta_jbar``
    approximates; ``mc_delta_jbar_std`` converges to it as the noise
    shrinks.  For the waveguide the propagation runs through each
    emitter's winding angle and axial coordinate, as in ``pair_sigma``.
    """
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    n_sites = 2 * (p_max + 1)
    i_idx, j_idx, sign = _component_pair_indices(p_max)
    pos = build_chain(params, n_sites).positions
    weights = np.zeros((n_sites, 3))
    if isinstance(params, WaveguideParams):
        phi = np.arctan2(pos[:, 1], pos[:, 0])
        z = pos[:, 2]
        dphi0 = phi[j_idx] - phi[i_idx]
        dz0 = z[j_idx] - z[i_idx]  # positive for every reference-cell hop
        g_phi = _richardson(
            lambda p: waveguide_coupling(p, dz0, params.gamma, params.beta),
            dphi0, 1e-6 * np.maximum(np.abs(dphi0), 1.0),
        )
        g_z = _richardson(
            lambda zz: waveguide_coupling(dphi0, np.abs(zz), params.gamma, params.beta),
            dz0, 1e-6 * np.maximum(np.abs(dz0), params.a),
        )
        w_phi = np.zeros(n_sites)
        w_z = np.zeros(n_sites)
        np.add.at(w_phi, j_idx, sign * g_phi)
        np.add.at(w_phi, i_idx, -sign * g_phi)
        np.add.at(w_z, j_idx, sign * g_z)
        np.add.at(w_z, i_idx, -sign * g_z)
        weights[:, 0] = -np.sin(phi) / params.rho * w_phi
        weights[:, 1] = np.cos(phi) / params.rho * w_phi
        weights[:, 2] = w_z
    else:
        d0 = pos[j_idx] - pos[i_idx]
        r0 = np.linalg.norm(d0, axis=-1)
        h = 1e-6 * r0
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = 1.0
            g = _richardson(
                lambda step: _rate_from_separation(params, d0 + step[:, None] * e),
                np.zeros_like(r0), h,
            )
            np.add.at(weights[:, axis], j_idx, sign * g)
            np.add.at(weights[:, axis], i_idx, -sign * g)
    return float(np.sqrt(np.sum(np.square(weights) @ np.square(sigma))))


def _component_pair_indices(p_max: int):
    """Site indices (reference cell) and signs of the extended components."""
    p = np.arange(1, p_max + 1)
    i_idx = np.empty(2 * p_max, dtype=int)
    j_idx = np.empty(2 * p_max, dtype=int)
    i_idx[0::2] = 0                  # A_0 -> B_{p-1}
    j_idx[0::2] = 2 * (p - 1) + 1
    i_idx[1::2] = 1                  # B_0 -> A_p
    j_idx[1::2] = 2 * p
    sign = np.empty(2 * p_max)
    sign[0::2] = (-1.0) ** (p + 1)
    sign[1::2] = (-1.0) ** p
    return i_idx, j_idx, sign


def _delta_jbar_samples(params, positions, i_idx, j_idx, sign) -> np.ndarray:
    """Alternating hopping sums for a batch of position realizations."""
    if isinstance(params, WaveguideParams):
        phi = np.arctan2(positions[..., 1], positions[..., 0])
        z = positions[..., 2]
        dphi = phi[..., j_idx] - phi[..., i_idx]
        dz = np.abs(z[..., j_idx] - z[..., i_idx])
        rates = waveguide_coupling(dphi, dz, params.gamma, params.beta)
    else:
        d = positions[..., j_idx, :] - positions[..., i_idx, :]
        rates = _rate_from_separation(params, d)
    return rates @ sign


def mc_delta_jbar_std(
    params: PlatformParams,
    sigma_r,
    p_max: int,
    n_samples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo std of the path imbalance at a reference cell.

    Displaces every emitter entering the first-cell odd hops (so components
    sharing an endpoint stay correlated, with their true signs) and
    recomputes the rates nonlinearly.  Returns ``(std, mean_shift)`` where
    ``mean_shift`` is the sample mean minus the clean value, a quadratic
    bias that should vanish faster than the std as the noise shrinks.
    """
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    n_sites = 2 * (p_max + 1)
    pos = build_chain(params, n_sites).positions
    i_idx, j_idx, sign = _component_pair_indices(p_max)
    rng = _keyed_rng(seed, _STREAM_ORACLE)
    offsets = rng.standard_normal((n_samples, n_sites, 3)) * sigma
    values = _delta_jbar_samples(params, pos[None] + offsets, i_idx, j_idx, sign)
    clean = float(_delta_jbar_samples(params, pos, i_idx, j_idx, sign))
    ddof = 1 if n_samples > 1 else 0
    return float(np.std(values, ddof=ddof)), float(np.mean(values) - clean)


# ---------------------------------------------------------------------------
# cycle profiles and integrals


def delta_jbar_noise_profile(
    cycle: PlatformCycle,
    sigma_r,
    n_t: int = 64,
    p_max: int | None = None,
    mc_samples: int = 0,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Clean path imbalance and its noise std over one cycle.

    Returns arrays over ``n_t`` equally spaced times spanning the closed
    cycle: ``delta_jbar``, the linearized ``sigma``, and (when
    ``mc_samples > 0``) the Monte-Carlo reference ``sigma_mc``.  The same
    component truncation ``p_max`` (the cycle's Bloch cutoff by default)
    feeds all three, so they stay comparable.
    """
    if not isinstance(cycle, PlatformCycle):
        raise TypeError("positional disorder requires a platform cycle with geometry")
    if n_t < 64:
        raise ValueError(f"n_t must be >= 64, got {n_t}")
    p_cut = cycle.p_max if p_max is None else int(p_max)
    sigma = np.asarray(sigma_r, dtype=float).reshape(3)
    times = np.linspace(0.0, cycle.period, n_t)
    delta_jbar = np.empty(n_t)
    sig = np.empty(n_t)
    sig_mc = np.empty(n_t) if mc_samples > 0 else None
    for i, t in enumerate(times):
        params_t = cycle.params_at(float(t))
        delta_jbar[i] = float(np.sum(extended_hopping_vector(params_t, p_cut)))
        sig[i] = sigma_delta_jbar(hopping_noise_components(params_t, sigma, p_cut))
        if sig_mc is not None:
            sig_mc[i] = mc_delta_jbar_std(params_t, sigma, p_cut, mc_samples, seed)[0]
    out = {"times": times, "delta_jbar": delta_jbar, "sigma": sig}
    if sig_mc is not None:
        out["sigma_mc"] = sig_mc
    return out


def time_integrated_disorder(
    cycle: PlatformCycle,
    disorder: DisorderSpec,
    n_t: int = 64,
    p_max: int | None = None,
) -> tuple[float, float]:
    """Cycle integrals of the path imbalance and of its noise std.

    Trapezoidal quadrature of ``delta_jbar(t)`` (signed; opposite-phase
    arcs may cancel) and of the linearized ``sigma[delta_jbar](t)``
    (nonnegative) over one period.
    """
    profile = delta_jbar_noise_profile(cycle, disorder.sigma_r, n_t, p_max)
    t = profile["times"]
    return (
        float(np.trapz(profile["delta_jbar"], t)),
        float(np.trapz(profile["sigma"], t)),
    )


def find_sigma_for_relative_disorder(
    cycle: PlatformCycle,
    ratio: float,
    direction=(1.0, 1.0, 1.0),
    n_t: int = 64,
    p_max: int | None = None,
    mc_samples: int = 2000,
    seed: int = 0,
    probe: float = 1e-3,
) -> np.ndarray:
    """Per-axis noise stds hitting a target integrated path-disorder ratio.

    Solves ``sigma(script J) / |delta script J| = ratio`` for the overall
    scale of ``direction``, using the Monte-Carlo integrand as the
    reference.  The std is linear in the scale in the linearized regime, so
    a probe evaluation at ``probe * a`` fixes the answer; one fixed-point
    refinement at the solution absorbs mild nonlinearity.
    """
    dirn = np.asarray(direction, dtype=float).reshape(3)
    if np.any(dirn < 0.0) or not np.any(dirn > 0.0):
        raise ValueError("direction must be nonnegative with a positive component")
    if ratio <= 0.0:
        raise ValueError("ratio must be positive")

    def ratio_at(scale: float) -> float:
        profile = delta_jbar_noise_profile(
            cycle, scale * dirn, n_t, p_max, mc_samples=mc_samples, seed=seed
        )
        t = profile["times"]
        dj_int = float(np.trapz(profile["delta_jbar"], t))
        sig_int = float(np.trapz(profile["sigma_mc"], t))
        if sig_int == 0.0:
            raise ValueError("disorder direction produces no path noise")
        if dj_int == 0.0:
            raise ValueError("cycle has zero integrated path imbalance")
        return sig_int / abs(dj_int)

    scale = probe * cycle.cell_length
    for _ in range(2):
        scale *= ratio / ratio_at(scale)
    return scale * dirn


# ---------------------------------------------------------------------------
# disordered chains and Monte-Carlo fidelity


def disorder_offsets(
    spec: DisorderSpec, n_sites: int, sample: int, retry: int = 0
) -> np.ndarray:
    """Frozen per-emitter offsets of one realization, shape ``(n_sites, 3)``.

    Drawn from a Philox stream keyed by ``(seed, sample, retry)``; each
    (emitter, axis) value sits at a fixed position in that stream, so draws
    are identical no matter in which order samples are evaluated.
    """
    if not 0 <= retry < (1 << 16):
        raise ValueError("retry out of range")
    rng = _keyed_rng(spec.seed, (sample << 16) | retry)
    return rng.standard_normal((n_sites, 3)) * spec.sigma_r


@dataclass(frozen=True)
class DisorderedCycle:
    """Platform pump cycle with frozen positional offsets on every emitter.

    Rate matrices are assembled from the displaced positions at each time,
    keeping every coupling range and the offset-induced breaking of
    translation symmetry.  The offsets are quenched: the same displacement
    rides on the moving ideal positions for the whole evolution.  Bloch
    quantities (``hopping_set``, light lines, gap monitoring) delegate to
    the clean cycle, since they are only defined for the ideal lattice.
    """

    base: PlatformCycle
    offsets: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        if off.ndim != 2 or off.shape[1] != 3:
            raise ValueError(f"offsets must have shape (n_sites, 3), got {off.shape}")
        if off.shape[0] < 4 or off.shape[0] % 2:
            raise ValueError("offsets must cover an even chain of >= 4 sites")
        object.__setattr__(self, "offsets", off)

    @property
    def n_sites(self) -> int:
        return self.offsets.shape[0]

    @property
    def period(self) -> float:
        return self.base.period

    @property
    def cell_length(self) -> float:
        return self.base.cell_length

    @property
    def p_max(self) -> int:
        return self.base.p_max

    @property
    def dissipative(self) -> bool:
        return self.base.dissipative

    def theta(self, t):
        return self.base.theta(t)

    def delta(self, t):
        return self.base.delta(t)

    def control_value(self, t):
        return self.base.control_value(t)

    def hopping_set(self, t, p_max=None):
        return self.base.hopping_set(t, p_max)

    def full_p_max(self, n_sites: int) -> int:
        return self.base.full_p_max(n_sites)

    def light_lines(self):
        return self.base.light_lines()

    def reversed(self) -> "DisorderedCycle":
        return DisorderedCycle(base=self.base.reversed(), offsets=self.offsets)

    def displaced_geometry(self, t: float) -> ChainGeometry:
        geom = self.base.geometry_at(t, self.n_sites)
        return ChainGeometry(
            positions=geom.positions + self.offsets,
            sublattice=geom.sublattice,
            cell_length=geom.cell_length,
            n_cells=geom.n_cells,
        )

    def _check_sites(self, n_sites: int) -> None:
        if n_sites != self.n_sites:
            raise ValueError(
                f"offsets cover {self.n_sites} sites, requested {n_sites}"
            )

    def hamiltonian(self, t: float, n_sites: int) -> np.ndarray:
        self._check_sites(n_sites)
        mats = build_coupling_matrices(
            self.base.params_at(t), self.displaced_geometry(t), validate=False
        )
        return build_hamiltonian(mats.v, delta=float(self.base.delta(t)))

    def gamma_matrix(self, t: float, n_sites: int) -> np.ndarray | None:
        if not self.dissipative:
            return None
        self._check_sites(n_sites)
        mats = build_coupling_matrices(
            self.base.params_at(t), self.displaced_geometry(t), validate=False
        )
        return mats.gamma


_COINCIDENCE_PROBES = (0.0, 0.25, 0.5, 0.75)


def _sample_cycle(
    cycle: PlatformCycle, spec: DisorderSpec, n_sites: int, sample: int
) -> tuple[DisorderedCycle, int]:
    """Disordered cycle for one sample, resampling coincident geometries."""
    for retry in range(64):
        dc = DisorderedCycle(base=cycle, offsets=disorder_offsets(spec, n_sites, sample, retry))
        try:
            for frac in _COINCIDENCE_PROBES:
                dc.displaced_geometry(frac * cycle.period).validate()
        except GeometryError:
            continue
        return dc, retry
    raise GeometryError(
        f"sample {sample}: coincident emitters persisted through 64 redraws; "
        "sigma_r is too large for the lattice spacing"
    )


def _sample_overlap(args) -> tuple[complex, int]:
    cycle, spec, n_sites, sample, psi0, clean, steps, dissipative = args
    dc, retries = _sample_cycle(cycle, spec, n_sites, sample)
    traj = evolve(
        StateVector(amplitudes=psi0.copy(), time=0.0),
        dc, 1, steps, dissipative, monitor_gap=False,
    )
    psi = traj.final_state.amplitudes
    denom = np.linalg.norm(clean) * np.linalg.norm(psi)
    return complex(np.vdot(clean, psi) / denom), retries


def _worker_count() -> int:
    env = os.environ.get("TOPOPUMP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def monte_carlo_fidelity(
    cycle: PlatformCycle,
    packet: WavePacketSpec,
    disorder: DisorderSpec,
    n_sites: int,
    steps_per_cycle: int = 128,
    edge_tol: float = 1e-4,
    dissipative: bool = False,
    n_t: int = 64,
    p_max: int | None = None,
    oracle_samples: int = 2000,
    bootstrap_samples: int = 500,
) -> DisorderReport:
    """Monte-Carlo pumping fidelity under quenched positional disorder.

    Evolves the packet for one cycle on ``n_samples`` chains with frozen
    offsets, averages the final states coherently and overlaps the average
    with the clean final state (states normalized, so the loss of coherence
    between realizations is what the fidelity measures); the mean of the
    per-realization fidelities is reported alongside.  Standard errors come
    from a seeded bootstrap over realizations.  The noise profile and its
    cycle integrals ride along in the report, with the Monte-Carlo
    reference next to the linearized estimate.

    Sample evolutions run in parallel processes when ``TOPOPUMP_THREADS``
    (or the machine) allows; per-sample keyed random streams and
    fixed-order reduction keep the report bit-identical either way.
    """
    profile = delta_jbar_noise_profile(
        cycle, disorder.sigma_r, n_t, p_max,
        mc_samples=oracle_samples, seed=disorder.seed,
    )
    t = profile["times"]
    delta_j_int = float(np.trapz(profile["delta_jbar"], t))
    sigma_int = float(np.trapz(profile["sigma"], t))
    sigma_int_mc = float(np.trapz(profile["sigma_mc"], t))

    psi0 = build_wavepacket(cycle, packet, n_sites, edge_tol=edge_tol)
    clean = evolve(
        psi0, cycle, 1, steps_per_cycle, dissipative, monitor_gap=False
    ).final_state.amplitudes

    jobs = [
        (cycle, disorder, n_sites, s, psi0.amplitudes, clean,
         steps_per_cycle, dissipative)
        for s in range(disorder.n_samples)
    ]
    workers = min(_worker_count(), disorder.n_samples)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sample_overlap, jobs, chunksize=8))
    else:
        results = [_sample_overlap(job) for job in jobs]
    overlaps = np.array([z for z, _ in results])
    resample_count = int(sum(r for _, r in results))

    fidelity_mean = float(np.abs(np.mean(overlaps)) ** 2)
    fidelity_perreal = np.abs(overlaps) ** 2
    rng = _keyed_rng(disorder.seed, _STREAM_BOOTSTRAP)
    idx = rng.integers(0, disorder.n_samples, size=(bootstrap_samples, disorder.n_samples))
    boot_avg = np.abs(np.mean(overlaps[idx], axis=1)) ** 2
    boot_perreal = np.mean(fidelity_perreal[idx], axis=1)
    return DisorderReport(
        times=t,
        delta_jbar=profile["delta_jbar"],
        sigma_delta_jbar=profile["sigma"],
        sigma_delta_jbar_mc=profile["sigma_mc"],
        delta_j_int=delta_j_int,
        sigma_int=sigma_int,
        sigma_int_mc=sigma_int_mc,
        fidelity_mean=fidelity_mean,
        fidelity_stderr=float(np.std(boot_avg, ddof=1)),
        fidelity_perreal_mean=float(np.mean(fidelity_perreal)),
        fidelity_perreal_stderr=float(np.std(boot_perreal, ddof=1)),
        overlaps=overlaps,
        resample_count=resample_count,
        spec=disorder,
    )
