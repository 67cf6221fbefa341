"""Collective decay channels of the emitter chain.

Diagonalizes assembled decay matrices into collective jump modes, maps
momentum-resolved decay rates over the Brillouin zone of the effective
single-sublattice chain, and extracts effective decay rates from dissipative
pump runs.

Momentum profiles come in two routes: a truncated lattice sum with an
explicit tail-convergence check (:func:`momentum_decay_profile`) and, for the
free-space kernel, a closed-form resummation of the infinite sum
(:func:`free_space_decay_resummed`).  The two agree away from the light
lines; the closed form is exact and is the preferred production route.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import PumpTrajectory, WavePacketSpec, gaussian_weights
from .errors import ConvergenceError
from .platforms import (
    FreeSpaceParams,
    PlatformParams,
    RydbergParams,
    WaveguideParams,
    free_space_decay,
    waveguide_decay,
)

__all__ = [
    "DecayModes",
    "decay_modes",
    "decay_families",
    "sublattice_decay_matrix",
    "momentum_decay_profile",
    "free_space_decay_resummed",
    "bloch_decay_matrix",
    "effective_decay_rate",
    "weighted_decay_prediction",
]


@dataclass(frozen=True)
class DecayModes:
    """Eigendecomposition of a collective decay matrix.

    Attributes
    ----------
    rates : ndarray, shape (n,)
        Decay rates of the collective jump modes, sorted descending.
    modes : ndarray, shape (n, n)
        Orthogonal matrix whose rows hold the site coefficients of the jump
        modes, aligned with ``rates``: mode ``m`` is the operator
        ``sum_j modes[m, j] sigma_j`` and decays at ``rates[m]``, so
        ``modes @ gamma_matrix @ modes.T`` is diagonal.
    """

    rates: np.ndarray
    modes: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.rates.shape[0]

    def superradiant_count(self, gamma: float) -> int:
        """Number of modes decaying faster than the single-emitter rate."""
        return int(np.sum(self.rates > gamma))

    def numerical_rank(self, scale: float, tol: float = 1e-10) -> int:
        """Number of rates above ``tol * scale``."""
        return int(np.sum(self.rates > tol * scale))


def decay_modes(gamma_matrix: np.ndarray, tol: float = 1e-10) -> DecayModes:
    """Diagonalize a collective decay matrix into jump modes.

    Parameters
    ----------
    gamma_matrix : ndarray, shape (n, n)
        Real symmetric decay matrix; entry ``(i, j)`` couples the emission
        of emitters ``i`` and ``j``.
    tol : float
        Symmetry tolerance relative to the largest entry.

    Returns
    -------
    DecayModes
        Full eigendecomposition; rates sorted descending with aligned mode
        rows.  The eigenvalue sum reproduces the matrix trace exactly up to
        rounding, so independent decay at rate ``gamma`` keeps
        ``sum(rates) == n * gamma``.

    Raises
    ------
    ValueError
        If the matrix is not square or not symmetric within tolerance.
    """
    g = np.asarray(gamma_matrix, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("decay matrix must be square")
    scale = float(np.max(np.abs(g))) or 1.0
    asym = float(np.max(np.abs(g - g.T)))
    if asym > tol * scale:
        raise ValueError(
            f"decay matrix asymmetry {asym:.3e} exceeds {tol:.1e} of the largest entry"
        )
    w, u = np.linalg.eigh(0.5 * (g + g.T))
    order = np.argsort(w)[::-1]
    return DecayModes(rates=w[order], modes=u[:, order].T)


# ---------------------------------------------------------------------------
# momentum-resolved profiles


def decay_families(
    params: PlatformParams, p_max: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form decay-rate families ``(g_intra, g_inter, g_same)``.

    Mirrors :func:`topopump.platforms.hopping_families` with the platform
    decay kernel in place of the exchange kernel: entry ``p`` (1-based) is
    the cross-decay rate between emitters ``p`` cells apart in the in-cell,
    between-cell and same-sublattice families.  Rydberg chains decay
    independently, so all three families vanish.
    """
    p = np.arange(1, p_max + 1, dtype=float)
    a = params.a
    if isinstance(params, RydbergParams):
        zero = np.zeros(p_max)
        return zero, zero.copy(), zero.copy()
    if isinstance(params, FreeSpaceParams):
        c = np.cos(params.theta_d)
        g_intra = free_space_decay((p - 1.0) * a + params.b, c, params.gamma, params.k0)
        g_inter = free_space_decay(p * a - params.b, c, params.gamma, params.k0)
        g_same = free_space_decay(p * a, c, params.gamma, params.k0)
        return g_intra, g_inter, g_same
    if isinstance(params, WaveguideParams):
        g_intra = waveguide_decay(
            (p - 1.0) * params.phi1 + params.phi1p,
            (p - 1.0) * a + params.b,
            params.gamma,
            params.beta,
        )
        g_inter = waveguide_decay(
            p * params.phi1 - params.phi1p,
            p * a - params.b,
            params.gamma,
            params.beta,
        )
        g_same = waveguide_decay(p * params.phi1, p * a, params.gamma, params.beta)
        return g_intra, g_inter, g_same
    raise TypeError(f"unknown platform params: {type(params).__name__}")


def sublattice_decay_matrix(
    params: PlatformParams, n_sites: int, spacing: float | None = None
) -> np.ndarray:
    """Decay matrix of the effective single-sublattice chain.

    Under the large staggered offset present through most of the pump cycle
    the two sublattices decouple dynamically, and each decays through the
    collective channels of a chain with the same-sublattice geometry alone
    (period ``spacing``, default ``params.a``; for the waveguide also the
    cell-to-cell twist ``phi1``).  This is the real-space counterpart of
    :func:`momentum_decay_profile`.

    On the default helix (``beta a = pi``, ``phi1 = pi/2``) the axial phase
    factors ``sin(beta z)`` vanish on every site of one sublattice, which
    collapses the generic four bright channels of the full two-sublattice
    chain (two per decoupled sublattice, with no cross-sublattice decay at
    ``b = a/2``) down to exactly two here, pinned at the light-line momenta
    ``k a = +-pi/2``.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be positive")
    s = params.a if spacing is None else float(spacing)
    d = np.arange(n_sites)
    dq = np.abs(d[:, None] - d[None, :])
    if isinstance(params, RydbergParams):
        return params.gamma * np.eye(n_sites)
    if isinstance(params, FreeSpaceParams):
        c = float(np.cos(params.theta_d))
        return np.asarray(free_space_decay(dq * s, c, params.gamma, params.k0))
    if isinstance(params, WaveguideParams):
        return np.asarray(
            waveguide_decay(dq * params.phi1, dq * s, params.gamma, params.beta)
        )
    raise TypeError(f"unknown platform params: {type(params).__name__}")


def _free_space_term_envelope(params: FreeSpaceParams, spacing: float) -> tuple[float, float, float]:
    c2 = float(np.cos(params.theta_d)) ** 2
    y = params.k0 * spacing
    a_far = 1.5 * params.gamma * (1.0 - c2) / y
    a_mid = 1.5 * params.gamma * abs(3.0 * c2 - 1.0) / y**2
    a_near = 1.5 * params.gamma * abs(3.0 * c2 - 1.0) / y**3
    return a_far, a_mid, a_near


def momentum_decay_profile(
    params: PlatformParams,
    k_grid: np.ndarray,
    spacing: float | None = None,
    max_range: int | None = None,
    tol: float = 1e-6,
    finite_range: int | None = None,
    chunk: int = 8192,
) -> np.ndarray:
    """Momentum-resolved decay rate of the single-sublattice chain.

    Evaluates ``Gamma(k) = sum_m Gamma(m * spacing) e^{i k m spacing}`` over
    the same-sublattice separations (the sublattices decouple dynamically
    under a large staggered offset, leaving an effective chain of period
    ``spacing``).  The sum is symmetric in ``m``, so the result is real:
    ``Gamma(k) = gamma + 2 sum_{m>=1} Gamma(m spacing) cos(k m spacing)``.

    Parameters
    ----------
    params : platform parameter set
        Rydberg chains decay independently and return ``gamma`` at every
        ``k``.  Free-space kernels are summed in chunks with a
        tail-convergence check.  Waveguide kernels do not decay with
        distance, so the infinite sum has no limit; pass ``finite_range``
        to get the truncated finite-chain diagnostic instead.
    k_grid : ndarray
        Momenta (1/length).  Light-line momenta make the free-space sum
        diverge logarithmically; grids that approach them need ranges
        growing like the inverse distance and eventually trip the
        convergence check.  Use :func:`free_space_decay_resummed` there.
    spacing : float, optional
        Same-sublattice period; defaults to ``params.a``.
    max_range : int, optional
        Largest ``m`` in the truncated sum.  Default: derived from the
        kernel envelope so the final term is below ``tol * gamma``.
    tol : float
        Tail tolerance: the largest contribution of the final summation
        chunk (over the grid) must stay below ``tol * max(gamma, max
        |Gamma(k)|)``.
    finite_range : int, optional
        Waveguide only: truncate at ``|m| < finite_range`` with no
        convergence check (finite-chain diagnostic).
    chunk : int
        Separations summed per vectorized block.

    Raises
    ------
    ConvergenceError
        If the final chunk still contributes more than the tolerance, with
        a suggested range in the message, or if a waveguide profile is
        requested without ``finite_range``.
    """
    k = np.asarray(k_grid, dtype=float)
    s = params.a if spacing is None else float(spacing)
    if s <= 0.0:
        raise ValueError("spacing must be positive")
    if isinstance(params, RydbergParams):
        return np.full(k.shape, params.gamma)
    if isinstance(params, WaveguideParams):
        if finite_range is None:
            raise ConvergenceError(
                "waveguide decay rates do not fall off with distance; the "
                "infinite lattice sum has no limit.  Pass finite_range (the "
                "number of same-sublattice sites) for the truncated "
                "finite-chain diagnostic."
            )
        m = np.arange(1, int(finite_range))
        g_m = waveguide_decay(m * params.phi1, m * s, params.gamma, params.beta)
        return params.gamma + 2.0 * (np.cos(np.outer(k * s, m)) @ g_m)
    if not isinstance(params, FreeSpaceParams):
        raise TypeError(f"unknown platform params: {type(params).__name__}")

    c = float(np.cos(params.theta_d))
    if max_range is None:
        a_far, a_mid, a_near = _free_space_term_envelope(params, s)
        target = tol * params.gamma
        max_range = int(min(2e6, max(1024, 2.0 * (a_far + a_mid + a_near) / target)))
    profile = np.full(k.shape, params.gamma)
    last_shell = 0.0
    for start in range(1, max_range + 1, chunk):
        m = np.arange(start, min(start + chunk, max_range + 1), dtype=float)
        g_m = free_space_decay(m * s, c, params.gamma, params.k0)
        increment = 2.0 * (np.cos(np.outer(k * s, m)) @ g_m)
        profile += increment
        last_shell = float(np.max(np.abs(increment)))
    scale = max(params.gamma, float(np.max(np.abs(profile))))
    if last_shell > tol * scale:
        suggested = int(max_range * min(1e3, last_shell / (tol * scale)))
        raise ConvergenceError(
            f"momentum profile tail not converged: final chunk contributes "
            f"{last_shell:.3e} > {tol:.1e} x {scale:.3e}; retry with "
            f"max_range ~ {suggested} or use free_space_decay_resummed"
        )
    return profile


def _sawtooth_sum(theta: np.ndarray) -> np.ndarray:
    """``sum_{m>=1} sin(m theta)/m`` via its closed form on [0, 2 pi)."""
    t = np.mod(theta, 2.0 * np.pi)
    out = 0.5 * (np.pi - t)
    return np.where(t == 0.0, 0.0, out)


def _bernoulli2_sum(theta: np.ndarray) -> np.ndarray:
    """``sum_{m>=1} cos(m theta)/m^2`` via its closed form on [0, 2 pi]."""
    t = np.mod(theta, 2.0 * np.pi)
    return np.pi**2 / 6.0 - 0.5 * np.pi * t + 0.25 * t**2


def _bernoulli3_sum(theta: np.ndarray) -> np.ndarray:
    """``sum_{m>=1} sin(m theta)/m^3`` via its closed form on [0, 2 pi]."""
    t = np.mod(theta, 2.0 * np.pi)
    return np.pi**2 * t / 6.0 - 0.25 * np.pi * t**2 + t**3 / 12.0


def free_space_decay_resummed(
    params: FreeSpaceParams,
    k_grid: np.ndarray,
    spacing: float | None = None,
) -> np.ndarray:
    """Exact infinite-chain momentum decay profile of the free-space kernel.

    Splitting ``cos(k m s)`` against the ``sin(k0 m s)/m^p`` terms of the
    kernel turns the lattice sum into Fourier series with polynomial closed
    forms, summed here exactly.  Outside the light cone (``|k| > k0``
    modulo reciprocal vectors) the resummed profile vanishes identically:
    evanescent collective modes radiate no power.  At the light lines the
    profile diverges logarithmically and this closed form is finite only
    because the divergence sits in the ``1/m`` series; values within a few
    grid cells of a light line are still physical but large.

    Parameters mirror :func:`momentum_decay_profile`; only the free-space
    platform has this resummation.
    """
    if not isinstance(params, FreeSpaceParams):
        raise TypeError("resummed profile applies to the free-space platform only")
    k = np.asarray(k_grid, dtype=float)
    s = params.a if spacing is None else float(spacing)
    y = params.k0 * s
    u = y + k * s
    v = y - k * s
    c2 = float(np.cos(params.theta_d)) ** 2
    s1 = _sawtooth_sum(u) + _sawtooth_sum(v)
    c2sum = _bernoulli2_sum(u) + _bernoulli2_sum(v)
    s3 = _bernoulli3_sum(u) + _bernoulli3_sum(v)
    out = 1.0 + 1.5 * ((3.0 * c2 - 1.0) * (s3 / y**3 - c2sum / y**2) + (1.0 - c2) * s1 / y)
    return params.gamma * out


def bloch_decay_matrix(
    params: PlatformParams, k: np.ndarray, p_max: int
) -> np.ndarray:
    """Two-sublattice Bloch decay matrix, shape ``(..., 2, 2)``.

    Diagnostic companion to the scalar profile: assembles the full
    :math:`2 \\times 2` momentum-space decay matrix from the decay families
    with the same cell-phase convention as the Bloch Hamiltonian, without
    the sublattice-decoupling approximation.  Entry ``[0, 0]`` is the
    same-sublattice profile ``gamma + 2 sum_p g_same cos(k p a)``; entry
    ``[0, 1]`` is ``sum_p (g_inter e^{i k p a} + g_intra e^{-i k (p-1)
    a})``.  The matrix is Hermitian and positive semidefinite in the
    infinite-range limit; sharp truncation can leave slightly negative
    eigenvalues near light lines.
    """
    k = np.asarray(k, dtype=float)
    g_intra, g_inter, g_same = decay_families(params, p_max)
    p = np.arange(1, p_max + 1)
    ka = k[..., None] * params.a
    diag = params.gamma + 2.0 * (np.cos(ka * p) @ g_same)
    off = np.exp(1j * ka * p) @ g_inter + np.exp(-1j * ka * (p - 1)) @ g_intra
    out = np.empty(k.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = diag
    out[..., 1, 1] = diag
    out[..., 0, 1] = off
    out[..., 1, 0] = np.conj(off)
    return out


# ---------------------------------------------------------------------------
# effective rates from dissipative runs


def effective_decay_rate(
    trajectory: PumpTrajectory, n_cycles: int = 1, floor: float = 1e-12
) -> float:
    """Fitted decay rate of a dissipative run.

    Least-squares slope of ``-ln ||psi(t)||^2`` over the first ``n_cycles``
    cycles of the trajectory.  Hermitian runs give zero up to integrator
    rounding; uniform independent decay at rate ``gamma`` gives exactly
    ``gamma``.  Compare against :func:`weighted_decay_prediction` for the
    packet-weighted profile estimate.

    Once the squared norm falls below ``floor`` times its initial value it
    carries no signal (rounding noise scattered into dark modes dominates),
    so the fit window is truncated at the first crossing with a warning.
    """
    stop = min(n_cycles * trajectory.steps_per_cycle, trajectory.times.shape[0] - 1)
    t = trajectory.times[: stop + 1]
    n = trajectory.norm_sq[: stop + 1]
    alive = n > floor * n[0]
    if not alive.all():
        cut = int(np.argmin(alive))
        if cut < 2:
            raise ValueError("norm reached numerical zero before a fit window formed")
        warnings.warn(
            f"norm fell below {floor:.1e} of its initial value at t = "
            f"{t[cut]:.6g}; decay fit truncated to {cut} of {stop + 1} samples",
            stacklevel=2,
        )
        t, n = t[:cut], n[:cut]
    slope, _ = np.polyfit(t - t[0], -np.log(n), 1)
    return float(slope)


def weighted_decay_prediction(
    spec: WavePacketSpec,
    profile: np.ndarray,
    k_grid: np.ndarray,
    cell_length: float,
) -> float:
    """Packet-weighted mean of a momentum decay profile.

    ``sum_k |f(k)|^2 Gamma(k) / sum_k |f(k)|^2`` on the given grid, the
    profile estimate of the effective decay rate of a packet with momentum
    weights ``|f(k)|^2``.  Normalizing by the weight sum makes the estimate
    independent of the packet-weight normalization convention.
    """
    f_sq = gaussian_weights(spec, np.asarray(k_grid, dtype=float), cell_length) ** 2
    total = float(np.sum(f_sq))
    if total == 0.0:
        raise ValueError("packet weights vanish on this grid")
    return float(np.sum(f_sq * np.asarray(profile, dtype=float)) / total)
