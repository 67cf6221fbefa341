"""Extended Rice-Mele chains: Bloch theory and open-chain Hamiltonians.

A dimerized two-sublattice chain with hoppings of every range is summarized
by three rate families indexed by the cell distance ``p >= 1``:

* ``j_intra[p-1]`` -- odd-neighbour rate within the primed family,
  connecting ``A_q`` to ``B_{q+p-1}`` (the ``p = 1`` member is the in-cell
  bond).
* ``j_inter[p-1]`` -- odd-neighbour rate of the unprimed family,
  connecting ``B_q`` to ``A_{q+p}``.
* ``j_same[p-1]`` -- even-neighbour rate between like sublattices,
  ``A_q`` to ``A_{q+p}`` and ``B_q`` to ``B_{q+p}``.

together with a staggered sublattice splitting ``delta`` (``+delta`` on A,
``-delta`` on B).  The Bloch matrix is

    h(k) = [[n0(k) + delta, n(k)], [conj(n(k)), n0(k) - delta]]

with ``n0(k) = 2 sum_p j_same[p] cos(k p a)`` and
``n(k) = sum_p ( j_inter[p] e^{+i k p a} + j_intra[p] e^{-i k (p-1) a} )``
(1-based ``p``).  Bands are ``n0 +/- sqrt(|n|^2 + delta^2)``.

All energies are rates (hbar = 1).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import GapClosureError, GridError
from .platforms import (
    PlatformParams,
    CouplingMatrices,
    ChainGeometry,
    helix_bloch_coefficients,
    hopping_families,
)

__all__ = [
    "HoppingSet",
    "ExtendedRates",
    "GapResiduals",
    "brillouin_grid",
    "bloch_terms",
    "bloch_matrix",
    "band_energies",
    "band_vectors",
    "minimum_gap",
    "extended_rates",
    "gap_residuals",
    "build_hamiltonian",
    "classify_hoppings",
    "winding_number",
]


@dataclass(frozen=True, eq=False)
class HoppingSet:
    """Hopping-rate families of an extended Rice-Mele chain.

    The three arrays share one length ``p_max`` (ranges beyond it are
    dropped).  The Bloch-analysis convention for a chain of ``n`` sites is
    ``p_max = n // 4``, which keeps every retained range shorter than half
    the chain; real-space Hamiltonians may carry the full set instead.

    ``resummed``, when present, holds the helix resummation coefficients
    ``(c, s)`` of :func:`topopump.platforms.helix_bloch_coefficients`.  The
    family arrays then describe rates that do not decay with distance, their
    one-sided Bloch sums do not converge under sharp truncation, and every
    momentum-space quantity uses the closed form
    ``n(k) = (c e^{i k a} + s)/cos(k a)`` instead.  Real-space assembly and
    the alternating extended-rate sums keep using the arrays (the latter
    agree with the closed form at the zone edge for cutoffs of 1 mod 4).
    """

    j_intra: np.ndarray
    j_inter: np.ndarray
    j_same: np.ndarray
    delta: float = 0.0
    cell_length: float = 1.0
    resummed: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("j_intra", "j_inter", "j_same"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        if not (self.j_intra.shape == self.j_inter.shape == self.j_same.shape):
            raise ValueError("hopping families must share one length")
        if self.cell_length <= 0:
            raise ValueError("cell_length must be positive")
        if self.resummed is not None:
            c, s = self.resummed
            object.__setattr__(self, "resummed", (float(c), float(s)))

    @property
    def p_max(self) -> int:
        return self.j_intra.shape[0]

    @classmethod
    def from_platform(
        cls,
        params: PlatformParams,
        delta: float = 0.0,
        p_max: int = 1,
    ) -> "HoppingSet":
        """Closed-form families of an ideal platform chain, ranges 1..p_max."""
        j_intra, j_inter, j_same = hopping_families(params, p_max)
        return cls(
            j_intra, j_inter, j_same, delta=float(delta), cell_length=params.a,
            resummed=helix_bloch_coefficients(params),
        )

    def truncated(self, p_max: int) -> "HoppingSet":
        """Copy keeping only ranges ``p <= p_max`` (zero-padded if longer)."""
        def cut(a):
            out = np.zeros(p_max)
            out[: min(p_max, a.shape[0])] = a[: min(p_max, a.shape[0])]
            return out

        return HoppingSet(
            cut(self.j_intra), cut(self.j_inter), cut(self.j_same),
            delta=self.delta, cell_length=self.cell_length, resummed=self.resummed,
        )


def bloch_p_max(n_sites: int) -> int:
    """Range cutoff used for Bloch-space analysis of an ``n_sites`` chain."""
    return max(1, n_sites // 4)


def brillouin_grid(n_k: int, cell_length: float = 1.0) -> np.ndarray:
    """Uniform momentum grid over the first Brillouin zone.

    ``n_k`` points ``k_j = -pi/a + j * 2 pi / (a n_k)``, ``j = 0 .. n_k - 1``;
    the right edge ``+pi/a`` is the periodic image of the first point and is
    not repeated.
    """
    if n_k < 2:
        raise GridError(f"momentum grid needs at least 2 points, got {n_k}")
    g = 2.0 * np.pi / cell_length
    return -g / 2.0 + g * np.arange(n_k) / n_k


def bloch_terms(hs: HoppingSet, k) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal term ``n0(k)`` and off-diagonal term ``n(k)`` of the Bloch matrix.

    A resummed set evaluates ``n`` by its closed form (poles at the light
    lines ``k a = +/- pi/2``); otherwise both terms are the range-truncated
    lattice sums.
    """
    k = np.asarray(k, dtype=float)
    if hs.resummed is not None:
        c, s = hs.resummed
        ka = k * hs.cell_length
        n = (c * np.exp(1j * ka) + s) / np.cos(ka)
        return np.zeros(np.shape(k)), n
    p = np.arange(1, hs.p_max + 1)
    phase = np.multiply.outer(k, p) * hs.cell_length  # (..., P)
    n0 = 2.0 * np.cos(phase) @ hs.j_same
    n = np.exp(1j * phase) @ hs.j_inter + np.exp(-1j * (phase - k[..., None] * hs.cell_length)) @ hs.j_intra
    return n0, n


def bloch_matrix(hs: HoppingSet, k) -> np.ndarray:
    """Bloch matrix ``h(k)``, shape ``k.shape + (2, 2)``."""
    n0, n = bloch_terms(hs, k)
    h = np.empty(np.shape(n0) + (2, 2), dtype=complex)
    h[..., 0, 0] = n0 + hs.delta
    h[..., 1, 1] = n0 - hs.delta
    h[..., 0, 1] = n
    h[..., 1, 0] = np.conj(n)
    return h


def band_energies(hs: HoppingSet, k) -> np.ndarray:
    """Band energies, shape ``k.shape + (2,)`` ordered (lower, upper)."""
    n0, n = bloch_terms(hs, k)
    r = np.sqrt(np.abs(n) ** 2 + hs.delta**2)
    return np.stack([n0 - r, n0 + r], axis=-1)


def band_vectors(hs: HoppingSet, k, band: str = "lower") -> np.ndarray:
    """Normalized Bloch eigenvectors, shape ``k.shape + (2,)``.

    Uses a closed form whose branch is picked by the sign of ``delta`` so the
    vectors are smooth in ``k`` away from gap closures (no eigensolver phase
    jitter); raises GapClosureError on an exact band touching.
    """
    if band not in ("lower", "upper"):
        raise ValueError(f"band must be 'lower' or 'upper', got {band!r}")
    _, n = bloch_terms(hs, np.asarray(k, dtype=float))
    r = np.sqrt(np.abs(n) ** 2 + hs.delta**2)
    v = np.empty(np.shape(n) + (2,), dtype=complex)
    if hs.delta >= 0.0:
        v[..., 0] = -n
        v[..., 1] = hs.delta + r
    else:
        v[..., 0] = hs.delta - r
        v[..., 1] = np.conj(n)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0.0):
        raise GapClosureError("band touching: eigenvector undefined at some k")
    v /= norm[..., None]
    if band == "upper":
        v = np.stack([-np.conj(v[..., 1]), np.conj(v[..., 0])], axis=-1)
    return v


def minimum_gap(hs: HoppingSet, n_k: int = 512) -> tuple[float, float]:
    """Smallest direct band gap on a uniform momentum grid; returns (gap, k)."""
    k = brillouin_grid(n_k, hs.cell_length)
    _, n = bloch_terms(hs, k)
    gap = 2.0 * np.sqrt(np.abs(n) ** 2 + hs.delta**2)
    j = int(np.argmin(gap))
    return float(gap[j]), float(k[j])


class ExtendedRates(NamedTuple):
    """Alternating-sum reductions of the odd hopping families."""

    j_intra_bar: float
    j_inter_bar: float
    delta_j_bar: float


def extended_rates(hs: HoppingSet) -> ExtendedRates:
    """Alternating sums ``sum_p (-1)^(p+1) j`` of both odd families.

    Their difference ``delta_j_bar`` equals ``n(pi/a)`` and controls the
    direct gap at the zone edge: the bands touch there exactly when both
    ``delta_j_bar`` and ``delta`` vanish.
    """
    alt = (-1.0) ** np.arange(hs.p_max)
    jp = float(alt @ hs.j_intra)
    ju = float(alt @ hs.j_inter)
    return ExtendedRates(j_intra_bar=jp, j_inter_bar=ju, delta_j_bar=jp - ju)


class GapResiduals(NamedTuple):
    """Distances from gap closure at the two high-symmetry momenta."""

    res_pi: float
    res_zero: float
    delta: float


def gap_residuals(hs: HoppingSet) -> GapResiduals:
    """``|n(k)|`` at the zone edge and zone centre, plus the splitting.

    The spectrum is gapless at ``k = pi/a`` iff ``res_pi = delta = 0`` and at
    ``k = 0`` iff ``res_zero = delta = 0``.
    """
    _, n_edge = bloch_terms(hs, np.pi / hs.cell_length)
    _, n_zero = bloch_terms(hs, 0.0)
    return GapResiduals(
        res_pi=float(np.abs(n_edge)),
        res_zero=float(np.abs(n_zero)),
        delta=float(hs.delta),
    )


# ---------------------------------------------------------------------------
# open-chain Hamiltonians


@functools.lru_cache(maxsize=8)
def _hopping_slot_map(n_sites: int) -> np.ndarray:
    """Slot index of every ``[i, j]`` entry in the per-step rate table.

    Slot layout for ``P = n_sites // 2``: 0 holds zero, ``1..P`` the intra
    rates, ``P+1..2P`` the inter rates, ``2P+1..3P`` the same-sublattice
    rates, ``3P+1`` and ``3P+2`` the +/- staggered splitting.  A site-index
    offset ``|i - j| = 2p - 1`` is an intra bond of range ``p`` when the
    lower site is even (sublattice A) and an inter bond otherwise;
    ``|i - j| = 2p`` is a same-sublattice bond of range ``p``.
    """
    big_p = n_sites // 2
    i = np.arange(n_sites)
    d = np.abs(i[:, None] - i[None, :])
    low_parity = np.minimum(i[:, None], i[None, :]) % 2
    odd_slot = (d + 1) // 2 + np.where(low_parity == 0, 0, big_p)
    even_slot = np.where(d == 0, 3 * big_p + 1 + i[:, None] % 2, 2 * big_p + d // 2)
    return np.where(d % 2 == 1, odd_slot, even_slot).astype(np.int32)


def _hamiltonian_from_hoppings(hs: HoppingSet, n_sites: int) -> np.ndarray:
    if n_sites < 4 or n_sites % 2:
        raise ValueError(f"n_sites must be even and >= 4, got {n_sites}")
    big_p = n_sites // 2
    table = np.zeros(3 * big_p + 3)
    m = min(hs.p_max, big_p)
    table[1 : 1 + m] = hs.j_intra[:m]
    table[big_p + 1 : big_p + 1 + m] = hs.j_inter[:m]
    table[2 * big_p + 1 : 2 * big_p + 1 + m] = hs.j_same[:m]
    table[3 * big_p + 1] = hs.delta
    table[3 * big_p + 2] = -hs.delta
    return table.take(_hopping_slot_map(n_sites))


def build_hamiltonian(
    source,
    n_sites: int | None = None,
    delta: float | None = None,
) -> np.ndarray:
    """Single-excitation Hamiltonian of an open chain, sites A0 B0 A1 B1 ...

    Parameters
    ----------
    source : HoppingSet, CouplingMatrices or ndarray
        A HoppingSet is laid out bond family by bond family (every range the
        set carries; pass the full-length set for an exact long-range chain).
        A coupling matrix (or its exchange part) is used as-is, with the
        staggered splitting added on the diagonal.
    n_sites : int
        Required for a HoppingSet source; inferred otherwise.
    delta : float
        Staggered splitting override; for a HoppingSet source defaults to the
        set's own value, otherwise to 0.
    """
    if isinstance(source, HoppingSet):
        if n_sites is None:
            raise ValueError("n_sites is required when building from a HoppingSet")
        hs = source
        if delta is not None and delta != hs.delta:
            hs = HoppingSet(hs.j_intra, hs.j_inter, hs.j_same,
                            delta=float(delta), cell_length=hs.cell_length)
        return _hamiltonian_from_hoppings(hs, n_sites)
    v = source.v if isinstance(source, CouplingMatrices) else np.asarray(source, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {v.shape}")
    if n_sites is not None and n_sites != v.shape[0]:
        raise ValueError(f"n_sites = {n_sites} does not match matrix size {v.shape[0]}")
    n = v.shape[0]
    h = v.astype(float).copy()
    d = 0.0 if delta is None else float(delta)
    if d:
        stagger = np.where(np.arange(n) % 2 == 0, d, -d)
        h[np.diag_indices(n)] += stagger
    return h


def classify_hoppings(
    source,
    geometry: ChainGeometry | None = None,
    delta: float = 0.0,
    tol: float = 1e-9,
    p_max: int | None = None,
) -> HoppingSet:
    """Extract hopping families from an assembled coupling matrix.

    Reads the bonds of a cell block far from both chain ends and checks that
    interior cells agree with it to relative tolerance ``tol`` (translation
    invariance; positional disorder breaks this, in which case classification
    is refused).

    Parameters
    ----------
    source : CouplingMatrices or ndarray
    geometry : ChainGeometry, optional
        Supplies the unit-cell length; defaults to 1.
    delta : float
        Splitting recorded on the returned set (coupling matrices carry none).
    p_max : int, optional
        Number of ranges to keep; defaults to ``n_sites // 4``.
    """
    v = source.v if isinstance(source, CouplingMatrices) else np.asarray(source, dtype=float)
    n_sites = v.shape[0]
    if n_sites < 4 or n_sites % 2:
        raise ValueError(f"matrix must cover an even number >= 4 of sites, got {n_sites}")
    n_cells = n_sites // 2
    if p_max is None:
        p_max = bloch_p_max(n_sites)
    if p_max > n_cells - 1:
        raise ValueError(f"p_max = {p_max} too large for {n_cells} cells")
    cell_length = geometry.cell_length if geometry is not None else 1.0
    scale = np.max(np.abs(v))
    if scale == 0.0:
        raise ValueError("coupling matrix is identically zero")

    def families(q0: int) -> np.ndarray:
        p = np.arange(1, p_max + 1)
        return np.stack([
            v[2 * q0, 2 * (q0 + p - 1) + 1],   # intra: A_q0 -> B_{q0+p-1}
            v[2 * q0 + 1, 2 * (q0 + p)],       # inter: B_q0 -> A_{q0+p}
            v[2 * q0, 2 * (q0 + p)],           # same:  A_q0 -> A_{q0+p}
        ])

    q_ref = (n_cells - p_max) // 2
    ref = families(q_ref)
    for q0 in range(0, n_cells - p_max):
        dev = np.max(np.abs(families(q0) - ref))
        if dev > tol * scale:
            raise ValueError(
                f"couplings are not translation invariant (cell {q0} deviates "
                f"by {dev:.3e} relative {dev / scale:.3e}); cannot classify"
            )
    return HoppingSet(ref[0], ref[1], ref[2], delta=float(delta), cell_length=cell_length)


def winding_number(
    hs: HoppingSet,
    n_grid: int = 1024,
    max_doublings: int = 8,
    chiral_tol: float = 1e-12,
) -> int:
    """Winding of ``n(k)`` around the origin over the Brillouin zone.

    Defined only for chirally symmetric chains (``delta = 0`` and vanishing
    same-sublattice rates, checked to ``chiral_tol`` relative to the largest
    odd rate).  Accumulates principal-valued argument increments around the
    closed momentum loop, doubling the grid until two consecutive resolutions
    agree and the accumulated angle is an integer multiple of ``2 pi``.
    """
    if hs.delta != 0.0:
        raise ValueError("winding number requires delta = 0")
    scale = max(np.max(np.abs(hs.j_intra)), np.max(np.abs(hs.j_inter)))
    if scale == 0.0:
        raise GapClosureError("off-diagonal term vanishes identically")
    if np.max(np.abs(hs.j_same)) > chiral_tol * scale:
        raise ValueError("winding number requires vanishing same-sublattice rates")

    prev = None
    n_k = n_grid
    for _ in range(max_doublings + 1):
        k = brillouin_grid(n_k, hs.cell_length)
        _, n = bloch_terms(hs, k)
        if np.any(np.abs(n) == 0.0):
            raise GapClosureError("n(k) hits the origin: gap closed, winding undefined")
        steps = np.angle(np.roll(n, -1) / n)
        total = float(np.sum(steps))
        nu = int(np.round(total / (2.0 * np.pi)))
        ok = abs(total - 2.0 * np.pi * nu) < 1e-8
        if ok and prev == nu:
            return nu
        prev = nu if ok else None
        n_k *= 2
    raise GridError(
        f"winding number did not stabilize up to {n_k // 2} momentum points"
    )
