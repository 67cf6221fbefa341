"""Berry geometry of a pump cycle on the (time, momentum) torus.

The cycle's lower (or upper) Bloch band defines a map from the torus
``(t, k)`` to normalized two-component eigenvectors.  Its geometry is
discretized with the plaquette link-product method: each grid cell is
assigned the phase of the product of the four normalized link overlaps
around it, which is exactly gauge invariant and sums to an integer Chern
number by construction.

Sign conventions (fixed throughout the package, anchored so that the
displacement predicted from the curvature matches the center-of-mass drift
of a Schrödinger-evolved packet, sign included):

* plaquette phase ``F(i, j) = arg[ U_t(i,j) U_k(i+1,j) conj(U_t(i,j+1))
  conj(U_k(i,j)) ]``, with ``U_mu(x) = <u(x)|u(x + mu)> / |...|``; this makes
  ``F ~ Omega dt dk`` with ``Omega = 2 Im <d_t u | d_k u>``.
* Berry phase ``gamma(k_j) = arg prod_i U_t(i, j)`` (phase of the closed
  Wilson loop in time at fixed momentum), principal valued in (-pi, pi].
* ``chern = (1/2pi) sum F``; ``W(k_j) = sum_i F(i, j) / dk`` is the
  time-integrated curvature, satisfying ``W = -d gamma / dk`` between branch
  wraps and the torus identity ``sum_j W_j dk = 2 pi chern``.
* predicted pump displacement per cycle for a packet with momentum weights
  ``|f(k)|^2``, normalized to ``sum |f|^2 dk = 2 pi / a``:
  ``dx = (a / 2 pi) sum_j |f(k_j)|^2 W_j dk``; uniform weights give exactly
  ``a * chern``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cycles import ParameterCycle
from .errors import GridError
from .ricemele import band_vectors, brillouin_grid

__all__ = [
    "BerryField",
    "band_vectors_grid",
    "curvature_from_vectors",
    "berry_curvature_grid",
    "stable_berry_field",
    "berry_phase_profile",
    "berry_phase_winding",
    "integrated_curvature",
    "predicted_displacement",
    "flatness_metric",
    "detect_discontinuities",
]


@dataclass
class BerryField:
    """Discretized Berry geometry of one band over one pump cycle.

    Attributes
    ----------
    omega : ndarray, shape (m_t, m_k)
        Curvature density per cell, plaquette phase / (dt * dk).
    gamma_k : ndarray, shape (m_k,)
        Berry phase of the cycle at each grid momentum, radians in (-pi, pi].
    w_k : ndarray, shape (m_k,)
        Time-integrated curvature (length units).
    chern : int
    chern_residual : float
        Distance of the plaquette sum / 2 pi from the nearest integer;
        only floating-point noise for an admissible grid.
    t_grid, k_grid : ndarray
        Cell corners; uniform, periodic (end points not repeated).
    band : str
    cell_length, period : float
    """

    omega: np.ndarray
    gamma_k: np.ndarray
    w_k: np.ndarray
    chern: int
    chern_residual: float
    t_grid: np.ndarray
    k_grid: np.ndarray
    band: str
    cell_length: float
    period: float

    @property
    def m_t(self) -> int:
        return self.omega.shape[0]

    @property
    def m_k(self) -> int:
        return self.omega.shape[1]

    @property
    def dt(self) -> float:
        return self.period / self.m_t

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / (self.cell_length * self.m_k)


def _k_links(u: np.ndarray) -> np.ndarray:
    link = np.einsum("ks,ks->k", np.conj(u), np.roll(u, -1, axis=0))
    mag = np.abs(link)
    if np.any(mag == 0.0):
        raise GridError("neighboring eigenvectors orthogonal along k; refine the grid")
    return link / mag


def _curvature_core(rows, m_t: int, m_k: int, dt: float, dk: float,
                    t_grid: np.ndarray, k_grid: np.ndarray, cell_length: float):
    """Accumulate plaquette phases from an iterator of (m_k, 2) vector rows."""
    omega = np.empty((m_t, m_k))
    loop = np.ones(m_k, dtype=complex)
    it = iter(rows)
    first = next(it)
    prev = first
    uk_prev = _k_links(first)
    for i in range(m_t):
        nxt = next(it) if i < m_t - 1 else first
        ut = np.einsum("ks,ks->k", np.conj(prev), nxt)
        mag = np.abs(ut)
        if np.any(mag == 0.0):
            raise GridError("neighboring eigenvectors orthogonal along t; refine the grid")
        ut = ut / mag
        uk_next = _k_links(nxt)
        plaq = ut * uk_next * np.conj(np.roll(ut, -1)) * np.conj(uk_prev)
        f = np.angle(plaq)
        j = int(np.argmax(np.abs(f)))
        if abs(f[j]) > 0.5 * np.pi:
            raise GridError(
                f"grid too coarse: plaquette phase {f[j]:+.3f} rad at "
                f"k*a = {k_grid[j] * cell_length:+.4f}, t = {t_grid[i]:.4g} "
                f"(grid {m_t} x {m_k}); refine the grid or avoid the band touching"
            )
        omega[i] = f / (dt * dk)
        loop *= ut
        prev, uk_prev = nxt, uk_next
    return omega, loop


def _assemble_field(omega, loop, t_grid, k_grid, band, cell_length, period) -> BerryField:
    m_t, m_k = omega.shape
    dt = period / m_t
    dk = 2.0 * np.pi / (cell_length * m_k)
    total = float(np.sum(omega)) * dt * dk / (2.0 * np.pi)
    chern = int(np.round(total))
    return BerryField(
        omega=omega,
        gamma_k=np.angle(loop),
        w_k=np.sum(omega, axis=0) * dt,
        chern=chern,
        chern_residual=abs(total - chern),
        t_grid=t_grid,
        k_grid=k_grid,
        band=band,
        cell_length=cell_length,
        period=period,
    )


def band_vectors_grid(
    cycle: ParameterCycle,
    band: str = "lower",
    m_t: int = 256,
    m_k: int = 256,
    p_max: int | None = None,
) -> np.ndarray:
    """Band eigenvectors on the (t, k) grid, shape (m_t, m_k, 2)."""
    k = brillouin_grid(m_k, cycle.cell_length)
    t = cycle.period * np.arange(m_t) / m_t
    out = np.empty((m_t, m_k, 2), dtype=complex)
    for i, ti in enumerate(t):
        out[i] = band_vectors(cycle.hopping_set(ti, p_max=p_max), k, band)
    return out


def curvature_from_vectors(
    vectors: np.ndarray,
    cell_length: float = 1.0,
    period: float = 1.0,
    band: str = "lower",
) -> BerryField:
    """Berry field from an explicit eigenvector grid.

    The result depends only on the rays the vectors span: multiplying any
    grid point by an arbitrary phase (or scale) leaves every output
    unchanged, which makes this entry point the gauge-invariance witness for
    the whole discretization.
    """
    if vectors.ndim != 3 or vectors.shape[2] != 2:
        raise ValueError(f"expected vector grid of shape (m_t, m_k, 2), got {vectors.shape}")
    m_t, m_k = vectors.shape[:2]
    dt = period / m_t
    dk = 2.0 * np.pi / (cell_length * m_k)
    t_grid = period * np.arange(m_t) / m_t
    k_grid = brillouin_grid(m_k, cell_length)
    omega, loop = _curvature_core(iter(vectors), m_t, m_k, dt, dk, t_grid, k_grid, cell_length)
    return _assemble_field(omega, loop, t_grid, k_grid, band, cell_length, period)


def berry_curvature_grid(
    cycle: ParameterCycle,
    band: str = "lower",
    m_t: int = 256,
    m_k: int = 256,
    p_max: int | None = None,
) -> BerryField:
    """Berry field of a cycle's band on an ``m_t x m_k`` torus grid.

    Eigenvector rows are generated on the fly (closed-form Bloch vectors),
    so memory stays ``O(m_t * m_k)`` for the curvature samples themselves.
    """
    cell_length = cycle.cell_length
    period = cycle.period
    k_grid = brillouin_grid(m_k, cell_length)
    t_grid = period * np.arange(m_t) / m_t
    dt = period / m_t
    dk = 2.0 * np.pi / (cell_length * m_k)

    def rows():
        for ti in t_grid:
            yield band_vectors(cycle.hopping_set(ti, p_max=p_max), k_grid, band)

    omega, loop = _curvature_core(rows(), m_t, m_k, dt, dk, t_grid, k_grid, cell_length)
    return _assemble_field(omega, loop, t_grid, k_grid, band, cell_length, period)


def stable_berry_field(
    cycle: ParameterCycle,
    band: str = "lower",
    m_t: int = 256,
    m_k: int = 256,
    p_max: int | None = None,
    max_size: int = 4096,
) -> BerryField:
    """Berry field at successively doubled resolution until the Chern number
    repeats; returns the finer of the two agreeing fields."""
    field = berry_curvature_grid(cycle, band, m_t, m_k, p_max)
    while True:
        if 2 * m_t > max_size or 2 * m_k > max_size:
            raise GridError(
                f"Chern number did not stabilize below grid size {max_size}"
            )
        m_t, m_k = 2 * m_t, 2 * m_k
        finer = berry_curvature_grid(cycle, band, m_t, m_k, p_max)
        if finer.chern == field.chern:
            return finer
        field = finer


def berry_phase_profile(
    cycle: ParameterCycle,
    band: str = "lower",
    k_grid: np.ndarray | None = None,
    m_t: int = 256,
    p_max: int | None = None,
) -> np.ndarray:
    """Berry phase ``gamma(k)`` of one cycle at each requested momentum.

    Accepts an arbitrary momentum array (defaults to a 256-point zone grid);
    each value is the phase of the closed Wilson loop in time, principal
    valued in (-pi, pi].
    """
    if k_grid is None:
        k_grid = brillouin_grid(256, cycle.cell_length)
    k_grid = np.atleast_1d(np.asarray(k_grid, dtype=float))
    t = cycle.period * np.arange(m_t) / m_t
    loop = np.ones(k_grid.shape[0], dtype=complex)
    first = band_vectors(cycle.hopping_set(t[0], p_max=p_max), k_grid, band)
    prev = first
    for i in range(m_t):
        nxt = (
            band_vectors(cycle.hopping_set(t[i + 1], p_max=p_max), k_grid, band)
            if i < m_t - 1
            else first
        )
        ut = np.einsum("ks,ks->k", np.conj(prev), nxt)
        mag = np.abs(ut)
        if np.any(mag == 0.0):
            raise GridError("neighboring eigenvectors orthogonal along t; refine the grid")
        loop *= ut / mag
        prev = nxt
    return np.angle(loop)


def berry_phase_winding(field: BerryField) -> int:
    """Net winding of ``gamma(k)`` across the zone, in units of ``-2 pi``.

    Equals the Chern number whenever the grid resolves every branch of
    ``gamma`` (the continued phase drops by ``2 pi chern`` over the zone).
    """
    g = field.gamma_k
    steps = np.angle(np.exp(1j * (np.roll(g, -1) - g)))
    return int(np.round(-np.sum(steps) / (2.0 * np.pi)))


def integrated_curvature(field: BerryField) -> np.ndarray:
    """Time-integrated curvature ``W(k_j) = sum_i F(i, j) / dk``."""
    return field.omega.sum(axis=0) * field.dt


def predicted_displacement(field: BerryField, f_sq: np.ndarray | None = None) -> float:
    """Pump displacement per cycle for momentum weights ``|f(k)|^2``.

    ``f_sq`` must be sampled on the field's momentum grid and normalized to
    ``sum |f|^2 dk = 2 pi / a`` (checked to 1e-6 relative); None means
    uniform band filling, for which the result is ``a * chern`` up to the
    curvature residual.
    """
    dk = field.dk
    a = field.cell_length
    if f_sq is None:
        f_sq = np.ones(field.m_k)
    f_sq = np.asarray(f_sq, dtype=float)
    if f_sq.shape != (field.m_k,):
        raise ValueError(f"f_sq must have shape ({field.m_k},), got {f_sq.shape}")
    norm = np.sum(f_sq) * dk
    target = 2.0 * np.pi / a
    if abs(norm - target) > 1e-6 * target:
        raise ValueError(
            f"momentum weights not normalized: sum |f|^2 dk = {norm:.8g}, "
            f"expected 2 pi / a = {target:.8g}"
        )
    return float(a / (2.0 * np.pi) * np.sum(f_sq * field.w_k) * dk)


def flatness_metric(
    w_k: np.ndarray,
    k_grid: np.ndarray | None = None,
    support: tuple[float, float] | None = None,
) -> float:
    """Relative spread ``(max - min)/|mean|`` of ``W`` over a momentum window.

    ``support`` is an inclusive interval ``(k_lo, k_hi)``; omitting it (or
    the grid) uses every sample.  Zero for constant ``W``; for ``W`` linear
    with slope ``s`` over a window of width ``w`` it equals ``s w / |mean|``.
    """
    w_k = np.asarray(w_k, dtype=float)
    if support is not None:
        if k_grid is None:
            raise ValueError("support interval requires the momentum grid")
        k_grid = np.asarray(k_grid, dtype=float)
        lo, hi = min(support), max(support)
        sel = w_k[(k_grid >= lo) & (k_grid <= hi)]
        if sel.size == 0:
            raise ValueError(f"no grid momenta inside support ({lo:.4g}, {hi:.4g})")
    else:
        sel = w_k
    mean = np.mean(sel)
    if mean == 0.0:
        return np.inf
    return float((np.max(sel) - np.min(sel)) / abs(mean))


def detect_discontinuities(
    w_k: np.ndarray,
    k_grid: np.ndarray,
    factor: float = 10.0,
    window: int = 5,
) -> np.ndarray:
    """Momenta where ``W`` jumps abnormally between neighboring samples.

    A cell boundary is flagged when the step ``|W_{j+1} - W_j|`` exceeds
    ``factor`` times the median step over the ``window`` cells on either side
    of it.  Returns the midpoint momenta of the flagged cells (the zone-wrap
    cell included), sorted.
    """
    w_k = np.asarray(w_k, dtype=float)
    k_grid = np.asarray(k_grid, dtype=float)
    m = w_k.shape[0]
    if m < 2 * window + 2:
        raise GridError(f"need at least {2 * window + 2} samples, got {m}")
    d = np.abs(np.roll(w_k, -1) - w_k)
    floor = 1e-12 * max(np.max(d), 1e-300)
    hits = []
    for j in range(m):
        neigh = np.concatenate([
            d[(j - np.arange(1, window + 1)) % m],
            d[(j + np.arange(1, window + 1)) % m],
        ])
        scale = max(float(np.median(neigh)), floor)
        if d[j] > factor * scale:
            hits.append(j)
    dk = float(k_grid[1] - k_grid[0])
    mids = np.array([k_grid[j] + 0.5 * dk for j in hits])
    return np.sort(mids)
