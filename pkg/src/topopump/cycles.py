"""Time-periodic parameter cycles that drive a topological pump.

A pump cycle traces a closed loop in the ``(delta_j_bar, delta)`` plane: a
geometric control knob modulates the hopping imbalance while the sublattice
splitting ``delta`` is modulated in quadrature, so the loop encircles the
gapless point ``(0, 0)`` without touching it.

Two cycle families are provided: :class:`RiceMeleCycle` drives an abstract
nearest-neighbour chain directly through its rates, while
:class:`PlatformCycle` drives a physical platform through its geometry (the
in-cell offset ``b`` for atom chains, the azimuthal offset ``phi1p`` for the
waveguide).  Both share the interface consumed by the topology and dynamics
layers: ``hopping_set(t)``, ``hamiltonian(t, n_sites)``,
``gamma_matrix(t, n_sites)`` and ``reversed()``.
"""

from __future__ import annotations

import abc
import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import GapClosureError
from .platforms import (
    PlatformParams,
    build_chain,
    build_coupling_matrices,
    control_field,
    light_line_momenta,
    with_control,
)
from .ricemele import HoppingSet, bloch_terms, brillouin_grid, build_hamiltonian

__all__ = [
    "CosineRamp",
    "ParameterCycle",
    "RiceMeleCycle",
    "PlatformCycle",
    "cycle_min_gap",
    "cycle_trace",
]


@dataclass(frozen=True)
class CosineRamp:
    """Smooth periodic schedule ``x(theta) = mid + amp cos(theta + phase)``.

    ``theta = 2 pi t / T`` is the reduced cycle phase.  A cosine ramp starts
    and ends at the same value with zero endpoint slope mismatch, so cycles
    built from it are exactly periodic.
    """

    mid: float
    amp: float
    phase: float = 0.0

    def value(self, theta):
        return self.mid + self.amp * np.cos(theta + self.phase)

    def reversed(self) -> "CosineRamp":
        return dataclasses.replace(self, phase=-self.phase)


class ParameterCycle(abc.ABC):
    """Closed pump loop; concrete cycles define the rates at each time.

    Times are accepted over the whole real line (the loop repeats with the
    cycle period), so multi-cycle evolutions just keep integrating.
    """

    period: float
    cell_length: float
    p_max: int

    def theta(self, t) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(t, dtype=float) / self.period

    @abc.abstractmethod
    def delta(self, t):
        """Sublattice splitting at time ``t``."""

    @abc.abstractmethod
    def control_value(self, t):
        """Value of the modulated control knob at time ``t``."""

    @abc.abstractmethod
    def hopping_set(self, t: float, p_max: int | None = None) -> HoppingSet:
        """Hopping families at time ``t`` (default range cutoff ``self.p_max``)."""

    @abc.abstractmethod
    def full_p_max(self, n_sites: int) -> int:
        """Range cutoff that makes the real-space chain Hamiltonian exact."""

    @property
    def dissipative(self) -> bool:
        return False

    def hamiltonian(self, t: float, n_sites: int) -> np.ndarray:
        """Open-chain Hamiltonian at time ``t`` with every coupling range."""
        hs = self.hopping_set(t, p_max=self.full_p_max(n_sites))
        return build_hamiltonian(hs, n_sites=n_sites)

    def gamma_matrix(self, t: float, n_sites: int) -> np.ndarray | None:
        """Collective decay matrix at time ``t``; None for closed chains."""
        return None

    def light_lines(self) -> tuple[float, ...]:
        """|k| of retardation singularities inside the zone, if any."""
        return ()

    @abc.abstractmethod
    def reversed(self) -> "ParameterCycle":
        """The same loop traversed backwards (t -> T - t)."""

    def validate_periodic(self, tol: float = 1e-12) -> None:
        h0 = self.hopping_set(0.0)
        h1 = self.hopping_set(self.period)
        scale = max(
            np.max(np.abs(h0.j_intra)), np.max(np.abs(h0.j_inter)),
            np.max(np.abs(h0.j_same)), abs(h0.delta), 1e-300,
        )
        dev = max(
            np.max(np.abs(h0.j_intra - h1.j_intra)),
            np.max(np.abs(h0.j_inter - h1.j_inter)),
            np.max(np.abs(h0.j_same - h1.j_same)),
            abs(h0.delta - h1.delta),
        )
        if dev > tol * scale:
            raise ValueError(f"cycle is not periodic: endpoint deviation {dev:.3e}")


@dataclass(frozen=True)
class RiceMeleCycle(ParameterCycle):
    """Nearest-neighbour Rice-Mele pump driven directly through its rates.

    The hopping imbalance and the splitting follow
    ``delta_j_bar(t) = dj_amp cos(theta + phase)`` and
    ``delta(t) = delta_max cos(theta)``, with the two nearest-neighbour rates
    ``j_mean -/+ delta_j_bar/2`` (unprimed/primed).  The quarter-turn default
    ``phase`` makes the loop a circle around the gapless point, traversed so
    the lower band carries Chern number +1; negating the phase reverses the
    loop and flips the sign of the pumped displacement.
    """

    j_mean: float = 1.0
    dj_amp: float = 1.0
    delta_max: float = 1.0
    period: float = 1.0
    phase: float = np.pi / 2.0
    cell_length: float = 1.0
    p_max: int = 1

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.dj_amp == 0.0 or self.delta_max == 0.0:
            raise GapClosureError(
                "cycle degenerates to a line through the gapless point; "
                "both dj_amp and delta_max must be nonzero"
            )

    def delta(self, t):
        return self.delta_max * np.cos(self.theta(t))

    def delta_j_bar(self, t):
        return self.dj_amp * np.cos(self.theta(t) + self.phase)

    def control_value(self, t):
        return self.delta_j_bar(t)

    def hopping_set(self, t: float, p_max: int | None = None) -> HoppingSet:
        dj = float(self.delta_j_bar(t))
        hs = HoppingSet(
            j_intra=[self.j_mean + 0.5 * dj],
            j_inter=[self.j_mean - 0.5 * dj],
            j_same=[0.0],
            delta=float(self.delta(t)),
            cell_length=self.cell_length,
        )
        if p_max is not None and p_max != 1:
            hs = hs.truncated(p_max)
        return hs

    def full_p_max(self, n_sites: int) -> int:
        return 1

    def reversed(self) -> "RiceMeleCycle":
        return dataclasses.replace(self, phase=-self.phase)


@dataclass(frozen=True)
class PlatformCycle(ParameterCycle):
    """Pump cycle of a physical platform, driven through its geometry.

    ``control`` schedules the platform's control knob (``b`` or ``phi1p``)
    and ``delta_ramp`` the sublattice splitting.  ``p_max`` is the range
    cutoff used for Bloch-space analysis; real-space Hamiltonians always
    carry every range the chain supports.
    """

    params: PlatformParams
    control: CosineRamp
    delta_ramp: CosineRamp
    period: float
    p_max: int = 1

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "cell_length", self.params.a)

    @property
    def control_name(self) -> str:
        return control_field(self.params)

    def delta(self, t):
        return self.delta_ramp.value(self.theta(t))

    def control_value(self, t):
        return self.control.value(self.theta(t))

    def params_at(self, t: float) -> PlatformParams:
        return with_control(self.params, float(self.control_value(t)))

    def geometry_at(self, t: float, n_sites: int):
        return build_chain(self.params_at(t), n_sites)

    def hopping_set(self, t: float, p_max: int | None = None) -> HoppingSet:
        return HoppingSet.from_platform(
            self.params_at(t),
            delta=float(self.delta(t)),
            p_max=self.p_max if p_max is None else p_max,
        )

    def full_p_max(self, n_sites: int) -> int:
        return n_sites // 2

    @property
    def dissipative(self) -> bool:
        return getattr(self.params, "gamma", 0.0) > 0.0

    def gamma_matrix(self, t: float, n_sites: int) -> np.ndarray | None:
        if not self.dissipative:
            return None
        geom = self.geometry_at(t, n_sites)
        return build_coupling_matrices(self.params_at(t), geom, validate=False).gamma

    def light_lines(self) -> tuple[float, ...]:
        return light_line_momenta(self.params)

    def reversed(self) -> "PlatformCycle":
        return dataclasses.replace(
            self, control=self.control.reversed(), delta_ramp=self.delta_ramp.reversed()
        )


def cycle_trace(cycle: ParameterCycle, n_t: int = 256) -> dict[str, np.ndarray]:
    """Sampled loop coordinates over one period.

    Returns arrays ``t``, ``delta``, ``delta_j_bar``, ``control`` with
    ``n_t + 1`` samples (endpoints included, last repeats the first).
    """
    from .ricemele import extended_rates

    t = np.linspace(0.0, cycle.period, n_t + 1)
    dj = np.array([extended_rates(cycle.hopping_set(ti)).delta_j_bar for ti in t])
    return {
        "t": t,
        "delta": np.asarray(cycle.delta(t), dtype=float),
        "delta_j_bar": dj,
        "control": np.asarray(cycle.control_value(t), dtype=float),
    }


def cycle_min_gap(
    cycle: ParameterCycle,
    n_t: int = 128,
    n_k: int = 256,
    p_max: int | None = None,
) -> tuple[float, float, float]:
    """Smallest direct band gap over the cycle; returns ``(gap, t, k)``.

    The product of this gap with the period bounds the adiabaticity of a
    pump: slow driving needs ``gap * period >> 1``.
    """
    best = (np.inf, 0.0, 0.0)
    k = brillouin_grid(n_k, cycle.cell_length)
    for t in cycle.period * np.arange(n_t) / n_t:
        hs = cycle.hopping_set(t, p_max=p_max)
        _, n = bloch_terms(hs, k)
        gap = 2.0 * np.sqrt(np.abs(n) ** 2 + hs.delta**2)
        j = int(np.argmin(gap))
        if gap[j] < best[0]:
            best = (float(gap[j]), float(t), float(k[j]))
    return best
