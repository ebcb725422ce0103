"""Thermal model of parabolic-trough loops and lumped clusters of loops.

A loop's outlet temperature obeys

    C dT/dt = eta*S*I - q*P*(T - T_in) - h_loss

with the HTF properties (Therminol 55, ACUREX heat-loss fit) evaluated at
the mean of inlet and outlet temperature.  All functions here work on
python floats and broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# steam-generator offset and time constant of the inlet recirculation lag
INLET_OFFSET = 80.0
INLET_TAU = 600.0


@dataclass(frozen=True)
class LoopParams:
    eta: float = 0.6
    A: float = 5.067e-4
    L: float = 142.0
    S: float = 267.4

    def __post_init__(self):
        for name in ("eta", "A", "L", "S"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LoopParams.{name} must be positive")
        if self.eta > 1:
            raise ValueError("LoopParams.eta must not exceed 1")

    @property
    def volume(self) -> float:
        return self.A * self.L


@dataclass
class HtfProperties:
    rho: float
    c: float
    P: float
    C: float
    h_loss: float


@dataclass
class LoopState:
    t_out: float
    q_applied: float = 0.0

    def __post_init__(self):
        if self.q_applied < 0:
            raise ValueError("q_applied must be non-negative")


@dataclass
class FieldState:
    loops: list[LoopState]
    t_in: float
    t_out_mix: float


@dataclass
class ExogenousInputs:
    irradiance: np.ndarray
    t_ambient: float

    def __post_init__(self):
        self.irradiance = np.asarray(self.irradiance, dtype=float)
        if np.any(self.irradiance < 0):
            raise ValueError("irradiance must be non-negative")


def density(t_mean):
    return 903.0 - 0.672 * t_mean


def specific_heat(t_mean):
    return 1820.0 + 3.478 * t_mean


def heat_loss(t_mean, t_ambient, surface):
    dt = t_mean - t_ambient
    return surface * (0.00249 * dt * dt - 0.06133 * dt)


def htf_properties(t_mean: float, t_ambient: float, params: LoopParams) -> HtfProperties:
    rho = density(t_mean)
    c = specific_heat(t_mean)
    P = rho * c
    return HtfProperties(
        rho=rho,
        c=c,
        P=P,
        C=P * params.A * params.L,
        h_loss=heat_loss(t_mean, t_ambient, params.S),
    )


def euler_step(t_out, t_in, t_ambient, q, power, volume, surface, dt):
    """One explicit Euler step of the (possibly lumped) loop model.

    ``volume`` is the summed tube volume A*L and ``surface`` the summed
    reflective surface of the loops being modelled; ``power`` is the summed
    effective solar power eta*S*I and ``q`` the total flow.  With
    C = rho*c*volume and P = rho*c the flow term reduces to
    q*(T - T_in)/volume, independent of temperature.
    """
    t_mean = 0.5 * (t_out + t_in)
    capacity = density(t_mean) * specific_heat(t_mean) * volume
    losses = heat_loss(t_mean, t_ambient, surface)
    return (
        t_out
        + dt / capacity * (power - losses)
        - dt * q * (t_out - t_in) / volume
    )


def loop_step(
    state: LoopState,
    params: LoopParams,
    t_in: float,
    irradiance: float,
    t_ambient: float,
    dt: float,
) -> float:
    """Outlet temperature of one loop after ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    power = params.eta * params.S * irradiance
    return euler_step(
        state.t_out, t_in, t_ambient, state.q_applied, power, params.volume, params.S, dt
    )


def steady_state_flow(t_out, t_in, t_ambient, power, volume, surface):
    """Flow that makes dT/dt vanish (only meaningful when power exceeds losses)."""
    t_mean = 0.5 * (t_out + t_in)
    P = density(t_mean) * specific_heat(t_mean)
    return (power - heat_loss(t_mean, t_ambient, surface)) / (P * (t_out - t_in))


def inlet_step(t_in: float, t_out_mix: float, dt: float) -> float:
    return t_in + dt / INLET_TAU * ((t_out_mix - INLET_OFFSET) - t_in)


def mixed_outlet(t_outs, prev_flows) -> float:
    t_outs = np.asarray(t_outs, dtype=float)
    prev_flows = np.asarray(prev_flows, dtype=float)
    total = prev_flows.sum()
    if not total > 0:
        raise ValueError("degenerate mixing: total flow is zero")
    return float(prev_flows @ t_outs / total)


@dataclass
class ClusterModel:
    """Lumped model of a set of loops, frozen at one control instant."""

    members: tuple[int, ...]
    t0: float
    power: float
    volume: float
    surface: float
    t_in: float
    t_ambient: float
    q_min: float
    q_max: float

    @property
    def size(self) -> int:
        return len(self.members)

    def properties(self, t_out: float | None = None) -> HtfProperties:
        t = self.t0 if t_out is None else t_out
        t_mean = 0.5 * (t + self.t_in)
        rho = density(t_mean)
        c = specific_heat(t_mean)
        return HtfProperties(
            rho=rho,
            c=c,
            P=rho * c,
            C=rho * c * self.volume,
            h_loss=heat_loss(t_mean, self.t_ambient, self.surface),
        )

    def step(self, t_out: float, q: float, dt: float) -> float:
        return euler_step(
            t_out, self.t_in, self.t_ambient, q, self.power, self.volume, self.surface, dt
        )


def lump_cluster(
    members: Sequence[int],
    t_outs,
    params: Sequence[LoopParams],
    irradiance,
    t_in: float,
    t_ambient: float,
    prev_flows,
    q_min: float,
    q_max: float,
) -> ClusterModel:
    """Aggregate loops ``members`` into one lumped model.

    Power, volume and loss surface add up; the initial temperature is the
    flow-weighted mean of member outlets using the previously applied flows.
    """
    members = tuple(int(i) for i in members)
    if not members:
        raise ValueError("cannot lump an empty cluster")
    w = np.array([prev_flows[i] for i in members], dtype=float)
    if not w.sum() > 0:
        raise ValueError("degenerate mixing: cluster has zero previous flow")
    temps = np.array([t_outs[i] for i in members], dtype=float)
    n = len(members)
    t0 = float(w @ temps / w.sum()) if n > 1 else float(temps[0])
    power = sum(params[i].eta * params[i].S * irradiance[i] for i in members)
    volume = sum(params[i].volume for i in members)
    surface = sum(params[i].S for i in members)
    return ClusterModel(
        members=members,
        t0=t0,
        power=float(power),
        volume=float(volume),
        surface=float(surface),
        t_in=float(t_in),
        t_ambient=float(t_ambient),
        q_min=n * q_min,
        q_max=n * q_max,
    )
