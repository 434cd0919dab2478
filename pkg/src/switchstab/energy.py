"""Transient energy function of the reduced post-switching system.

Potential energy relative to a stable equilibrium ``s``::

    PE = -sum_i P_i (d_i - s_i)
         - sum_{i<j} C_ij (cos d_ij - cos s_ij)
         + sum_{i<j} D_ij R_ij

where the transfer-conductance path integral is taken along the straight
line from ``s`` to ``d`` (the ray approximation)::

    R_ij = (sin d_ij - sin s_ij) (d_i + d_j - s_i - s_j) / (d_ij - s_ij)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import DynamicState, Trajectory
from .network import ReducedNetwork


@dataclass(frozen=True)
class EnergyValue:
    kinetic: float
    potential: float
    sep_label: str = ""

    @property
    def total(self) -> float:
        return self.kinetic + self.potential


def _angles(x):
    return np.asarray(x.delta if hasattr(x, "delta") else x, dtype=float)


def kinetic_energy(state: DynamicState, M) -> float:
    return 0.5 * float(np.asarray(M) @ (state.omega**2))


def potential_energy(state, sep, net: ReducedNetwork) -> float:
    return kernels.potential_energy(_angles(state), _angles(sep), net.P, net.C, net.D)


def total_energy(state: DynamicState, sep, net: ReducedNetwork, M, sep_label: str = "") -> EnergyValue:
    return EnergyValue(kinetic_energy(state, M), potential_energy(state, sep, net), sep_label)


@dataclass(frozen=True)
class EnergySeries:
    kinetic: np.ndarray
    potential: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.kinetic + self.potential

    def __getitem__(self, k) -> EnergyValue:
        return EnergyValue(float(self.kinetic[k]), float(self.potential[k]))


def energy_along_trajectory(traj: Trajectory, sep, net: ReducedNetwork, M) -> EnergySeries:
    ke = 0.5 * (traj.omega**2) @ np.asarray(M, dtype=float)
    pe = kernels.potential_energy_series(traj.delta, _angles(sep), net.P, net.C, net.D)
    return EnergySeries(ke, pe)
