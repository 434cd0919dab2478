"""COI-frame swing dynamics on the reduced network, trajectories and time-domain verdicts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .network import CaseData, SwitchingEvent, apply_switching, apply_bus_fault, build_ybus, kron_reduce, ReducedNetwork
from .powerflow import OperatingPoint

DEFAULT_DAMPING_RATIO = 0.05  # D_i / M_i in 1/s for time-domain verdicts


class IntegrationError(RuntimeError):
    def __init__(self, msg, t_blowup):
        super().__init__(msg)
        self.t_blowup = t_blowup


@dataclass(frozen=True)
class DynamicState:
    delta: np.ndarray  # rad, COI frame
    omega: np.ndarray  # rad/s, COI frame

    @classmethod
    def at_rest(cls, delta) -> "DynamicState":
        delta = np.asarray(delta, dtype=float)
        return cls(delta, np.zeros_like(delta))

    def as_vector(self) -> np.ndarray:
        return np.r_[self.delta, self.omega]


@dataclass(frozen=True)
class COIConstants:
    total_inertia: float
    weights: np.ndarray

    @classmethod
    def from_inertia(cls, M) -> "COIConstants":
        M = np.asarray(M, dtype=float)
        return cls(float(M.sum()), M / M.sum())


def to_coi(delta, omega, M) -> DynamicState:
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if delta.size < 2:
        raise ValueError("COI frame needs at least two machines")
    w = COIConstants.from_inertia(M).weights
    return DynamicState(delta - w @ delta, omega - w @ omega)


def from_coi(state: DynamicState, reference=(0.0, 0.0)):
    """Absolute angles and speeds given the COI angle and speed ``reference``."""
    d0, w0 = reference
    return state.delta + d0, state.omega + w0


def coi_project(delta, M) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return delta - (np.asarray(M) @ delta) / np.sum(M)


def damping_ratio_of(M, D) -> float:
    """Common D_i/M_i; the COI equations are exact only for a uniform ratio."""
    ratio = np.asarray(D, dtype=float) / np.asarray(M, dtype=float)
    if np.ptp(ratio) > 1e-12 * max(1.0, np.abs(ratio).max()):
        raise ValueError("non-uniform damping ratio D_i/M_i is not supported in the COI model")
    return float(ratio[0])


def rhs(state: DynamicState, net: ReducedNetwork, M, D=None):
    """Time derivatives ``(d delta/dt, d omega/dt)`` of the COI swing equations."""
    M = np.asarray(M, dtype=float)
    lam = 0.0 if D is None else damping_ratio_of(M, D)
    f = kernels.mismatch(state.delta, net.P, net.C, net.D, M)
    return state.omega.copy(), f / M - lam * state.omega


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    delta: np.ndarray  # (samples, n)
    omega: np.ndarray
    dt: float
    label: str = ""
    blowup_time: float | None = None

    def __len__(self):
        return len(self.t)

    def state(self, k: int) -> DynamicState:
        return DynamicState(self.delta[k].copy(), self.omega[k].copy())

    @property
    def final(self) -> DynamicState:
        return self.state(-1)


def integrate(x0: DynamicState, net: ReducedNetwork, M, T: float, dt: float,
              damping_ratio: float = 0.0, label: str = "", raise_on_blowup: bool = True) -> Trajectory:
    """Classical fixed-step RK4; one sample per step."""
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    nsteps = int(round(T / dt))
    deltas, omegas, done = kernels.rk4_swing(x0.delta, x0.omega, net.P, net.C, net.D, M, damping_ratio, dt, nsteps)
    blowup = None
    if done < nsteps:
        blowup = (done + 1) * dt
        if raise_on_blowup:
            raise IntegrationError(f"non-finite state at t={blowup:.4g} s", blowup)
    t = np.arange(len(deltas)) * dt
    return Trajectory(t, deltas, omegas, dt, label or net.label, blowup)


def sustained_fault_trajectory(start: DynamicState, faulted: ReducedNetwork, M,
                               T_max: float = 3.0, dt: float = 1e-3) -> Trajectory:
    """Undamped fault-on trajectory; a blow-up truncates it and is recorded, not raised."""
    return integrate(start, faulted, M, T_max, dt, 0.0, faulted.label, raise_on_blowup=False)


@dataclass(frozen=True)
class TdsVerdict:
    stable: bool
    t_loss: float | None = None
    max_separation: float = 0.0

    def __str__(self):
        return "Stable" if self.stable else "Unstable"


def tds_verdict(traj: Trajectory, threshold: float = 2 * np.pi) -> TdsVerdict:
    """Unstable iff the spread of COI angles exceeds ``threshold`` at any sample."""
    spread = traj.delta.max(axis=1) - traj.delta.min(axis=1)
    over = np.flatnonzero(spread > threshold)
    if traj.blowup_time is not None and not over.size:
        return TdsVerdict(False, traj.blowup_time, float(np.nanmax(spread)))
    if over.size:
        return TdsVerdict(False, float(traj.t[over[0]]), float(spread.max()))
    return TdsVerdict(True, None, float(spread.max()))


# --------------------------------------------------------------------------
# switching-event networks
# --------------------------------------------------------------------------

def initial_state(op: OperatingPoint) -> DynamicState:
    """Pre-switching SEP in COI coordinates; also the post-switching initial point."""
    return DynamicState.at_rest(coi_project(op.gens.delta, op.case.inertia))


def post_switching(op: OperatingPoint, event: SwitchingEvent | None) -> tuple[CaseData, ReducedNetwork]:
    if event is None:
        return op.case, op.network(label="pre-switching")
    case_post = apply_switching(op.case, event)
    return case_post, op.network(case_post, label=f"post({event.label})")


def faulted_network(op: OperatingPoint, case_post: CaseData, bus: int) -> ReducedNetwork:
    y = build_ybus(case_post, "as-shunts", voltages=op.pf.vm, label="post")
    yf = apply_bus_fault(y, bus, [g.bus for g in case_post.generators])
    return kron_reduce(yf, case_post, op.gens.emf_mag, op.gens.p_mech, label=f"fault@{bus}")


def simulate_switching(op: OperatingPoint, event: SwitchingEvent | None, T: float = 10.0, dt: float = 5e-3,
                       damping_ratio: float = DEFAULT_DAMPING_RATIO):
    """Post-switching trajectory from the pre-switching state, and its verdict."""
    _, net = post_switching(op, event)
    traj = integrate(initial_state(op), net, op.case.inertia, T, dt, damping_ratio, raise_on_blowup=False)
    return traj, tds_verdict(traj)
